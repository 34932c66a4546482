#!/usr/bin/env python3
"""Regenerate the example scenario configurations under configs/."""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import stratfair as sf


def main() -> int:
    root = Path(__file__).resolve().parent.parent / "configs"
    bundle = sf.synth_generate(
        d=4, n_per_group=80, seed=42, knobs=sf.SynthKnobs(cost_case="scaled", desirable=(0, 1))
    )
    path = sf.write_config(root / "synthetic_d4.toml", bundle.graph, bundle.scenario,
                           fairness_kind="l1", beta=0.3)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
