#!/usr/bin/env python3
"""Trade-off study: optimal value vs. fairness budget across group splits.

Generates an income-style synthetic table over eight named features wired by
a causal graph, forms three two-group splits (age, country, education),
builds each group's projector from its own rows (top-5 singular directions),
fits the ground-truth rule from labels, then sweeps the fairness budget for
both objectives under the absolute- and squared-difference constraints and
three cost cases.  Emits one CSV per sweep and one SVG per panel.

Usage: python scripts/run_budget_sweeps.py [--out results] [--seed 0]
       [--rows 2000] [--points 20]
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import stratfair as sf
from stratfair import Objective
from stratfair.rng import derived_rng

FEATURES = ["sex", "age", "western", "married", "edu-num", "workclass", "occupation", "hours"]
DESIRABLE = ("edu-num", "workclass", "occupation")

# causal wiring between the named features (topologically ordered)
EDGES = [
    ("sex", "married"),
    ("sex", "occupation"),
    ("age", "married"),
    ("age", "edu-num"),
    ("age", "hours"),
    ("western", "edu-num"),
    ("married", "hours"),
    ("edu-num", "workclass"),
    ("edu-num", "occupation"),
    ("workclass", "hours"),
    ("occupation", "hours"),
]

SPLITS = {
    "age": sf.SplitRule("age", "le", 35.0),
    "country": sf.SplitRule("western", "in", frozenset([1.0])),
    "education": sf.SplitRule("edu-num", "ge", 9.0),
}

COST_CASES = ("uniform", "scaled", "random")


def synth_table(rows: int, seed: int) -> sf.TabularDataset:
    rng = derived_rng(seed, 1)
    sex = rng.integers(0, 2, rows).astype(float)
    age = rng.normal(38.0, 12.0, rows).clip(18, 80)
    western = rng.integers(0, 2, rows).astype(float)
    married = ((age - 25.0) / 30.0 + rng.normal(0, 0.6, rows) > 0.3).astype(float)
    edu = (8.0 + 0.06 * (age - 18) + 2.2 * western + rng.normal(0, 2.2, rows)).clip(1, 16)
    workclass = (edu / 4.0 + rng.normal(0, 0.8, rows)).clip(0, 6)
    occupation = (edu / 3.0 + sex + rng.normal(0, 1.0, rows)).clip(0, 9)
    hours = (34.0 + 1.2 * occupation + 2.0 * married + rng.normal(0, 6.0, rows)).clip(5, 90)
    score = 0.35 * (edu - 8) / 4 + 0.3 * (occupation - 4) / 3 + 0.25 * (hours - 40) / 15
    label = (score + rng.normal(0, 0.35, rows) > 0.0).astype(float)
    values = np.column_stack([sex, age, western, married, edu, workclass, occupation, hours])
    # standardize so no single raw scale dominates the projectors
    values = (values - values.mean(axis=0)) / values.std(axis=0)
    # keep the split columns interpretable on their raw scales
    raw = {"age": age, "western": western, "edu-num": edu}
    for name, column in raw.items():
        values[:, FEATURES.index(name)] = column
    return sf.TabularDataset(tuple(FEATURES), values, label)


def build_graph(seed: int) -> sf.CausalGraph:
    rng = derived_rng(seed, 2)
    index = {name: i for i, name in enumerate(FEATURES)}
    edges = tuple(
        (index[src], index[dst], float(rng.uniform(0.05, 0.4))) for src, dst in EDGES
    )
    return sf.CausalGraph(len(FEATURES), edges)


def cost_matrices(case: str, seed: int) -> tuple[np.ndarray, np.ndarray]:
    d = len(FEATURES)
    if case == "uniform":
        return np.eye(d), np.eye(d)
    if case == "scaled":
        return np.eye(d), 2.0 * np.eye(d)
    rng = derived_rng(seed, 3)
    g = rng.standard_normal((d, d))
    first = g @ g.T / d + 0.5 * np.eye(d)
    return first, 2.0 * first


def scenario_for_split(ds, graph, rule, cost_case, seed) -> sf.Scenario:
    first, second = sf.split_groups(ds, rule)
    a1, a2 = cost_matrices(cost_case, seed)
    groups = []
    for part, cost in ((first, a1), (second, a2)):
        projector = sf.projector_from_samples(part, k=5).matrix
        groups.append(sf.GroupParams(cost=cost, projector=projector,
                                     sampler=sf.GroupSampler(np.zeros(8), projector)))
    desirability = np.full(len(FEATURES), 1e-6)
    for name in DESIRABLE:
        desirability[FEATURES.index(name)] = 1.0
    return sf.Scenario(
        contribution=sf.build_contribution_matrix(graph),
        groups=(groups[0], groups[1]),
        desirability=desirability,
        ground_truth=sf.fit_ground_truth(ds),
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--rows", type=int, default=2000)
    parser.add_argument("--points", type=int, default=20)
    args = parser.parse_args(argv)

    out = Path(args.out)
    ds = synth_table(args.rows, args.seed)
    graph = build_graph(args.seed)
    started = time.monotonic()
    for cost_case in COST_CASES:
        scenarios = {
            name: scenario_for_split(ds, graph, rule, cost_case, args.seed)
            for name, rule in SPLITS.items()
        }
        for kind in ("l1", "l2"):
            for objective in (Objective.ACC, Objective.SW):
                sweeps = []
                for name, scenario in scenarios.items():
                    grid = sf.default_beta_grid(scenario, kind, objective, points=args.points)
                    res = sf.beta_sweep(
                        scenario, kind, grid, objective,
                        label=name, cost_case=cost_case, seed=args.seed,
                    )
                    sweeps.append(res)
                    sf.emit_csv(res, out / f"{cost_case}_{kind}_{objective.value}_{name}.csv")
                sf.emit_plot(
                    sweeps,
                    out / f"{cost_case}_{kind}_{objective.value}.svg",
                    title=f"{objective.value} vs budget ({kind}, {cost_case} costs)",
                )
                print(f"[{time.monotonic() - started:6.1f}s] {cost_case:8s} {kind} {objective.value}")
    print(f"wrote sweeps and panels under {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
