"""Scenario and run configuration: a TOML file with nested sections.

Top-level keys (must precede any section header): ``dimension``,
``desirability`` (vector), ``ground_truth`` (vector or the string
``"fit:dataset"``), optional ``allow_zero_desirability``.  Sections:

- ``[graph]``: ``edges`` as a list of ``[source, target, weight]`` triples.
- ``[group1]`` / ``[group2]``: ``cost`` (row-major list of rows),
  ``projector_source`` (row-major matrix, or the string ``"svd:<k>"`` to
  build it from that group's dataset split), optional ``[groupN.sampler]``
  with ``mean`` and ``factor``.
- ``[dataset]``: ``path``, optional ``label``, and ``[[dataset.columns]]``
  entries with ``name``, ``kind`` (numeric | threshold | codes) and the
  matching ``threshold`` / ``codes`` payload.
- ``[split]``: ``column``, ``op`` (le | ge | in), ``value`` (or ``values``).
- ``[fairness]``: ``kind`` (l1 | l2 | asym | custom), ``beta``, optional
  ``privileged_group``, and for the custom kind ``f`` (expression) or
  ``f_points``/``f_values`` (tabulated), ``q`` (matrix), ``lipschitz``.

Matrices are row-major lists of rows throughout.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .experiments import (
    ColumnSpec,
    DatasetSchema,
    SplitRule,
    TabularDataset,
    fit_ground_truth,
    ingest_dataset,
    split_groups,
)
from .fairness import (
    ExpressionPenalty,
    FairnessKind,
    FairnessSpec,
    TabulatedPenalty,
    spec_for_scenario,
)
from .model import (
    CausalGraph,
    GroupParams,
    GroupSampler,
    Scenario,
    build_contribution_matrix,
    projector_from_samples,
)


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Everything a CLI run needs: the scenario plus fairness defaults."""

    scenario: Scenario
    fairness: FairnessSpec | None
    fairness_kind: FairnessKind | None
    privileged_group: int
    allow_zero_desirability: bool
    dataset: TabularDataset | None
    source_path: Path


def _matrix(raw, name: str, d: int) -> np.ndarray:
    try:
        m = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a row-major list of rows") from exc
    if m.shape != (d, d):
        raise ConfigError(f"{name} must be {d}x{d}, got {m.shape}")
    return m


def _vector(raw, name: str, d: int) -> np.ndarray:
    try:
        v = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of numbers") from exc
    if v.shape != (d,):
        raise ConfigError(f"{name} must have length {d}, got shape {v.shape}")
    return v


def _load_dataset(section: dict, base: Path) -> tuple[TabularDataset, DatasetSchema]:
    if "path" not in section:
        raise ConfigError("[dataset] needs a path")
    columns = []
    for raw in section.get("columns", []):
        codes = raw.get("codes")
        columns.append(
            ColumnSpec(
                name=raw["name"],
                kind=raw.get("kind", "numeric"),
                threshold=raw.get("threshold"),
                codes={str(k): float(v) for k, v in codes.items()} if codes else None,
            )
        )
    if not columns:
        raise ConfigError("[dataset] declares no columns")
    schema = DatasetSchema(columns=tuple(columns), label=section.get("label"))
    path = Path(section["path"])
    if not path.is_absolute():
        path = base / path
    return ingest_dataset(path, schema), schema


def _split_rule(section: dict) -> SplitRule:
    for key in ("column", "op"):
        if key not in section:
            raise ConfigError(f"[split] needs {key!r}")
    if "values" in section:
        value: float | frozenset = frozenset(float(v) for v in section["values"])
    elif "value" in section:
        value = float(section["value"])
    else:
        raise ConfigError("[split] needs value or values")
    return SplitRule(column=section["column"], op=section["op"], value=value)


def _group_projector(raw, d: int, group_rows: np.ndarray | None, which: str) -> np.ndarray:
    if isinstance(raw, str):
        if not raw.startswith("svd:"):
            raise ConfigError(f"{which}.projector_source string must look like 'svd:<k>'")
        try:
            k = int(raw.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"{which}.projector_source rank is not an integer") from exc
        if group_rows is None:
            raise ConfigError(f"{which}.projector_source needs [dataset] and [split] sections")
        return projector_from_samples(group_rows, min(k, min(group_rows.shape))).matrix
    return _matrix(raw, f"{which}.projector_source", d)


def load_config(path) -> RunConfig:
    """Parse a scenario configuration file into a runnable bundle."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file is not valid TOML: {exc}") from exc

    if "dimension" not in data:
        raise ConfigError("config needs a top-level dimension")
    d = int(data["dimension"])
    edges = data.get("graph", {}).get("edges", [])
    try:
        graph = CausalGraph(d, tuple((int(e[0]), int(e[1]), float(e[2])) for e in edges))
    except (IndexError, TypeError, ValueError) as exc:
        raise ConfigError("graph.edges must be [source, target, weight] triples") from exc
    contribution = build_contribution_matrix(graph)

    dataset = schema = None
    split_parts: tuple[np.ndarray, np.ndarray] | None = None
    if "dataset" in data:
        dataset, schema = _load_dataset(data["dataset"], path.parent)
        if "split" in data:
            split_parts = split_groups(dataset, _split_rule(data["split"]))

    groups = []
    for gi in (1, 2):
        key = f"group{gi}"
        if key not in data:
            raise ConfigError(f"config needs a [{key}] section")
        section = data[key]
        if "cost" not in section or "projector_source" not in section:
            raise ConfigError(f"[{key}] needs cost and projector_source")
        rows = split_parts[gi - 1] if split_parts is not None else None
        projector = _group_projector(section["projector_source"], d, rows, key)
        sampler = None
        if "sampler" in section:
            sampler = GroupSampler(
                mean=_vector(section["sampler"].get("mean", [0.0] * d), f"{key}.sampler.mean", d),
                factor=np.asarray(section["sampler"]["factor"], dtype=float),
            )
        else:
            # Default feature distribution: standard normal on the group's
            # peer-information subspace.
            sampler = GroupSampler(mean=np.zeros(d), factor=projector)
        groups.append(GroupParams(cost=_matrix(section["cost"], f"{key}.cost", d),
                                  projector=projector, sampler=sampler))

    if "desirability" not in data:
        raise ConfigError("config needs a top-level desirability vector")
    desirability = _vector(data["desirability"], "desirability", d)

    raw_truth = data.get("ground_truth")
    if raw_truth is None:
        raise ConfigError("config needs ground_truth (vector or 'fit:dataset')")
    if isinstance(raw_truth, str):
        if not raw_truth.startswith("fit"):
            raise ConfigError("ground_truth string must be 'fit:dataset'")
        if dataset is None:
            raise ConfigError("ground_truth='fit:...' needs a [dataset] section with labels")
        ground_truth = fit_ground_truth(dataset)
    else:
        ground_truth = _vector(raw_truth, "ground_truth", d)

    scenario = Scenario(
        contribution=contribution,
        groups=(groups[0], groups[1]),
        desirability=desirability,
        ground_truth=ground_truth,
    )

    fairness = None
    fairness_kind = None
    privileged = 1
    if "fairness" in data:
        fs = data["fairness"]
        if "kind" not in fs or "beta" not in fs:
            raise ConfigError("[fairness] needs kind and beta")
        try:
            fairness_kind = FairnessKind(fs["kind"])
        except ValueError as exc:
            raise ConfigError(f"unknown fairness kind {fs['kind']!r}") from exc
        privileged = int(fs.get("privileged_group", 1))
        penalty = None
        descriptor = ""
        if fairness_kind is FairnessKind.QUADRATIC_MINUS_F:
            if "f" in fs:
                penalty = ExpressionPenalty(fs["f"], d)
                descriptor = fs["f"]
            elif "f_points" in fs and "f_values" in fs:
                penalty = TabulatedPenalty(np.asarray(fs["f_points"], dtype=float),
                                           np.asarray(fs["f_values"], dtype=float))
                descriptor = "tabulated"
            else:
                raise ConfigError("custom fairness needs f or f_points/f_values")
            if "lipschitz" not in fs:
                raise ConfigError("custom fairness needs a lipschitz constant")
        quad = _matrix(fs["q"], "fairness.q", d) if "q" in fs else None
        fairness = spec_for_scenario(
            scenario,
            fairness_kind,
            beta=float(fs["beta"]),
            privileged_group=privileged,
            penalty=penalty,
            quad=quad,
            lipschitz=float(fs["lipschitz"]) if "lipschitz" in fs else None,
            penalty_descriptor=descriptor,
        )

    return RunConfig(
        scenario=scenario,
        fairness=fairness,
        fairness_kind=fairness_kind,
        privileged_group=privileged,
        allow_zero_desirability=bool(data.get("allow_zero_desirability", False)),
        dataset=dataset,
        source_path=path,
    )


# ---------------------------------------------------------------------------
# Writing (used by the synthetic pipeline and the demo scripts)


def _toml_matrix(m: np.ndarray) -> str:
    rows = ", ".join("[" + ", ".join(repr(float(v)) for v in row) + "]" for row in m)
    return f"[{rows}]"


def _toml_vector(v: np.ndarray) -> str:
    return "[" + ", ".join(repr(float(x)) for x in v) + "]"


def write_config(
    path,
    graph: CausalGraph,
    scenario: Scenario,
    fairness_kind: FairnessKind | str | None = None,
    beta: float | None = None,
    privileged_group: int = 1,
) -> Path:
    """Serialize a scenario (and optional fairness section) to TOML."""
    lines = [f"dimension = {scenario.dimension}"]
    lines.append(f"desirability = {_toml_vector(scenario.desirability)}")
    lines.append(f"ground_truth = {_toml_vector(scenario.ground_truth)}")
    lines.append("")
    lines.append("[graph]")
    edge_items = ", ".join(f"[{s}, {t}, {float(w)!r}]" for s, t, w in graph.edges)
    lines.append(f"edges = [{edge_items}]")
    for gi, g in enumerate(scenario.groups, start=1):
        lines.append("")
        lines.append(f"[group{gi}]")
        lines.append(f"cost = {_toml_matrix(g.cost)}")
        lines.append(f"projector_source = {_toml_matrix(g.projector)}")
        if g.sampler is not None:
            lines.append("")
            lines.append(f"[group{gi}.sampler]")
            lines.append(f"mean = {_toml_vector(g.sampler.mean)}")
            lines.append(f"factor = {_toml_matrix(g.sampler.factor)}")
    if fairness_kind is not None and beta is not None:
        kind = FairnessKind(fairness_kind)
        lines.append("")
        lines.append("[fairness]")
        lines.append(f'kind = "{kind.value}"')
        lines.append(f"beta = {float(beta)!r}")
        if kind is FairnessKind.ASYM:
            lines.append(f"privileged_group = {privileged_group}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
