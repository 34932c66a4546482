"""Dataset ingestion, group splitting, budget sweeps, and result emission.

The pipeline: encode a tabular CSV per a declared schema, split rows into
two groups, build each group's projector from its samples, fit (or accept)
a ground-truth rule, then trace the fairness/optimality trade-off by solving
the constrained problem along a budget grid.  All outputs are deterministic
functions of (configuration, seed): CSV numbers carry 17 significant digits
and the plot is a hand-assembled SVG.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ContractError, FitError, IngestionError, InputError, NumericError, SplitError
from .fairness import FairnessKind, FairnessSpec, check_quadratic_core, spec_for_scenario
from .model import (
    CausalGraph,
    GroupParams,
    GroupSampler,
    Policy,
    Scenario,
    build_contribution_matrix,
    projector_from_samples,
)
from .objectives import Objective, sw_coefficient
from .rng import derived_rng
from . import solvers

#: Desirability assigned to features outside the desirable set.  Keeps every
#: score strictly positive while matching a 1-vs-0 encoding to within 1e-6.
DESIRABILITY_EPSILON = 1e-6
#: Default rank for sample-built projectors.
DEFAULT_PROJECTOR_RANK = 5


# ---------------------------------------------------------------------------
# Tabular data


@dataclass(frozen=True)
class ColumnSpec:
    """Encoding of one raw column: numeric passthrough, binary threshold
    (1 when value >= threshold), or explicit string-to-number codes."""

    name: str
    kind: str = "numeric"
    threshold: float | None = None
    codes: dict[str, float] | None = None

    def encode(self, raw: str, row: int) -> float:
        text = raw.strip()
        if text == "":
            raise IngestionError(f"missing value at row {row}, column {self.name!r}")
        if self.kind == "codes":
            if self.codes is None or text not in self.codes:
                raise IngestionError(f"unknown code {text!r} at row {row}, column {self.name!r}")
            return float(self.codes[text])
        try:
            value = float(text)
        except ValueError as exc:
            raise IngestionError(
                f"unparseable cell {text!r} at row {row}, column {self.name!r}"
            ) from exc
        if self.kind == "threshold":
            if self.threshold is None:
                raise IngestionError(f"column {self.name!r} declared threshold kind without a threshold")
            return 1.0 if value >= self.threshold else 0.0
        if self.kind != "numeric":
            raise IngestionError(f"column {self.name!r} has unknown kind {self.kind!r}")
        if not math.isfinite(value):
            raise IngestionError(f"non-finite value at row {row}, column {self.name!r}")
        return value


@dataclass(frozen=True)
class DatasetSchema:
    columns: tuple[ColumnSpec, ...]
    label: str | None = None


@dataclass(frozen=True, eq=False)
class TabularDataset:
    columns: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError as exc:
            raise InputError(f"unknown column {name!r}") from exc


def ingest_dataset(path, schema: DatasetSchema) -> TabularDataset:
    """Read a headered CSV and encode it per the schema.

    Every schema column (and the label column, if declared) must exist;
    unparseable or missing cells are rejected naming the row and column.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration as exc:
            raise IngestionError(f"{path} is empty") from exc
        header = [h.strip() for h in header]
        positions = {}
        for spec in schema.columns:
            if spec.name not in header:
                raise IngestionError(f"{path} is missing column {spec.name!r}")
            positions[spec.name] = header.index(spec.name)
        label_pos = None
        if schema.label is not None:
            if schema.label not in header:
                raise IngestionError(f"{path} is missing label column {schema.label!r}")
            label_pos = header.index(schema.label)
        rows: list[list[float]] = []
        labels: list[float] = []
        for row_number, record in enumerate(reader, start=2):
            if len(record) != len(header):
                raise IngestionError(f"row {row_number} has {len(record)} cells, expected {len(header)}")
            rows.append([spec.encode(record[positions[spec.name]], row_number) for spec in schema.columns])
            if label_pos is not None:
                raw = record[label_pos].strip()
                try:
                    labels.append(float(raw))
                except ValueError as exc:
                    raise IngestionError(
                        f"unparseable label {raw!r} at row {row_number}"
                    ) from exc
    if not rows:
        raise IngestionError(f"{path} has a header but no data rows")
    return TabularDataset(
        columns=tuple(spec.name for spec in schema.columns),
        values=np.asarray(rows, dtype=float),
        labels=np.asarray(labels, dtype=float) if label_pos is not None else None,
    )


@dataclass(frozen=True)
class SplitRule:
    """Two-group partition rule on an encoded column.

    ``op`` is one of ``le`` (value <= threshold -> group 1), ``ge``, or
    ``in`` (membership in a code set -> group 1).
    """

    column: str
    op: str
    value: float | frozenset

    def mask(self, ds: TabularDataset) -> np.ndarray:
        col = ds.values[:, ds.column_index(self.column)]
        if self.op == "le":
            return col <= float(self.value)  # type: ignore[arg-type]
        if self.op == "ge":
            return col >= float(self.value)  # type: ignore[arg-type]
        if self.op == "in":
            members = self.value if isinstance(self.value, frozenset) else frozenset([self.value])
            return np.isin(col, sorted(float(v) for v in members))
        raise InputError(f"unknown split op {self.op!r}")


def split_groups(ds: TabularDataset, rule: SplitRule) -> tuple[np.ndarray, np.ndarray]:
    """Partition rows by the rule; both parts must be nonempty."""
    mask = rule.mask(ds)
    first = ds.values[mask]
    second = ds.values[~mask]
    if first.shape[0] == 0 or second.shape[0] == 0:
        raise SplitError(
            f"split on {rule.column!r} produced an empty part "
            f"({first.shape[0]} vs {second.shape[0]} rows)"
        )
    return first, second


def fit_ground_truth(ds: TabularDataset, epochs: int = 500, step: float = 0.1) -> np.ndarray:
    """Fit a logistic rule to the labels and clip it into the unit ball.

    Plain full-batch gradient descent at a fixed step count and rate, no
    regularization and no intercept; the coefficient vector is then radially
    projected into the unit ball.
    """
    if ds.labels is None:
        raise FitError("dataset has no label column")
    y = ds.labels
    if np.all(y == y[0]):
        raise FitError("labels are degenerate (single class); cannot fit")
    x = ds.values
    n = x.shape[0]
    w = np.zeros(ds.dimension)
    for _ in range(epochs):
        grad = x.T @ (expit(x @ w) - y) / n
        w = w - step * grad
    norm = float(np.linalg.norm(w))
    if norm > 1.0:
        w = w / norm
    return w


# ---------------------------------------------------------------------------
# Budget sweeps


@dataclass(frozen=True, eq=False)
class SweepPoint:
    beta: float
    objective_value: float
    delta_at_opt: float
    policy: np.ndarray
    converged: bool


@dataclass(frozen=True, eq=False)
class SweepResult:
    grid: tuple[float, ...]
    points: tuple[SweepPoint, ...]
    unconstrained_value: float
    objective: Objective
    fairness_kind: FairnessKind
    label: str = ""
    cost_case: str = ""
    seed: int = 0


def default_beta_grid(s: Scenario, kind: FairnessKind | str, objective: Objective,
                      points: int = 25, privileged_group: int = 1) -> tuple[float, ...]:
    """Geometric grid from 1e-3 up to twice the budget that already recovers
    the unconstrained optimum."""
    coeff = sw_coefficient(s)
    unconstrained = solvers.solve_unconstrained(objective, s.ground_truth, coeff)
    probe = spec_for_scenario(s, kind, beta=1.0, privileged_group=privileged_group)
    recovery = probe.delta(unconstrained.policy.weights)
    top = max(2.0 * recovery, 1e-2)
    return tuple(np.geomspace(1e-3, top, points))


def _solve_sweep_point(objective: Objective, spec: FairnessSpec, s: Scenario):
    if spec.convex:
        return solvers.solve_constrained(objective, spec, s)
    # Nonconvex kinds sweep over the tractable core region; when the budget
    # outgrows the core's ball containment the ball constraint stays active.
    core = check_quadratic_core(spec)
    if core.satisfied:
        return solvers.solve_nonconvex_restricted(objective, spec, s, core=core)
    lam_min = core.details["lambda_min"]
    if lam_min <= 0.0:
        raise ContractError(f"core region degenerate: {core.reason}")
    w, value, iters, ok, degenerate = solvers._solve_over_quadratic_region(
        objective, spec.quad, spec.beta, s, intersect_ball=True
    )
    return solvers.EquilibriumResult(
        Policy(w), objective, value, spec.delta(w), spec.beta,
        solvers.Geometry.NONCONVEX_RESTRICTED, iters, ok, degenerate=degenerate,
    )


def beta_sweep(
    s: Scenario,
    kind: FairnessKind | str,
    beta_grid,
    objective: Objective,
    privileged_group: int = 1,
    label: str = "",
    cost_case: str = "",
    seed: int = 0,
) -> SweepResult:
    """One constrained solve per grid budget plus the unconstrained reference.

    The grid must be sorted ascending.  Because fair sets nest as the budget
    grows, each point's value is floored at the best feasible predecessor
    (the earlier optimum stays feasible), which keeps the reported curve
    exactly monotone even under solver slack.  Per-point solver failures are
    recorded and the sweep continues.
    """
    grid = [float(b) for b in beta_grid]
    if any(b < 0 for b in grid) or grid != sorted(grid):
        raise InputError("budget grid must be sorted ascending and nonnegative")
    objective = Objective(objective)
    kind = FairnessKind(kind)
    coeff = sw_coefficient(s)
    unconstrained = solvers.solve_unconstrained(objective, s.ground_truth, coeff)
    points: list[SweepPoint] = []
    best_prev: SweepPoint | None = None
    for beta in grid:
        spec = spec_for_scenario(s, kind, beta, privileged_group=privileged_group)
        try:
            res = _solve_sweep_point(objective, spec, s)
            point = SweepPoint(
                beta, res.objective_value, res.delta_value, res.policy.weights.copy(), res.converged
            )
        except (NumericError, ContractError, np.linalg.LinAlgError):
            point = SweepPoint(beta, -math.inf, math.nan, np.full(s.dimension, math.nan), False)
        if best_prev is not None and best_prev.objective_value > point.objective_value:
            carried = spec.delta(best_prev.policy)
            if carried <= beta + 1e-8:
                point = SweepPoint(
                    beta, best_prev.objective_value, carried, best_prev.policy, point.converged
                )
        points.append(point)
        if point.objective_value > -math.inf:
            best_prev = point
    return SweepResult(
        grid=tuple(grid),
        points=tuple(points),
        unconstrained_value=unconstrained.objective_value,
        objective=objective,
        fairness_kind=kind,
        label=label,
        cost_case=cost_case,
        seed=seed,
    )


def emit_csv(res: SweepResult, path) -> tuple[Path, Path]:
    """Write the sweep table and a policy-vector sidecar, deterministically.

    Main header: ``beta,objective_value,delta_at_opt,unconstrained_value,
    converged``; floats carry 17 significant digits.  The sidecar (same stem
    with ``.policies.csv``) holds one policy row per grid point.
    """
    path = Path(path)
    sidecar = path.with_suffix(".policies.csv")

    def fmt(x: float) -> str:
        return f"{x:.17g}"

    lines = ["beta,objective_value,delta_at_opt,unconstrained_value,converged"]
    for p in res.points:
        lines.append(
            f"{fmt(p.beta)},{fmt(p.objective_value)},{fmt(p.delta_at_opt)},"
            f"{fmt(res.unconstrained_value)},{str(p.converged).lower()}"
        )
    d = res.points[0].policy.shape[0] if res.points else 0
    side = ["beta," + ",".join(f"w{i}" for i in range(d))]
    for p in res.points:
        side.append(fmt(p.beta) + "," + ",".join(fmt(v) for v in p.policy))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(sidecar, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(side) + "\n")
    return path, sidecar


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def emit_plot(results, path, title: str = "") -> Path:
    """Write a minimal standalone SVG: one polyline per sweep, a dashed
    horizontal reference at each unconstrained optimum, auto-fit axes."""
    results = list(results)
    if not results:
        raise InputError("nothing to plot")
    width, height = 640.0, 480.0
    left, right, top, bottom = 70.0, 20.0, 30.0, 50.0
    xs = [b for r in results for b in r.grid]
    ys = [p.objective_value for r in results for p in r.points if math.isfinite(p.objective_value)]
    ys += [r.unconstrained_value for r in results]
    if not xs or not ys:
        raise InputError("sweeps carry no finite values to plot")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * (width - left - right)

    def sy(y: float) -> float:
        return height - bottom - (y - y_lo) / (y_hi - y_lo) * (height - top - bottom)

    def num(x: float) -> str:
        return f"{x:.6g}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{num(width)}" height="{num(height)}" '
        f'viewBox="0 0 {num(width)} {num(height)}">',
        f'<rect width="{num(width)}" height="{num(height)}" fill="white"/>',
        f'<line x1="{num(left)}" y1="{num(height - bottom)}" x2="{num(width - right)}" '
        f'y2="{num(height - bottom)}" stroke="black"/>',
        f'<line x1="{num(left)}" y1="{num(top)}" x2="{num(left)}" y2="{num(height - bottom)}" '
        f'stroke="black"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        parts.append(
            f'<text x="{num(sx(xv))}" y="{num(height - bottom + 18)}" font-size="11" '
            f'text-anchor="middle">{num(xv)}</text>'
        )
        parts.append(
            f'<text x="{num(left - 6)}" y="{num(sy(yv) + 4)}" font-size="11" '
            f'text-anchor="end">{num(yv)}</text>'
        )
    parts.append(
        f'<text x="{num((left + width - right) / 2)}" y="{num(height - 12)}" font-size="12" '
        f'text-anchor="middle">fairness budget</text>'
    )
    if title:
        parts.append(
            f'<text x="{num((left + width - right) / 2)}" y="18" font-size="13" '
            f'text-anchor="middle">{title}</text>'
        )
    for idx, r in enumerate(results):
        color = _PALETTE[idx % len(_PALETTE)]
        ref_y = num(sy(r.unconstrained_value))
        parts.append(
            f'<line x1="{num(left)}" y1="{ref_y}" x2="{num(width - right)}" y2="{ref_y}" '
            f'stroke="{color}" stroke-dasharray="6,4" stroke-width="1"/>'
        )
        coords = " ".join(
            f"{num(sx(p.beta))},{num(sy(p.objective_value))}"
            for p in r.points
            if math.isfinite(p.objective_value)
        )
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        label = r.label or f"sweep {idx + 1}"
        ly = top + 16 * (idx + 1)
        parts.append(
            f'<line x1="{num(width - right - 150)}" y1="{num(ly - 4)}" '
            f'x2="{num(width - right - 126)}" y2="{num(ly - 4)}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{num(width - right - 120)}" y="{num(ly)}" font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
    return path


# ---------------------------------------------------------------------------
# Synthetic scenario generation


@dataclass(frozen=True)
class SynthKnobs:
    """Heterogeneity controls for the synthetic generator."""

    edge_prob: float = 0.3
    weight_scale: float = 0.5
    cost_case: str = "uniform"  # uniform | scaled | random
    group_ranks: tuple[int, int] | None = None
    desirable: tuple[int, ...] | None = None
    desirability_epsilon: float = DESIRABILITY_EPSILON


@dataclass(frozen=True, eq=False)
class SynthBundle:
    graph: CausalGraph
    scenario: Scenario
    group_samples: tuple[np.ndarray, np.ndarray]
    knobs: SynthKnobs
    seed: int


def _random_dag(d: int, rng: np.random.Generator, edge_prob: float, weight_scale: float) -> CausalGraph:
    edges = []
    for i in range(d):
        for j in range(i + 1, d):
            if rng.random() < edge_prob:
                edges.append((i, j, float(rng.uniform(0.0, weight_scale))))
    return CausalGraph(d, tuple(edges))


def _cost_matrices(d: int, case: str, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if case == "uniform":
        return np.eye(d), np.eye(d)
    if case == "scaled":
        return np.eye(d), 2.0 * np.eye(d)
    if case == "random":
        g = rng.standard_normal((d, d))
        first = g @ g.T / d + 0.5 * np.eye(d)
        return first, 2.0 * first
    raise InputError(f"unknown cost case {case!r}")


def synth_generate(d: int, n_per_group: int, seed: int = 0, knobs: SynthKnobs | None = None) -> SynthBundle:
    """Generate a reproducible synthetic scenario plus per-group samples.

    Groups live on random subspaces (orthonormal bases via QR); projectors
    come from the group samples the same way the datasets' projectors do.
    The ground-truth rule is a random direction scaled into the unit ball.
    """
    knobs = knobs if knobs is not None else SynthKnobs()
    rng = derived_rng(seed, 11)
    graph = _random_dag(d, rng, knobs.edge_prob, knobs.weight_scale)
    contribution = build_contribution_matrix(graph)
    ranks = knobs.group_ranks if knobs.group_ranks is not None else (max(1, (3 * d) // 4),) * 2
    groups = []
    samples = []
    a1, a2 = _cost_matrices(d, knobs.cost_case, rng)
    for gi, (rank, cost) in enumerate(zip(ranks, (a1, a2))):
        basis, _ = np.linalg.qr(rng.standard_normal((d, rank)))
        sampler = GroupSampler(mean=np.zeros(d), factor=basis)
        draws = sampler.draw(n_per_group, derived_rng(seed, 13, gi))
        projector = projector_from_samples(draws, min(rank, DEFAULT_PROJECTOR_RANK, d)).matrix
        groups.append(GroupParams(cost=cost, projector=projector, sampler=sampler))
        samples.append(draws)
    if knobs.desirable is None:
        desirability = np.ones(d)
    else:
        desirability = np.full(d, knobs.desirability_epsilon)
        for i in knobs.desirable:
            desirability[int(i)] = 1.0
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    w_star = direction * rng.uniform(0.5, 1.0)
    scenario = Scenario(
        contribution=contribution,
        groups=(groups[0], groups[1]),
        desirability=desirability,
        ground_truth=w_star,
    )
    return SynthBundle(graph, scenario, (samples[0], samples[1]), knobs, seed)
