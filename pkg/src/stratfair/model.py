"""Static game data: causal graph, contribution matrix, groups, desirability.

The contribution matrix translates exogenous per-feature effort into observed
feature change: entry (i, j) accumulates, over every directed path from
feature j to feature i, the sum of edge weights along the path (diagonal
fixed at 1).  Orientation: column = where effort is injected, row = where it
lands, so ``C @ effort`` aggregates flow *into* each feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, StructuralError

#: Frobenius tolerance for matrix equality / idempotence checks.
MATRIX_TOL = 1e-8
#: Smallest-eigenvalue threshold for positive definiteness.
PD_TOL = 1e-10
#: Hard cap on graph size for contribution-matrix construction.
MAX_GRAPH_NODES = 24
#: Slack allowed on the deployable-policy norm bound.
DEPLOYABLE_TOL = 1e-9


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise InputError(f"{name} must be a 2-d matrix, got shape {m.shape}")
    m = m.copy()
    m.setflags(write=False)
    return m


def _as_vector(a, name: str) -> np.ndarray:
    v = np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise InputError(f"{name} must be a 1-d vector, got shape {v.shape}")
    v = v.copy()
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class CausalGraph:
    """Weighted DAG over feature nodes.

    Edges are ``(source, target, weight)`` triples with ``weight >= 0``;
    effort flows along edge direction.  Construction rejects self-loops,
    duplicate pairs, out-of-range indices, and cycles.
    """

    node_count: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.node_count < 1:
            raise InputError("node_count must be a positive integer")
        edges = tuple((int(s), int(t), float(w)) for s, t, w in self.edges)
        object.__setattr__(self, "edges", edges)
        seen = set()
        for s, t, w in edges:
            if not (0 <= s < self.node_count and 0 <= t < self.node_count):
                raise InputError(f"edge ({s},{t}) references a node outside [0,{self.node_count})")
            if s == t:
                raise StructuralError(f"self-loop on node {s}")
            if (s, t) in seen:
                raise StructuralError(f"duplicate edge ({s},{t})")
            if w < 0:
                raise InputError(f"edge ({s},{t}) has negative weight {w}")
            seen.add((s, t))
        object.__setattr__(self, "_topo_order", tuple(self._toposort()))

    def _toposort(self) -> list[int]:
        indeg = [0] * self.node_count
        out = [[] for _ in range(self.node_count)]
        for s, t, _ in self.edges:
            out[s].append(t)
            indeg[t] += 1
        ready = sorted(i for i in range(self.node_count) if indeg[i] == 0)
        order = []
        while ready:
            u = ready.pop(0)
            order.append(u)
            for v in out[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
            ready.sort()
        if len(order) != self.node_count:
            raise StructuralError("cycle detected: graph admits no topological order")
        return order

    @property
    def topological_order(self) -> tuple[int, ...]:
        return self._topo_order  # type: ignore[attr-defined]

    def relabel(self, permutation) -> "CausalGraph":
        """Return the graph with node i renamed to permutation[i]."""
        perm = list(int(p) for p in permutation)
        if sorted(perm) != list(range(self.node_count)):
            raise InputError("relabeling must be a permutation of node indices")
        return CausalGraph(
            self.node_count,
            tuple((perm[s], perm[t], w) for s, t, w in self.edges),
        )


@dataclass(frozen=True, eq=False)
class ContributionMatrix:
    """d x d effort-spillover matrix: unit diagonal, invertible, DAG-triangular."""

    entries: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.entries, "contribution matrix")
        if m.shape[0] != m.shape[1]:
            raise InputError(f"contribution matrix must be square, got {m.shape}")
        object.__setattr__(self, "entries", m)
        if np.max(np.abs(np.diag(m) - 1.0)) > MATRIX_TOL:
            raise StructuralError("contribution matrix must have unit diagonal")
        if self._offdiagonal_has_cycle(m):
            raise StructuralError("off-diagonal pattern is not triangularizable (not from a DAG)")

    @staticmethod
    def _offdiagonal_has_cycle(m: np.ndarray) -> bool:
        # Entry (i, j) != 0 means an edge j -> i in the induced reachability
        # graph; that graph must be acyclic.
        d = m.shape[0]
        succ = [[i for i in range(d) if i != j and m[i, j] != 0.0] for j in range(d)]
        indeg = [0] * d
        for j in range(d):
            for i in succ[j]:
                indeg[i] += 1
        ready = [i for i in range(d) if indeg[i] == 0]
        seen = 0
        while ready:
            u = ready.pop()
            seen += 1
            for v in succ[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
        return seen != d

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, other):
        return self.entries @ other


def build_contribution_matrix(graph: CausalGraph) -> ContributionMatrix:
    """Build the contribution matrix of a weighted DAG.

    Entry (i, j), i != j, is the sum over all directed paths p from j to i of
    the path weight, where a path's weight is the *sum* of its edge weights.
    Computed by dynamic programming over a topological order; equivalent to
    exhaustive simple-path enumeration (a DAG has finitely many paths) but
    linear in edges per source node.

    Raises
    ------
    StructuralError
        If the graph has a cycle (checked at graph construction).
    CapacityError
        If the graph exceeds the construction cap.
    """
    from .errors import CapacityError

    d = graph.node_count
    if d > MAX_GRAPH_NODES:
        raise CapacityError(f"graph construction capped at d={MAX_GRAPH_NODES}, got {d}")
    order = graph.topological_order
    out = [[] for _ in range(d)]
    for s, t, w in graph.edges:
        out[s].append((t, w))
    c = np.eye(d)
    for j in range(d):
        # count[v] = number of paths j -> v; total[v] = sum of path weights.
        count = np.zeros(d)
        total = np.zeros(d)
        count[j] = 1.0
        for u in order:
            if count[u] == 0.0:
                continue
            for v, w in out[u]:
                count[v] += count[u]
                total[v] += total[u] + count[u] * w
        for i in range(d):
            if i != j:
                c[i, j] = total[i]
    return ContributionMatrix(c)


@dataclass(frozen=True, eq=False)
class GroupSampler:
    """Descriptor of a group's feature distribution.

    Draws are ``mean + factor @ z`` with ``z`` standard normal, so the
    supporting subspace is the column space of ``factor``.
    """

    mean: np.ndarray
    factor: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_vector(self.mean, "sampler mean"))
        object.__setattr__(self, "factor", _as_matrix(self.factor, "sampler factor"))
        if self.factor.shape[0] != self.mean.shape[0]:
            raise InputError("sampler factor row count must match mean length")

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.factor.shape[1]))
        return self.mean + z @ self.factor.T


@dataclass(frozen=True, eq=False)
class GroupParams:
    """Per-group movement cost, peer-information projector, and sampler."""

    cost: np.ndarray
    projector: np.ndarray
    sampler: GroupSampler | None = None

    def __post_init__(self):
        object.__setattr__(self, "cost", _as_matrix(self.cost, "cost matrix"))
        object.__setattr__(self, "projector", _as_matrix(self.projector, "projector"))


@dataclass(frozen=True, eq=False)
class Scenario:
    """A complete game instance.

    ``desirability`` holds the per-feature scores; the diagonal desirability
    matrix is exposed via :meth:`desirability_matrix`.  Construction only
    coerces shapes; invariants are checked by :func:`validate_scenario` so
    that deliberately broken instances can be built and reported on.
    """

    contribution: ContributionMatrix
    groups: tuple[GroupParams, GroupParams]
    desirability: np.ndarray
    ground_truth: np.ndarray

    def __post_init__(self):
        if len(self.groups) != 2:
            raise InputError("scenario requires exactly two groups")
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "desirability", _as_vector(self.desirability, "desirability"))
        object.__setattr__(self, "ground_truth", _as_vector(self.ground_truth, "ground truth"))

    @property
    def dimension(self) -> int:
        return self.contribution.dimension

    def desirability_matrix(self) -> np.ndarray:
        return np.diag(self.desirability)

    def group(self, index: int) -> GroupParams:
        if index not in (1, 2):
            raise InputError("group index must be 1 or 2")
        return self.groups[index - 1]


@dataclass(frozen=True, eq=False)
class Policy:
    """A linear scoring rule; deployable iff it fits in the unit ball."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _as_vector(self.weights, "policy weights"))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.weights))

    @property
    def deployable(self) -> bool:
        return self.norm <= 1.0 + DEPLOYABLE_TOL


@dataclass(frozen=True)
class ValidationReport:
    """List of violated invariants; empty means the scenario is valid."""

    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _symmetric(m: np.ndarray) -> bool:
    return float(np.linalg.norm(m - m.T)) <= MATRIX_TOL


def validate_scenario(s: Scenario, allow_zero_desirability: bool = False) -> ValidationReport:
    """Check every structural invariant of a scenario, report-only.

    ``allow_zero_desirability`` relaxes strict positivity to nonnegativity
    (exact-zero desirability encoding used for experiment replication).
    """
    d = s.dimension
    bad: list[str] = []

    def check_dims(name, arr, shape):
        if arr.shape != shape:
            bad.append(f"dimension mismatch: {name} has shape {arr.shape}, expected {shape}")
            return False
        return True

    for gi, g in enumerate(s.groups, start=1):
        if check_dims(f"group{gi}.cost", g.cost, (d, d)):
            if not _symmetric(g.cost):
                bad.append(f"group{gi}: cost matrix not symmetric")
            else:
                lam = float(np.linalg.eigvalsh((g.cost + g.cost.T) / 2.0)[0])
                if lam <= PD_TOL:
                    bad.append(f"group{gi}: cost matrix not PD (smallest eigenvalue {lam:.3e})")
        if check_dims(f"group{gi}.projector", g.projector, (d, d)):
            p = g.projector
            if not _symmetric(p):
                bad.append(f"group{gi}: projector not symmetric")
            if float(np.linalg.norm(p @ p - p)) > MATRIX_TOL:
                bad.append(f"group{gi}: projector not idempotent")
        if g.sampler is not None and g.sampler.dimension != d:
            bad.append(f"dimension mismatch: group{gi}.sampler has dimension {g.sampler.dimension}, expected {d}")

    check_dims("desirability", s.desirability, (d,))
    if allow_zero_desirability:
        if np.any(s.desirability < 0):
            bad.append("desirability scores must be nonnegative")
    elif np.any(s.desirability <= 0):
        bad.append("desirability scores must be strictly positive")
    check_dims("ground_truth", s.ground_truth, (d,))
    return ValidationReport(tuple(bad))


@dataclass(frozen=True, eq=False)
class ProjectorResult:
    """Projector built from samples, with rank bookkeeping.

    ``reduced`` flags that the requested rank exceeded the samples' effective
    rank and was lowered.
    """

    matrix: np.ndarray
    requested_rank: int
    effective_rank: int
    singular_values: np.ndarray = field(repr=False)

    @property
    def reduced(self) -> bool:
        return self.effective_rank < self.requested_rank


def projector_from_samples(rows, k: int) -> ProjectorResult:
    """Orthogonal projector onto the span of the top-k right singular vectors.

    Parameters
    ----------
    rows : (n, d) array
        Sample matrix, one observation per row.
    k : int
        Number of singular directions to keep; must satisfy
        ``1 <= k <= min(n, d)``.  If k exceeds the numerical rank the
        projector is built at the effective rank and flagged.
    """
    x = np.asarray(rows, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InputError("samples must form a nonempty 2-d matrix")
    n, d = x.shape
    if not (1 <= k <= min(n, d)):
        raise InputError(f"k={k} outside [1, min(n,d)={min(n, d)}]")
    _, sv, vt = np.linalg.svd(x, full_matrices=False)
    if sv[0] <= 0.0:
        effective = 0
    else:
        effective = int(np.sum(sv > 1e-10 * sv[0]))
    k_eff = min(k, effective)
    basis = vt[:k_eff]
    p = basis.T @ basis
    p = (p + p.T) / 2.0
    return ProjectorResult(matrix=p, requested_rank=k, effective_rank=k_eff, singular_values=sv)
