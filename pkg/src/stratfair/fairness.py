"""Discrepancy functions, the fair sets they induce, and geometry checkers.

A rule's discrepancy is the gap between the two groups' desirability-weighted
incentivized efforts.  Each supported comparison (absolute differences,
squared differences, asymmetric squared-magnitude gap, or a user-supplied
quadratic-minus-penalty form) induces a budgeted fair set; the checkers below
classify that set's geometry (polyhedron, ellipsoid, ellipsoid-inside-ball,
or nonconvex-with-ellipsoidal-core) and record the numeric margin of each
classification, which is what the loss bounds are gated on.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CapacityError, InputError
from .model import PD_TOL, MATRIX_TOL, Scenario

#: Slack on fair-set membership tests.
MEMBERSHIP_TOL = 1e-12
#: Hard cap (and warn level) on the sign-enumeration dimension.
POLYHEDRON_HARD_CAP = 16
POLYHEDRON_WARN_AT = 12


@dataclass(frozen=True, eq=False)
class DiscrepancyMatrix:
    """Per-group desirability-weighted response maps and their difference."""

    group_maps: tuple[np.ndarray, np.ndarray]

    @property
    def matrix(self) -> np.ndarray:
        return self.group_maps[0] - self.group_maps[1]


def discrepancy_matrix(s: Scenario) -> DiscrepancyMatrix:
    """Build each group's map from rule to desirability-weighted effort."""
    pid = s.desirability_matrix()
    c = s.contribution.entries
    maps = tuple(pid @ np.linalg.solve(g.cost, c.T @ g.projector) for g in s.groups)
    return DiscrepancyMatrix(group_maps=maps)  # type: ignore[arg-type]


def delta_l1(w, m) -> float:
    """Sum of absolute differences of desirability-weighted efforts."""
    return float(np.abs(np.asarray(m) @ np.asarray(w, dtype=float)).sum())


def delta_l2(w, m) -> float:
    """Sum of squared differences of desirability-weighted efforts."""
    mw = np.asarray(m) @ np.asarray(w, dtype=float)
    return float(mw @ mw)


def delta_asym(w, m_privileged, m_other) -> float:
    """Squared desirable-effort magnitude gap, privileged group first.

    Positive when the privileged group is the more desirably incentivized;
    budgeting it caps how much extra incentive that group may receive while
    leaving the opposite direction unconstrained.
    """
    wv = np.asarray(w, dtype=float)
    a = np.asarray(m_privileged) @ wv
    b = np.asarray(m_other) @ wv
    return float(a @ a - b @ b)


def polyhedron_rows(m, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Halfspace representation of the absolute-difference fair set.

    Returns (rows, rhs) with one row per sign vector: ``rows @ w <= rhs``
    if and only if the absolute-difference discrepancy of w is at most beta.
    Sign vectors are enumerated lexicographically (-1 before +1), most
    significant coordinate first, so row indices are reproducible.
    """
    mm = np.asarray(m, dtype=float)
    if mm.ndim != 2:
        raise InputError("discrepancy matrix must be 2-d")
    k = mm.shape[0]
    if k > POLYHEDRON_HARD_CAP:
        raise CapacityError(f"sign enumeration capped at {POLYHEDRON_HARD_CAP} rows, got {k}")
    if k >= POLYHEDRON_WARN_AT:
        warnings.warn(f"enumerating 2^{k} halfspaces; this is the practical limit", stacklevel=2)
    count = 1 << k
    signs = np.empty((count, k))
    for i in range(count):
        for j in range(k):
            signs[i, j] = 1.0 if (i >> (k - 1 - j)) & 1 else -1.0
    return signs @ mm, beta * np.ones(count)


class FairnessKind(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"
    ASYM = "asym"
    QUADRATIC_MINUS_F = "custom"


@dataclass(frozen=True, eq=False)
class FairnessSpec:
    """A discrepancy function with its tolerance and derived geometry.

    ``quad`` is the quadratic-form matrix of the kind's ellipsoidal geometry
    (difference-map Gram matrix for the squared kind, privileged-map Gram
    matrix for the asymmetric kind, user matrix for the custom kind).
    ``lipschitz``/``diameter`` describe the penalty term of nonconvex kinds.
    """

    kind: FairnessKind
    beta: float
    matrix: np.ndarray | None = None
    quad: np.ndarray | None = None
    privileged_map: np.ndarray | None = None
    other_map: np.ndarray | None = None
    penalty: Callable[[np.ndarray], float] | None = field(default=None, repr=False)
    penalty_descriptor: str = ""
    lipschitz: float | None = None
    diameter: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise InputError("fairness tolerance must be nonnegative")

    @property
    def dimension(self) -> int:
        for m in (self.matrix, self.quad, self.privileged_map):
            if m is not None:
                return m.shape[1]
        raise InputError("fairness spec carries no geometry")

    def delta(self, w) -> float:
        if self.kind is FairnessKind.L1:
            return delta_l1(w, self.matrix)
        if self.kind is FairnessKind.L2:
            return delta_l2(w, self.matrix)
        if self.kind is FairnessKind.ASYM:
            return delta_asym(w, self.privileged_map, self.other_map)
        wv = np.asarray(w, dtype=float)
        base = float(wv @ (self.quad @ wv))
        return base - (self.penalty(wv) if self.penalty is not None else 0.0)

    @property
    def convex(self) -> bool:
        return self.kind in (FairnessKind.L1, FairnessKind.L2)


def l1_spec(m, beta: float) -> FairnessSpec:
    return FairnessSpec(kind=FairnessKind.L1, beta=beta, matrix=np.asarray(m, dtype=float))


def l2_spec(m, beta: float) -> FairnessSpec:
    mm = np.asarray(m, dtype=float)
    return FairnessSpec(kind=FairnessKind.L2, beta=beta, matrix=mm, quad=mm.T @ mm)


def asym_spec(m_privileged, m_other, beta: float, diameter: float = 1.0) -> FairnessSpec:
    """Asymmetric spec; the penalty is the other group's squared effort magnitude.

    The penalty's Lipschitz constant over the ball of radius ``diameter`` is
    twice that radius times the largest Gram eigenvalue of the other group's
    map.
    """
    mp = np.asarray(m_privileged, dtype=float)
    mo = np.asarray(m_other, dtype=float)
    gram_other = mo.T @ mo
    lip = 2.0 * diameter * float(np.linalg.eigvalsh(gram_other)[-1])

    def penalty(w: np.ndarray) -> float:
        v = mo @ w
        return float(v @ v)

    return FairnessSpec(
        kind=FairnessKind.ASYM,
        beta=beta,
        quad=mp.T @ mp,
        privileged_map=mp,
        other_map=mo,
        penalty=penalty,
        penalty_descriptor="squared effort magnitude of the non-privileged group",
        lipschitz=lip,
        diameter=diameter,
    )


def custom_spec(
    quad,
    penalty: Callable[[np.ndarray], float],
    beta: float,
    lipschitz: float,
    descriptor: str = "",
    diameter: float = 1.0,
) -> FairnessSpec:
    """Quadratic-minus-penalty spec with a caller-supplied Lipschitz constant."""
    q = np.asarray(quad, dtype=float)
    return FairnessSpec(
        kind=FairnessKind.QUADRATIC_MINUS_F,
        beta=beta,
        quad=q,
        penalty=penalty,
        penalty_descriptor=descriptor,
        lipschitz=float(lipschitz),
        diameter=diameter,
    )


def spec_for_scenario(
    s: Scenario,
    kind: FairnessKind | str,
    beta: float,
    privileged_group: int = 1,
    penalty: Callable[[np.ndarray], float] | None = None,
    quad=None,
    lipschitz: float | None = None,
    penalty_descriptor: str = "",
) -> FairnessSpec:
    """Instantiate a fairness spec from a scenario's group structure."""
    kind = FairnessKind(kind)
    maps = discrepancy_matrix(s)
    if kind is FairnessKind.L1:
        return l1_spec(maps.matrix, beta)
    if kind is FairnessKind.L2:
        return l2_spec(maps.matrix, beta)
    if kind is FairnessKind.ASYM:
        if privileged_group not in (1, 2):
            raise InputError("privileged_group must be 1 or 2")
        mp = maps.group_maps[privileged_group - 1]
        mo = maps.group_maps[2 - privileged_group]
        return asym_spec(mp, mo, beta)
    if penalty is None or lipschitz is None:
        raise InputError("custom fairness needs a penalty and its Lipschitz constant")
    q = np.eye(s.dimension) if quad is None else quad
    return custom_spec(q, penalty, beta, lipschitz, penalty_descriptor)


def is_beta_fair(w, spec: FairnessSpec) -> bool:
    """Membership in the budgeted fair set, with a small numeric slack."""
    return spec.delta(w) <= spec.beta + MEMBERSHIP_TOL


# ---------------------------------------------------------------------------
# Geometry checkers


@dataclass(frozen=True, eq=False)
class PropertyCheck:
    """Outcome of one geometry condition, with the margin that decided it."""

    name: str
    satisfied: bool
    margin: float
    reason: str
    details: dict = field(default_factory=dict, repr=False)


def _sampled_l1_gain_infimum(m: np.ndarray, samples: int = 2000) -> float:
    # Informational estimate of inf over the unit sphere of the l1 image
    # norm; the certified sufficient condition uses the smallest singular
    # value instead.
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(7)))
    d = m.shape[1]
    z = rng.standard_normal((samples, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    _, _, vt = np.linalg.svd(m)
    candidates = np.vstack([z, vt])
    return float(np.abs(candidates @ m.T).sum(axis=1).min())


def check_polyhedral_region(m, beta: float, scenario: Scenario | None = None) -> PropertyCheck:
    """Is the feasible region of the constrained problem a polyhedron?

    Sufficient condition: the difference map has an empty kernel and the
    tolerance does not exceed its smallest singular value (so the fair set
    already sits inside the unit ball).  When the scenario has uniform costs
    or uniform projectors, the matching specialized conditions are evaluated
    and recorded alongside.
    """
    mm = np.asarray(m, dtype=float)
    sv = np.linalg.svd(mm, compute_uv=False)
    sigma_min = float(sv[-1])
    details: dict = {
        "sigma_min": sigma_min,
        "l1_gain_infimum_sampled": _sampled_l1_gain_infimum(mm),
    }
    if scenario is not None:
        details.update(_specialized_polyhedral_conditions(scenario, beta))
    if sigma_min <= PD_TOL:
        return PropertyCheck(
            "polyhedral_region", False, sigma_min - beta, "kernel nonempty", details
        )
    if beta > sigma_min:
        return PropertyCheck(
            "polyhedral_region",
            False,
            sigma_min - beta,
            f"tolerance {beta:g} exceeds smallest singular value {sigma_min:g}",
            details,
        )
    return PropertyCheck(
        "polyhedral_region", True, sigma_min - beta, "kernel empty and tolerance within gain", details
    )


def _specialized_polyhedral_conditions(s: Scenario, beta: float) -> dict:
    out: dict = {}
    g1, g2 = s.groups
    c = s.contribution.entries
    pid = s.desirability_matrix()
    if float(np.linalg.norm(g1.cost - g2.cost)) <= MATRIX_TOL:
        m = pid @ np.linalg.solve(g1.cost, c.T @ (g1.projector - g2.projector))
        sig = float(np.linalg.svd(m, compute_uv=False)[-1])
        out["uniform_cost_threshold"] = sig
        out["uniform_cost_satisfied"] = bool(sig > PD_TOL and beta <= sig)
    if float(np.linalg.norm(g1.projector - g2.projector)) <= MATRIX_TOL:
        gap_eigs = np.linalg.eigvalsh((g2.cost - g1.cost + (g2.cost - g1.cost).T) / 2.0)
        dominated = float(gap_eigs[0]) > PD_TOL
        full_info = float(np.linalg.norm(g1.projector - np.eye(s.dimension))) <= MATRIX_TOL
        m = pid @ (np.linalg.inv(g1.cost) - np.linalg.inv(g2.cost)) @ c.T @ g1.projector
        sig = float(np.linalg.svd(m, compute_uv=False)[-1])
        out["uniform_info_threshold"] = sig
        out["uniform_info_satisfied"] = bool(dominated and full_info and beta <= sig)
        out["uniform_info_cost_dominated"] = dominated
    return out


def check_fair_set_ellipsoid(m) -> PropertyCheck:
    """Is the squared-difference fair set an ellipsoid?  Yes iff the map is invertible."""
    mm = np.asarray(m, dtype=float)
    sigma_min = float(np.linalg.svd(mm, compute_uv=False)[-1])
    details = {"sigma_min": sigma_min, "quad": mm.T @ mm}
    if sigma_min <= PD_TOL:
        return PropertyCheck("fair_set_ellipsoid", False, sigma_min, "difference map singular", details)
    return PropertyCheck("fair_set_ellipsoid", True, sigma_min, "difference map invertible", details)


def check_feasible_ellipsoid(quad, beta: float) -> PropertyCheck:
    """Does the fair ellipsoid sit inside the unit ball (tolerance at most the
    smallest quadratic-form eigenvalue)?"""
    q = np.asarray(quad, dtype=float)
    lam = np.linalg.eigvalsh((q + q.T) / 2.0)
    lam_min = float(lam[0])
    details = {"lambda_min": lam_min, "lambda_max": float(lam[-1])}
    if lam_min <= PD_TOL:
        return PropertyCheck("feasible_ellipsoid", False, lam_min - beta, "quadratic form not PD", details)
    if beta > lam_min:
        return PropertyCheck(
            "feasible_ellipsoid",
            False,
            lam_min - beta,
            f"tolerance {beta:g} exceeds smallest eigenvalue {lam_min:g}",
            details,
        )
    return PropertyCheck("feasible_ellipsoid", True, lam_min - beta, "ellipsoid inside unit ball", details)


def check_quadratic_core(spec: FairnessSpec) -> PropertyCheck:
    """Membership in the quadratic-minus-penalty class with an ellipsoidal core.

    Requires a PD quadratic form whose smallest eigenvalue covers the
    tolerance; emits the penalty's Lipschitz constant and the diameter bound
    used by the envelope constructions.
    """
    if spec.kind not in (FairnessKind.ASYM, FairnessKind.QUADRATIC_MINUS_F):
        raise InputError("quadratic-core check applies to asymmetric/custom kinds only")
    q = spec.quad
    lam = np.linalg.eigvalsh((q + q.T) / 2.0)
    lam_min = float(lam[0])
    details = {
        "quad": q,
        "beta": spec.beta,
        "lambda_min": lam_min,
        "lipschitz": spec.lipschitz if spec.lipschitz is not None else 0.0,
        "diameter": spec.diameter,
    }
    if spec.kind is FairnessKind.ASYM:
        details["other_gram_lambda_max"] = float(np.linalg.eigvalsh(spec.other_map.T @ spec.other_map)[-1])
    if lam_min <= PD_TOL:
        return PropertyCheck("quadratic_core", False, lam_min - spec.beta, "core quadratic form not PD", details)
    if spec.beta > lam_min:
        return PropertyCheck(
            "quadratic_core",
            False,
            lam_min - spec.beta,
            f"tolerance {spec.beta:g} exceeds smallest core eigenvalue {lam_min:g}",
            details,
        )
    return PropertyCheck("quadratic_core", True, lam_min - spec.beta, "PD core covering the tolerance", details)


@dataclass(frozen=True, eq=False)
class PropertyReport:
    """All geometry checks that apply to one (scenario, fairness) pair."""

    checks: tuple[PropertyCheck, ...]

    def get(self, name: str) -> PropertyCheck | None:
        for c in self.checks:
            if c.name == name:
                return c
        return None

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            mark = "PASS" if c.satisfied else "fail"
            out.append(f"[{mark}] {c.name}: {c.reason} (margin {c.margin:+.6g})")
        return out


def assess_geometry(s: Scenario, spec: FairnessSpec) -> PropertyReport:
    """Run every geometry checker applicable to the spec kind."""
    checks: list[PropertyCheck] = []
    if spec.convex:
        m = spec.matrix if spec.matrix is not None else discrepancy_matrix(s).matrix
        checks.append(check_polyhedral_region(m, spec.beta, scenario=s))
        ell = check_fair_set_ellipsoid(m)
        checks.append(ell)
        checks.append(check_feasible_ellipsoid(ell.details["quad"], spec.beta))
    else:
        checks.append(check_quadratic_core(spec))
        checks.append(check_feasible_ellipsoid(spec.quad, spec.beta))
    return PropertyReport(tuple(checks))


# ---------------------------------------------------------------------------
# Penalty descriptors for the custom kind


@dataclass(frozen=True, eq=False)
class TabulatedPenalty:
    """Nearest-neighbor lookup over tabulated (point, value) pairs."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.asarray(self.values, dtype=float)
        if pts.shape[0] != vals.shape[0] or pts.shape[0] == 0:
            raise InputError("tabulated penalty needs matching, nonempty points and values")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    def __call__(self, w) -> float:
        dist = np.linalg.norm(self.points - np.asarray(w, dtype=float), axis=1)
        return float(self.values[int(np.argmin(dist))])


_FUNCTIONS = {"abs": 1, "sqrt": 1, "pow": 2}


def _tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "+-*(),":
            tokens.append(ch)
            i += 1
        elif ch.isdigit() or ch == ".":
            j = i
            while j < len(text) and (text[j].isdigit() or text[j] in ".eE" or (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            tokens.append(text[i:j])
            i = j
        elif ch.isalpha() or ch == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(text[i:j])
            i = j
        else:
            raise InputError(f"unexpected character {ch!r} in penalty expression")
    return tokens


class _ExprParser:
    # Grammar: expr := term (('+'|'-') term)* ; term := unary ('*' unary)* ;
    # unary := ('-'|'+') unary | atom ; atom := number | coordinate |
    # func '(' expr {',' expr} ')' | '(' expr ')'
    def __init__(self, tokens: list[str], dimension: int):
        self.tokens = tokens
        self.pos = 0
        self.dim = dimension

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expect=None):
        tok = self.peek()
        if tok is None or (expect is not None and tok != expect):
            raise InputError(f"penalty expression: expected {expect!r}, got {tok!r}")
        self.pos += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek() is not None:
            raise InputError(f"penalty expression: trailing tokens at {self.peek()!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()
            rhs = self.term()
            node = (op, node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() == "*":
            self.take()
            node = ("*", node, self.unary())
        return node

    def unary(self):
        if self.peek() in ("-", "+"):
            op = self.take()
            child = self.unary()
            return ("neg", child) if op == "-" else child
        return self.atom()

    def atom(self):
        tok = self.take()
        if tok == "(":
            node = self.expr()
            self.take(")")
            return node
        if tok in _FUNCTIONS:
            self.take("(")
            args = [self.expr()]
            while self.peek() == ",":
                self.take()
                args.append(self.expr())
            self.take(")")
            if len(args) != _FUNCTIONS[tok]:
                raise InputError(f"penalty expression: {tok} takes {_FUNCTIONS[tok]} argument(s)")
            return (tok, *args)
        if tok.startswith("w") and tok[1:].isdigit():
            idx = int(tok[1:])
            if not (1 <= idx <= self.dim):
                raise InputError(f"coordinate {tok} outside 1..{self.dim}")
            return ("coord", idx - 1)
        try:
            return ("const", float(tok))
        except ValueError as exc:
            raise InputError(f"penalty expression: unknown token {tok!r}") from exc


def _eval_node(node, w: np.ndarray) -> float:
    op = node[0]
    if op == "const":
        return node[1]
    if op == "coord":
        return float(w[node[1]])
    if op == "neg":
        return -_eval_node(node[1], w)
    if op == "+":
        return _eval_node(node[1], w) + _eval_node(node[2], w)
    if op == "-":
        return _eval_node(node[1], w) - _eval_node(node[2], w)
    if op == "*":
        return _eval_node(node[1], w) * _eval_node(node[2], w)
    if op == "abs":
        return abs(_eval_node(node[1], w))
    if op == "sqrt":
        val = _eval_node(node[1], w)
        if val < 0:
            raise InputError("penalty expression: sqrt of a negative value")
        return val**0.5
    if op == "pow":
        return _eval_node(node[1], w) ** _eval_node(node[2], w)
    raise InputError(f"penalty expression: bad node {op!r}")


@dataclass(frozen=True, eq=False)
class ExpressionPenalty:
    """Penalty compiled from the tiny arithmetic grammar.

    Supported: +, -, *, abs, sqrt, pow, numeric literals, and coordinates
    named ``w1..wd``.
    """

    text: str
    dimension: int

    def __post_init__(self):
        tree = _ExprParser(_tokenize(self.text), self.dimension).parse()
        object.__setattr__(self, "_tree", tree)

    def __call__(self, w) -> float:
        return _eval_node(self._tree, np.asarray(w, dtype=float))  # type: ignore[attr-defined]
