"""Constrained and unconstrained equilibrium solvers.

The solver surface is deliberately small: accuracy solves are Euclidean
projections onto the feasible region (the accuracy objective is a negative
squared distance), welfare solves are linear maximization.  Projections onto
single sets are closed-form or a one-dimensional Newton solve; intersections
use Dykstra's alternating projections.  Linear maximization over a
ball-ellipsoid intersection has an exact one-parameter KKT solve; over
polyhedral intersections it projects far points along the objective
direction (the projection of ``T * direction`` maximizes the objective up
to ``1/(2T)``) and takes the best certified rung of a ladder of such ``T``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InputError, NumericError
from .fairness import FairnessKind, FairnessSpec, PropertyCheck, check_quadratic_core, polyhedron_rows
from .model import Policy, Scenario
from .objectives import Objective, accuracy_value, sw_coefficient, sw_value
from .rng import derived_rng

#: Displacement tolerance per Dykstra sweep.
DYKSTRA_TOL = 1e-10
#: Sweep cap for Dykstra.
DYKSTRA_MAX_SWEEPS = 10_000
#: Iteration cap for the ellipsoid-projection Newton solve.
ELLIPSOID_NEWTON_CAP = 200
#: Welfare coefficients below this norm are treated as degenerate.
DEGENERATE_COEFF_NORM = 1e-14
#: Feasibility slack carried by every solver result.
FEASIBILITY_TOL = 1e-8


class Geometry(str, enum.Enum):
    BALL_ONLY = "ball_only"
    POLY_BALL = "poly_ball"
    ELLIPSOID = "ellipsoid"
    ELLIPSOID_BALL = "ellipsoid_ball"
    NONCONVEX_RESTRICTED = "nonconvex_restricted"
    NONCONVEX_ENVELOPE = "nonconvex_envelope"
    NONCONVEX_MULTISTART = "nonconvex_multistart"


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    """One solved constrained (or reference unconstrained) problem."""

    policy: Policy
    objective_kind: Objective
    objective_value: float
    delta_value: float
    beta: float
    geometry: Geometry
    iterations: int
    converged: bool
    degenerate: bool = False
    heuristic: bool = False


# ---------------------------------------------------------------------------
# Elementary projections


def project_onto_ball(v, radius: float = 1.0) -> np.ndarray:
    x = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(x))
    if n <= radius:
        return x.copy()
    return x * (radius / n)


def project_onto_halfspace(v, normal, offset: float) -> np.ndarray:
    x = np.asarray(v, dtype=float)
    a = np.asarray(normal, dtype=float)
    slack = float(a @ x) - offset
    if slack <= 0.0:
        return x.copy()
    return x - (slack / float(a @ a)) * a


def _eigh_psd(quad) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(quad, dtype=float)
    lam, vecs = np.linalg.eigh((q + q.T) / 2.0)
    scale = max(abs(float(lam[0])), abs(float(lam[-1])), 1.0)
    if lam[0] < -1e-12 * scale:
        raise InputError("ellipsoid quadratic form must be positive semidefinite")
    return np.clip(lam, 0.0, None), vecs


def _project_in_eigenbasis(x: np.ndarray, lam: np.ndarray, vecs: np.ndarray, level: float) -> np.ndarray:
    if level == 0.0 and lam[-1] > 0.0:
        # Only the kernel component survives a zero budget.
        c = vecs.T @ x
        c[lam > 0.0] = 0.0
        return vecs @ c
    c = vecs.T @ x
    c2 = c * c
    if float(np.sum(lam * c2)) <= level:
        return x.copy()
    tol = 1e-14 * max(1.0, level)
    mu = 0.0
    resid = math.inf
    for _ in range(ELLIPSOID_NEWTON_CAP):
        denom = 1.0 + mu * lam
        resid = float(np.sum(lam * c2 / denom**2)) - level
        if abs(resid) <= tol:
            break
        slope = float(-2.0 * np.sum(lam * lam * c2 / denom**3))
        step = resid / slope
        if not math.isfinite(step) or mu - step == mu:
            break
        mu -= step
    else:
        raise NumericError(f"ellipsoid projection stalled with residual {resid:.3e}")
    if abs(resid) > max(tol, 1e-9 * max(1.0, level)):
        raise NumericError(f"ellipsoid projection stalled with residual {resid:.3e}")
    return vecs @ (c / (1.0 + mu * lam))


def project_onto_ellipsoid(v, quad, level: float) -> np.ndarray:
    """Euclidean projection onto {w : w' Q w <= level} for PSD Q.

    Works in the eigenbasis of Q; the single KKT multiplier solves the
    secular equation by Newton iteration started at zero, which converges
    monotonically because the residual is convex and decreasing.  Zero
    eigendirections are unconstrained (a singular form describes an
    ellipsoidal cylinder); a negative eigenvalue is rejected since the set
    would not be convex.

    Raises
    ------
    NumericError
        If Newton fails to meet its residual target within the cap.
    """
    x = np.asarray(v, dtype=float)
    if level < 0.0:
        raise InputError("ellipsoid level must be nonnegative")
    lam, vecs = _eigh_psd(quad)
    return _project_in_eigenbasis(x, lam, vecs, level)


# ---------------------------------------------------------------------------
# Convex sets for Dykstra


@dataclass(frozen=True, eq=False)
class Ball:
    radius: float = 1.0

    def project(self, v: np.ndarray) -> np.ndarray:
        return project_onto_ball(v, self.radius)

    def contains(self, v: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        return float(np.linalg.norm(v)) <= self.radius + tol


@dataclass(frozen=True, eq=False)
class Halfspace:
    normal: np.ndarray
    offset: float

    def project(self, v: np.ndarray) -> np.ndarray:
        return project_onto_halfspace(v, self.normal, self.offset)

    def contains(self, v: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        return float(self.normal @ v) <= self.offset + tol


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    quad: np.ndarray
    level: float

    def __post_init__(self):
        # Eigenbasis cached once; Dykstra projects onto the same set many
        # thousands of times per solve.
        lam, vecs = _eigh_psd(self.quad)
        object.__setattr__(self, "_lam", lam)
        object.__setattr__(self, "_vecs", vecs)

    def project(self, v: np.ndarray) -> np.ndarray:
        if self.level < 0.0:
            raise InputError("ellipsoid level must be nonnegative")
        return _project_in_eigenbasis(
            np.asarray(v, dtype=float), self._lam, self._vecs, self.level  # type: ignore[attr-defined]
        )

    def contains(self, v: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        return float(v @ (self.quad @ v)) <= self.level + tol


def halfspaces_from_rows(rows: np.ndarray, rhs: np.ndarray) -> list[Halfspace]:
    return [Halfspace(rows[i], float(rhs[i])) for i in range(rows.shape[0])]


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    point: np.ndarray
    sweeps: int
    converged: bool


try:  # compiled cyclic sweep for ball-plus-halfspace collections
    from numba import njit as _njit

    @_njit(cache=True)
    def _cyclic_kernel(v, radius, rows, rhs, norms_sq, tol, max_sweeps):  # pragma: no cover
        d = v.shape[0]
        k = rows.shape[0]
        x = v.copy()
        ball_corr = np.zeros(d)
        corr = np.zeros((k, d))
        shifted = np.zeros(d)
        for sweep in range(1, max_sweeps + 1):
            biggest = 0.0
            if radius > 0.0:
                nrm = 0.0
                for j in range(d):
                    shifted[j] = x[j] + ball_corr[j]
                    nrm += shifted[j] * shifted[j]
                nrm = nrm**0.5
                scale = radius / nrm if nrm > radius else 1.0
                move = 0.0
                for j in range(d):
                    y = shifted[j] * scale
                    ball_corr[j] = shifted[j] - y
                    diff = y - x[j]
                    move += diff * diff
                    x[j] = y
                if move**0.5 > biggest:
                    biggest = move**0.5
            for i in range(k):
                slack = -rhs[i]
                for j in range(d):
                    shifted[j] = x[j] + corr[i, j]
                    slack += rows[i, j] * shifted[j]
                factor = slack / norms_sq[i] if slack > 0.0 else 0.0
                move = 0.0
                for j in range(d):
                    y = shifted[j] - factor * rows[i, j]
                    corr[i, j] = shifted[j] - y
                    diff = y - x[j]
                    move += diff * diff
                    x[j] = y
                if move**0.5 > biggest:
                    biggest = move**0.5
            if biggest < tol:
                return x, sweep, True
        return x, max_sweeps, False

    _HAVE_COMPILED_KERNEL = True
except ImportError:  # pragma: no cover
    _HAVE_COMPILED_KERNEL = False


def _vi_gap_certificate(v, p, sets) -> bool:
    # Certify near-optimality of a projection iterate: decompose the
    # residual v - p over outward normals of near-active constraints with
    # nonnegative weights (NNLS), then bound the variational-inequality gap
    # sup over feasible z of <v - p, z - p> by
    #   2 * misfit + sum_i weight_i * slack_i.
    # A gap below FEASIBILITY_TOL certifies the iterate at the same
    # tolerance every solver result is contracted to.
    from scipy.optimize import nnls

    residual = np.asarray(v, dtype=float) - p
    scale = max(1.0, float(np.linalg.norm(residual)))
    window = 1e-9 * scale
    normals = []
    slacks = []
    for s in sets:
        if isinstance(s, Halfspace):
            slack = s.offset - float(s.normal @ p)
            if slack < -window:
                return False
            if slack <= window:
                normals.append(s.normal)
                slacks.append(max(slack, 0.0))
        elif isinstance(s, Ball):
            gap = s.radius - float(np.linalg.norm(p))
            if gap < -window:
                return False
            if gap <= window:
                norm = float(np.linalg.norm(p))
                if norm > 0.0:
                    normals.append(p / norm)
                    slacks.append(max(gap, 0.0))
        elif isinstance(s, Ellipsoid):
            gap = s.level - float(p @ (s.quad @ p))
            if gap < -window * max(1.0, s.level):
                return False
            if gap <= window * max(1.0, s.level):
                normals.append(2.0 * (s.quad @ p))
                slacks.append(max(gap, 0.0))
        else:
            return False
    if not normals:
        return float(np.linalg.norm(residual)) <= FEASIBILITY_TOL
    weights, misfit = nnls(np.asarray(normals).T, residual)
    vi_bound = 2.0 * misfit + float(weights @ np.asarray(slacks))
    return vi_bound <= FEASIBILITY_TOL


def _as_ball_halfspace_system(sets):
    radius = 0.0
    normals = []
    offsets = []
    for i, s in enumerate(sets):
        if isinstance(s, Ball):
            if i != 0 or radius > 0.0:
                return None
            radius = s.radius
        elif isinstance(s, Halfspace):
            normals.append(s.normal)
            offsets.append(s.offset)
        else:
            return None
    if not normals:
        return None
    rows = np.asarray(normals, dtype=float)
    return radius, rows, np.asarray(offsets, dtype=float), (rows**2).sum(axis=1)


def project_intersection_dykstra(
    v,
    sets,
    tol: float = DYKSTRA_TOL,
    max_sweeps: int = DYKSTRA_MAX_SWEEPS,
) -> ProjectionResult:
    """Euclidean projection onto an intersection of closed convex sets.

    Dykstra's scheme with one correction per set; a sweep whose largest
    projection displacement falls below ``tol`` terminates.  Hitting the
    sweep cap returns the best iterate, which still counts as converged if
    a dual certificate bounds its variational-inequality gap within the
    solver feasibility tolerance; otherwise it is flagged unconverged.
    Ball-plus-halfspace collections (the polyhedral feasible regions, with
    hundreds of rows at eight features) run the identical cycle through a
    compiled kernel.
    """
    if not sets:
        raise InputError("at least one set is required")
    result = None
    if _HAVE_COMPILED_KERNEL and len(sets) > 3:
        system = _as_ball_halfspace_system(sets)
        if system is not None:
            radius, rows, rhs, norms_sq = system
            x, sweeps, ok = _cyclic_kernel(
                np.asarray(v, dtype=float).copy(), radius, rows, rhs, norms_sq,
                tol, max_sweeps,
            )
            result = ProjectionResult(x, int(sweeps), bool(ok))
    if result is None:
        x = np.asarray(v, dtype=float).copy()
        corrections = [np.zeros_like(x) for _ in sets]
        converged = False
        sweeps = max_sweeps
        for sweep in range(1, max_sweeps + 1):
            biggest = 0.0
            for i, s in enumerate(sets):
                shifted = x + corrections[i]
                y = s.project(shifted)
                corrections[i] = shifted - y
                biggest = max(biggest, float(np.linalg.norm(y - x)))
                x = y
            if biggest < tol:
                converged = True
                sweeps = sweep
                break
        result = ProjectionResult(x, sweeps, converged)
    if not result.converged and _vi_gap_certificate(v, result.point, sets):
        return ProjectionResult(result.point, result.sweeps, True)
    return result


# ---------------------------------------------------------------------------
# Closed-form solves


def solve_unconstrained(objective: Objective, w_star, coeff=None) -> EquilibriumResult:
    """Optimal deployable rule with no fairness constraint.

    Accuracy: the ground-truth rule, radially clipped to the unit ball.
    Welfare: the unit vector along the welfare coefficient; a zero
    coefficient is flagged degenerate and resolved to the zero rule.
    """
    objective = Objective(objective)
    ws = np.asarray(w_star, dtype=float)
    if objective is Objective.ACC:
        w = project_onto_ball(ws)
        value = -max(float(np.linalg.norm(ws)) - 1.0, 0.0) ** 2
        return EquilibriumResult(
            Policy(w), objective, value, math.nan, math.inf, Geometry.BALL_ONLY, 0, True
        )
    if coeff is None:
        raise InputError("welfare solve requires the coefficient vector")
    cv = np.asarray(coeff, dtype=float)
    n = float(np.linalg.norm(cv))
    if n <= DEGENERATE_COEFF_NORM:
        return EquilibriumResult(
            Policy(np.zeros_like(cv)), objective, 0.0, math.nan, math.inf,
            Geometry.BALL_ONLY, 0, True, degenerate=True,
        )
    w = cv / n
    return EquilibriumResult(
        Policy(w), objective, sw_value(w, cv), math.nan, math.inf, Geometry.BALL_ONLY, 0, True
    )


def solve_ellipsoid_sw(coeff, quad, level: float) -> EquilibriumResult:
    """Welfare maximization over {w : w' Q w <= level}, closed form.

    The optimum is ``sqrt(level) * Qinv c / ||Qinv^(1/2) c||``; the reported
    value is the dot product with the coefficient (so closed-form identities
    can be checked against it rather than against themselves).
    """
    cv = np.asarray(coeff, dtype=float)
    q = np.asarray(quad, dtype=float)
    n = float(np.linalg.norm(cv))
    if n <= DEGENERATE_COEFF_NORM:
        return EquilibriumResult(
            Policy(np.zeros_like(cv)), Objective.SW, 0.0, math.nan, level,
            Geometry.ELLIPSOID, 0, True, degenerate=True,
        )
    if level <= 0.0:
        return EquilibriumResult(
            Policy(np.zeros_like(cv)), Objective.SW, 0.0, 0.0, level, Geometry.ELLIPSOID, 0, True
        )
    qinv_c = np.linalg.solve(q, cv)
    scale = math.sqrt(level) / math.sqrt(float(cv @ qinv_c))
    w = scale * qinv_c
    return EquilibriumResult(
        Policy(w), Objective.SW, sw_value(w, cv), math.nan, level, Geometry.ELLIPSOID, 0, True
    )


def solve_sw_over_ball_and_ellipsoid(coeff, quad, level: float) -> tuple[np.ndarray, int, bool]:
    """Welfare maximization over the unit ball intersected with an ellipsoid.

    Stationarity puts the optimum along ``(I + g Q)^-1 c`` for a single
    nonnegative mixing weight g; after ruling out the two single-constraint
    cases, g is bisected to put the unit-norm candidate on the ellipsoid
    boundary.  Exact up to bisection precision.
    """
    cv = np.asarray(coeff, dtype=float)
    q = np.asarray(quad, dtype=float)
    n = float(np.linalg.norm(cv))
    if n <= DEGENERATE_COEFF_NORM:
        return np.zeros_like(cv), 0, True
    if level <= 0.0:
        lam, vecs = _eigh_psd(q)
        # only the kernel of the quadratic form is feasible at zero budget
        c = vecs.T @ cv
        c[lam > 0.0] = 0.0
        kernel_part = vecs @ c
        kn = float(np.linalg.norm(kernel_part))
        return (kernel_part / kn if kn > DEGENERATE_COEFF_NORM else np.zeros_like(cv)), 0, True
    ball_opt = cv / n
    if float(ball_opt @ (q @ ball_opt)) <= level:
        return ball_opt, 0, True
    lam, vecs = _eigh_psd(q)
    positive = lam > 1e-14 * max(1.0, float(lam[-1]))
    c_eig = vecs.T @ cv
    if float(np.linalg.norm(c_eig[~positive])) <= 1e-14 * n:
        # Coefficient lives on the constrained subspace: the ellipsoid
        # closed form applies there, and is optimal if it fits in the ball.
        scale_sq = float(np.sum(c_eig[positive] ** 2 / lam[positive]))
        if scale_sq > 0.0:
            w_eig = np.zeros_like(c_eig)
            w_eig[positive] = c_eig[positive] / lam[positive]
            w_eig *= math.sqrt(level) / math.sqrt(scale_sq)
            if float(np.linalg.norm(w_eig)) <= 1.0:
                return vecs @ w_eig, 0, True

    eye = np.eye(cv.shape[0])

    def candidate(g: float) -> np.ndarray:
        v = np.linalg.solve(eye + g * q, cv)
        return v / float(np.linalg.norm(v))

    def excess(g: float) -> float:
        w = candidate(g)
        return float(w @ (q @ w)) - level

    hi = 1.0
    iterations = 0
    while excess(hi) > 0.0:
        hi *= 4.0
        iterations += 1
        if hi > 1e18:
            return candidate(hi), iterations, False
    lo = 0.0
    for _ in range(200):
        iterations += 1
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return candidate(hi), iterations, True


# ---------------------------------------------------------------------------
# Linear maximization over an intersection


#: Far-point multipliers for linear maximization; the value error of rung T
#: is at most 1/(2T) on a smooth boundary and zero once a vertex captures
#: the optimum.  High rungs only pay off where Dykstra is cheap (few sets),
#: so each rung gets a bounded sweep budget and unconverged rungs are
#: discarded when a converged one exists.
_LADDER_RUNGS = (1e1, 1e2, 1e3, 1e5, 1e7)
_LADDER_SWEEP_BUDGET = 3000


def _linear_max_over_sets(coeff, sets) -> tuple[np.ndarray, int, bool]:
    cv = np.asarray(coeff, dtype=float)
    n = float(np.linalg.norm(cv))
    if n <= DEGENERATE_COEFF_NORM:
        zero = project_intersection_dykstra(np.zeros_like(cv), sets)
        return zero.point, zero.sweeps, zero.converged
    direction = cv / n
    candidates: list[tuple[float, np.ndarray, bool]] = []
    iterations = 0
    prev_val = None
    for t in _LADDER_RUNGS:
        res = project_intersection_dykstra(
            t * direction, sets,
            tol=max(DYKSTRA_TOL, 1e-15 * t),
            max_sweeps=_LADDER_SWEEP_BUDGET,
        )
        iterations += res.sweeps
        val = None
        if all(s.contains(res.point) for s in sets):
            val = float(cv @ res.point)
            candidates.append((val, res.point, res.converged))
        if not res.converged:
            # Sweep demand grows with the multiplier; higher rungs would
            # only burn the budget again.
            break
        if val is not None and prev_val is not None and abs(val - prev_val) <= 1e-12 * max(1.0, abs(val)):
            # Two consecutive rungs agree: the optimum sits on a vertex that
            # a finite multiplier already captures exactly.
            break
        prev_val = val
    if not candidates:
        res = project_intersection_dykstra(np.zeros(cv.shape[0]), sets)
        return res.point, iterations + res.sweeps, False
    best_val, best_w, _ = max(candidates, key=lambda c: c[0])
    # Feasibility of the best point is certified above, so its value stands
    # even off an unconverged rung; report convergence when a converged rung
    # achieves essentially the same value.
    converged = any(ok and val >= best_val - 1e-9 for val, _, ok in candidates)
    return best_w, iterations, converged


# ---------------------------------------------------------------------------
# Fairness-constrained solve (convex kinds)


def _feasible_sets_for_spec(spec: FairnessSpec) -> tuple[list, Geometry]:
    if spec.kind is FairnessKind.L1:
        rows, rhs = polyhedron_rows(spec.matrix, spec.beta)
        return [Ball(1.0)] + halfspaces_from_rows(rows, rhs), Geometry.POLY_BALL
    if spec.kind is FairnessKind.L2:
        q = spec.quad
        lam_min = float(np.linalg.eigvalsh((q + q.T) / 2.0)[0])
        if lam_min > 0.0 and spec.beta <= lam_min:
            # Fair ellipsoid sits inside the unit ball: the ball is redundant.
            return [Ellipsoid(q, spec.beta)], Geometry.ELLIPSOID
        return [Ball(1.0), Ellipsoid(q, spec.beta)], Geometry.ELLIPSOID_BALL
    raise InputError(f"convex dispatch got nonconvex kind {spec.kind}")


def solve_constrained(objective: Objective, spec: FairnessSpec, s: Scenario) -> EquilibriumResult:
    """Optimal deployable rule subject to a convex fairness budget.

    Accuracy routes to Euclidean projection of the ground-truth rule onto
    the feasible region; welfare routes to the ellipsoid closed form when
    the fair set is an ellipsoid inside the ball and to projection-based
    linear maximization otherwise.  If the unconstrained optimum is already
    within budget it is returned unchanged.
    """
    objective = Objective(objective)
    if not spec.convex:
        raise InputError("solve_constrained handles convex kinds; use the nonconvex solvers")
    coeff = sw_coefficient(s) if objective is Objective.SW else None
    unconstrained = solve_unconstrained(objective, s.ground_truth, coeff)
    d_u = spec.delta(unconstrained.policy.weights)
    sets, geometry = _feasible_sets_for_spec(spec)
    if d_u <= spec.beta + 1e-15:
        return EquilibriumResult(
            unconstrained.policy, objective, unconstrained.objective_value, d_u,
            spec.beta, geometry, 0, True, degenerate=unconstrained.degenerate,
        )

    if objective is Objective.ACC:
        if geometry is Geometry.ELLIPSOID:
            w = project_onto_ellipsoid(s.ground_truth, spec.quad, spec.beta)
            iters, ok = 1, True
        else:
            res = project_intersection_dykstra(s.ground_truth, sets)
            w, iters, ok = res.point, res.sweeps, res.converged
        return EquilibriumResult(
            Policy(w), objective, accuracy_value(w, s.ground_truth), spec.delta(w),
            spec.beta, geometry, iters, ok,
        )

    if geometry is Geometry.ELLIPSOID:
        res = solve_ellipsoid_sw(coeff, spec.quad, spec.beta)
        return EquilibriumResult(
            res.policy, objective, res.objective_value, spec.delta(res.policy.weights),
            spec.beta, geometry, res.iterations, True, degenerate=res.degenerate,
        )
    if geometry is Geometry.ELLIPSOID_BALL:
        w, iters, ok = solve_sw_over_ball_and_ellipsoid(coeff, spec.quad, spec.beta)
    else:
        w, iters, ok = _linear_max_over_sets(coeff, sets)
    return EquilibriumResult(
        Policy(w), objective, sw_value(w, coeff), spec.delta(w), spec.beta, geometry, iters, ok
    )


# ---------------------------------------------------------------------------
# Nonconvex kinds: restriction, envelope, multistart


def _require_core(spec: FairnessSpec, core: PropertyCheck | None) -> PropertyCheck:
    check = core if core is not None else check_quadratic_core(spec)
    if not check.satisfied:
        raise ContractError(f"quadratic core not verified: {check.reason}")
    return check


def _solve_over_quadratic_region(
    objective: Objective,
    quad: np.ndarray,
    level: float,
    s: Scenario,
    intersect_ball: bool,
) -> tuple[np.ndarray, float, int, bool, bool]:
    coeff = sw_coefficient(s) if objective is Objective.SW else None
    if objective is Objective.ACC:
        if intersect_ball:
            res = project_intersection_dykstra(s.ground_truth, [Ball(1.0), Ellipsoid(quad, level)])
            w, iters, ok = res.point, res.sweeps, res.converged
        else:
            w, iters, ok = project_onto_ellipsoid(s.ground_truth, quad, level), 1, True
        return w, accuracy_value(w, s.ground_truth), iters, ok, False
    if intersect_ball:
        w, iters, ok = solve_sw_over_ball_and_ellipsoid(coeff, quad, level)
        return w, sw_value(w, coeff), iters, ok, False
    res = solve_ellipsoid_sw(coeff, quad, level)
    return res.policy.weights, res.objective_value, res.iterations, True, res.degenerate


def solve_nonconvex_restricted(
    objective: Objective,
    spec: FairnessSpec,
    s: Scenario,
    core: PropertyCheck | None = None,
) -> EquilibriumResult:
    """Solve over the ellipsoidal core of a nonconvex fair set.

    The core is contained in both the fair set and the unit ball, so the
    result is always within budget and deployable; its value lower-bounds
    the true nonconvex optimum.
    """
    objective = Objective(objective)
    _require_core(spec, core)
    w, value, iters, ok, degenerate = _solve_over_quadratic_region(
        objective, spec.quad, spec.beta, s, intersect_ball=False
    )
    return EquilibriumResult(
        Policy(w), objective, value, spec.delta(w), spec.beta,
        Geometry.NONCONVEX_RESTRICTED, iters, ok, degenerate=degenerate,
    )


def solve_nonconvex_envelope(
    objective: Objective,
    spec: FairnessSpec,
    s: Scenario,
    core: PropertyCheck | None = None,
) -> EquilibriumResult:
    """Solve over the ellipsoidal envelope (budget inflated by Lipschitz slack).

    The envelope contains the whole fair set, so the value upper-bounds the
    true nonconvex optimum; the inflated ellipsoid may poke outside the unit
    ball, in which case the ball constraint is kept active.
    """
    objective = Objective(objective)
    check = _require_core(spec, core)
    inflated = spec.beta + check.details["lipschitz"] * check.details["diameter"]
    lam_min = check.details["lambda_min"]
    w, value, iters, ok, degenerate = _solve_over_quadratic_region(
        objective, spec.quad, inflated, s, intersect_ball=inflated > lam_min
    )
    return EquilibriumResult(
        Policy(w), objective, value, spec.delta(w), spec.beta,
        Geometry.NONCONVEX_ENVELOPE, iters, ok, degenerate=degenerate,
    )


def _restore_feasible(w: np.ndarray, spec: FairnessSpec) -> np.ndarray:
    # The zero rule is always within budget, so the segment toward the origin
    # crosses the fair set; radial bisection lands on a feasible point.
    w = project_onto_ball(w)
    if spec.delta(w) <= spec.beta:
        return w
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = (lo + hi) / 2.0
        if spec.delta(mid * w) <= spec.beta:
            lo = mid
        else:
            hi = mid
    return lo * w


def _polish(w: np.ndarray, spec: FairnessSpec, value_fn, grad_fn) -> tuple[np.ndarray, float]:
    best_w = w
    best_v = value_fn(w)
    for step in (1.0, 0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4, 1e-5, 1e-6, 1e-7):
        improved = True
        budget = 60
        while improved and budget > 0:
            budget -= 1
            candidate = _restore_feasible(best_w + step * grad_fn(best_w), spec)
            v = value_fn(candidate)
            if v > best_v + 1e-15:
                best_w, best_v = candidate, v
            else:
                improved = False
    return best_w, best_v


def _grid_candidates(spec: FairnessSpec, resolution: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, resolution)
    xx, yy = np.meshgrid(axis, axis)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
    if spec.kind is FairnessKind.ASYM:
        a = (spec.privileged_map @ pts.T) ** 2
        b = (spec.other_map @ pts.T) ** 2
        deltas = a.sum(axis=0) - b.sum(axis=0)
    elif spec.kind is FairnessKind.L1:
        deltas = np.abs(spec.matrix @ pts.T).sum(axis=0)
    elif spec.kind is FairnessKind.L2:
        deltas = ((spec.matrix @ pts.T) ** 2).sum(axis=0)
    else:
        deltas = np.array([spec.delta(p) for p in pts])
    return pts[deltas <= spec.beta]


def solve_nonconvex_multistart(
    objective: Objective,
    spec: FairnessSpec,
    s: Scenario,
    starts: int = 64,
    seed: int = 0,
    grid_resolution: int = 301,
) -> EquilibriumResult:
    """Heuristic solve of the true nonconvex problem by multistart ascent.

    Runs projected-gradient ascent (feasibility restored by radial bisection
    toward the origin) from random starts plus deterministic ones: the zero
    rule, the restricted-core solution when available, the clipped
    ground-truth rule, the welfare direction, and for two-dimensional
    problems the best points of a dense feasible grid (``grid_resolution``
    per axis, 0 to skip).  The result is a certified-feasible lower bound on
    the optimum, flagged heuristic.
    """
    objective = Objective(objective)
    d = s.dimension
    coeff = sw_coefficient(s) if objective is Objective.SW else None
    if objective is Objective.ACC:
        value_fn = lambda w: accuracy_value(w, s.ground_truth)
        grad_fn = lambda w: 2.0 * (s.ground_truth - w)
    else:
        value_fn = lambda w: sw_value(w, coeff)
        grad_fn = lambda w: coeff

    candidates: list[np.ndarray] = [np.zeros(d), project_onto_ball(s.ground_truth)]
    if coeff is not None and float(np.linalg.norm(coeff)) > DEGENERATE_COEFF_NORM:
        candidates.append(coeff / float(np.linalg.norm(coeff)))
    try:
        restricted = solve_nonconvex_restricted(objective, spec, s)
        candidates.append(restricted.policy.weights)
    except (ContractError, InputError):
        pass
    if d == 2 and grid_resolution > 1:
        grid = _grid_candidates(spec, resolution=grid_resolution)
        if grid.shape[0] > 0:
            values = np.array([value_fn(p) for p in grid])
            top = grid[np.argsort(values)[-12:]]
            candidates.extend(list(top))
    rng = derived_rng(seed, 97)
    raw = rng.standard_normal((max(int(starts), 0), d))
    candidates.extend(list(raw))

    best_w = np.zeros(d)
    best_v = value_fn(best_w)
    for start in candidates:
        w0 = _restore_feasible(np.asarray(start, dtype=float), spec)
        w, v = _polish(w0, spec, value_fn, grad_fn)
        if v > best_v:
            best_w, best_v = w, v
    return EquilibriumResult(
        Policy(best_w), objective, best_v, spec.delta(best_w), spec.beta,
        Geometry.NONCONVEX_MULTISTART, len(candidates), True, heuristic=True,
    )
