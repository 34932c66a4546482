"""Optimality-loss upper bounds with precondition gating.

Each bound applies only under a verified geometry condition; a report entry
is emitted only when every one of its preconditions holds, echoing the
inputs the formula consumed and, when solvers are run, the realized loss it
is checked against.  Bound arithmetic accumulates sums with compensated
summation so that 1e-12-level comparisons stay meaningful.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import ContractError, InputError
from .fairness import (
    FairnessSpec,
    PropertyCheck,
    assess_geometry,
    check_quadratic_core,
    discrepancy_matrix,
    polyhedron_rows,
)
from .model import Scenario
from .objectives import Objective, sw_coefficient
from .rng import derived_rng
from . import solvers

#: Enumeration budget (number of row subsets) for exact Hoffman constants.
HOFFMAN_BUDGET = 10**6
#: Numerical-rank cutoff for row subsets.
_RANK_TOL = 1e-10


def _fsum_norm_sq(v) -> float:
    return math.fsum(float(x) * float(x) for x in np.asarray(v, dtype=float))


def _fsum_norm(v) -> float:
    return math.sqrt(_fsum_norm_sq(v))


def quad_inverse_norm(v, quad) -> float:
    """Norm of v in the inverse of a PD quadratic form."""
    vv = np.asarray(v, dtype=float)
    return math.sqrt(float(vv @ np.linalg.solve(np.asarray(quad, dtype=float), vv)))


def generic_loss_bounds(w_star, coeff) -> tuple[float, float]:
    """Smoothness-only loss bounds: no geometry assumption beyond the ball."""
    acc = 4.0 * (_fsum_norm(w_star) + 1.0)
    sw = 2.0 * _fsum_norm(coeff)
    return acc, sw


# ---------------------------------------------------------------------------
# Hoffman constants


@dataclass(frozen=True)
class HoffmanResult:
    """Hoffman constant of an inequality system's matrix.

    ``certified`` marks an exact enumeration; otherwise ``value`` is a
    sampled lower bound and must not be used as an upper-bound certificate.
    """

    value: float
    certified: bool
    subsets_examined: int


def _sign_consistent_eigen_candidates(gram: np.ndarray) -> list[float]:
    # Candidate minima of the quadratic form over the unit sphere intersected
    # with the nonnegative orthant: eigenvalues whose eigenspace meets the
    # orthant.  Clustered eigenvalues get a small feasibility LP because the
    # returned basis of a multiple eigenvalue need not expose a nonnegative
    # vector even when the eigenspace contains one.
    lam, vecs = np.linalg.eigh(gram)
    out: list[float] = []
    m = gram.shape[0]
    i = 0
    while i < m:
        j = i + 1
        while j < m and lam[j] - lam[i] <= 1e-9 * max(1.0, abs(lam[i])):
            j += 1
        block = vecs[:, i:j]
        if j - i == 1:
            v = block[:, 0]
            if np.all(v >= -1e-12) or np.all(v <= 1e-12):
                out.append(float(lam[i]))
        else:
            res = linprog(
                c=np.zeros(j - i),
                A_ub=-block,
                b_ub=np.zeros(m),
                A_eq=block.sum(axis=0, keepdims=True),
                b_eq=np.ones(1),
                bounds=[(None, None)] * (j - i),
                method="highs",
            )
            if res.status == 0:
                out.append(float(lam[i]))
        i = j
    return out


def _sampled_hoffman_lower_bound(rows: np.ndarray, samples: int, seed: int) -> float:
    rhs = np.ones(rows.shape[0])
    sets = solvers.halfspaces_from_rows(rows, rhs)
    rng = derived_rng(seed, 41)
    best = 0.0
    for _ in range(samples):
        z = rng.standard_normal(rows.shape[1]) * 3.0
        resid = _fsum_norm(np.clip(rows @ z - rhs, 0.0, None))
        if resid <= 1e-12:
            continue
        proj = solvers.project_intersection_dykstra(z, sets)
        dist = float(np.linalg.norm(z - proj.point))
        best = max(best, dist / resid)
    return best


def hoffman_constant(rows, budget: int = HOFFMAN_BUDGET, seed: int = 0) -> HoffmanResult:
    """Hoffman constant for {w : rows @ w <= b}, exact within a subset budget.

    Enumerates row subsets with linearly independent rows; each subset
    contributes the reciprocal square root of the smallest Gram eigenvalue
    whose eigenspace meets the nonnegative orthant (the subset's active
    cone).  The maximum over subsets is the exact constant.  When the
    enumeration exceeds ``budget`` subsets, a Monte Carlo lower bound is
    returned instead, flagged uncertified.
    """
    a = np.asarray(rows, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1:
        raise InputError("rows must form a nonempty 2-d matrix")
    k, d = a.shape
    limit = min(k, d)
    total = sum(math.comb(k, m) for m in range(1, limit + 1))
    if total > budget:
        return HoffmanResult(_sampled_hoffman_lower_bound(a, samples=60, seed=seed), False, 0)

    smallest_candidate = math.inf
    examined = 0
    for m in range(1, limit + 1):
        for subset in itertools.combinations(range(k), m):
            examined += 1
            sub = a[list(subset)]
            sv = np.linalg.svd(sub, compute_uv=False)
            if sv[-1] <= _RANK_TOL * max(1.0, sv[0]):
                continue
            gram = sub @ sub.T
            for lam in _sign_consistent_eigen_candidates(gram):
                if lam > 0.0:
                    smallest_candidate = min(smallest_candidate, lam)
    if not math.isfinite(smallest_candidate):
        raise InputError("no independent row subset found; matrix is zero")
    return HoffmanResult(1.0 / math.sqrt(smallest_candidate), True, examined)


def polyhedral_acc_bound(m, beta: float, w_star, hoffman: HoffmanResult | None = None) -> float:
    """Accuracy-loss bound over a polyhedral feasible region.

    Uses the clipped ground-truth rule; every positive constraint residual
    enters (the positive part is applied componentwise).
    """
    rows, rhs = polyhedron_rows(m, beta)
    h = hoffman if hoffman is not None else hoffman_constant(rows)
    ws = np.asarray(w_star, dtype=float)
    n = _fsum_norm(ws)
    w_prime = ws if n <= 1.0 else ws / n
    resid_sq = math.fsum(
        max(float(r), 0.0) ** 2 for r in (rows @ w_prime - rhs)
    )
    return h.value * h.value * resid_sq


def ellipsoid_sw_bound() -> float:
    """Constant welfare-loss bound for an ellipsoidal fair set.

    Valid at unit welfare scale (coefficient norm at most one); the report
    assembly gates on that, since the loss grows linearly with the
    coefficient norm.
    """
    return math.sqrt(2.0)


def internal_ellipsoid_bounds(quad, beta: float, w_star, coeff) -> tuple[float, float]:
    """Loss bounds when the feasible region is an ellipsoid inside the ball.

    Accuracy gets an upper bound from the ellipsoid's reach and the
    ground-truth norm; the welfare loss is exact (difference of the two
    closed-form optima).
    """
    q = np.asarray(quad, dtype=float)
    lam_min = float(np.linalg.eigvalsh((q + q.T) / 2.0)[0])
    if lam_min <= 0.0:
        raise ContractError("internal-ellipsoid bounds need a PD quadratic form")
    ws = np.asarray(w_star, dtype=float)
    reach = math.sqrt(beta / lam_min)
    outside = float(ws @ (q @ ws)) > beta
    w_norm = _fsum_norm(ws)
    q_term = (reach + w_norm) if outside else 0.0
    s_term = (min(1.0, w_norm) + reach) if outside else 0.0
    t_term = 2.0 * reach
    acc = 2.0 * q_term * (t_term + s_term)
    cv = np.asarray(coeff, dtype=float)
    sw = _fsum_norm(cv) - math.sqrt(beta) * quad_inverse_norm(cv, q)
    return acc, sw


def nonconvex_se_bounds(core: PropertyCheck, w_star, coeff) -> tuple[float, float]:
    """Loss bounds for a nonconvex fair set, via its ellipsoidal core."""
    if not core.satisfied:
        raise ContractError("quadratic-core membership not verified")
    return internal_ellipsoid_bounds(core.details["quad"], _core_beta(core), w_star, coeff)


def _core_beta(core: PropertyCheck) -> float:
    return float(core.details["beta"])


def restriction_loss_bounds(core: PropertyCheck, w_star, coeff) -> tuple[float, float]:
    """Bounds on the loss from solving over the core instead of the fair set.

    The inflation adds the penalty's Lipschitz slack to the budget; the
    accuracy bound caps the envelope reach at both the ball radius and the
    ground-truth norm, and the welfare bound collapses to zero as the slack
    vanishes.
    """
    if not core.satisfied:
        raise ContractError("quadratic-core membership not verified")
    q = core.details["quad"]
    beta = _core_beta(core)
    lam_min = core.details["lambda_min"]
    slack = core.details["lipschitz"] * core.details["diameter"]
    ws = np.asarray(w_star, dtype=float)
    reach_core = math.sqrt(beta / lam_min)
    reach_env = math.sqrt((beta + slack) / lam_min)
    outside = float(ws @ (q @ ws)) > beta
    w_norm = _fsum_norm(ws)
    a_term = (reach_core + min(1.0, w_norm, reach_env)) if outside else 0.0
    c_term = (reach_core + w_norm) if outside else 0.0
    e_term = 2.0 * reach_core
    acc = 2.0 * c_term * (a_term + e_term)
    cv = np.asarray(coeff, dtype=float)
    inv_norm = quad_inverse_norm(cv, q)
    sw = min(_fsum_norm(cv), math.sqrt(beta + slack) * inv_norm) - math.sqrt(beta) * inv_norm
    return acc, sw


@dataclass(frozen=True)
class TightnessVerdict:
    """Comparison of the restriction-loss bounds against the equilibrium bounds."""

    conditions_met: bool
    truth_outside_core: bool
    envelope_inside_ball: bool
    truth_beyond_envelope_reach: bool
    se_acc_bound: float
    se_sw_bound: float
    restriction_acc_bound: float
    restriction_sw_bound: float
    strictly_tighter_acc: bool | None = None
    strictly_tighter_sw: bool | None = None


def restriction_tightness_check(core: PropertyCheck, w_star, coeff) -> TightnessVerdict:
    """Decide whether the restriction-loss bounds strictly beat the SE bounds.

    Three conditions: the ground-truth rule is outside the core ellipsoid,
    the inflated envelope still fits strictly inside the unit ball, and the
    ground-truth norm strictly exceeds the envelope's reach.  When all hold
    the restriction bounds are strictly tighter for both objectives
    (welfare additionally needs a nonzero coefficient).
    """
    if not core.satisfied:
        raise ContractError("quadratic-core membership not verified")
    q = core.details["quad"]
    beta = _core_beta(core)
    lam_min = core.details["lambda_min"]
    slack = core.details["lipschitz"] * core.details["diameter"]
    ws = np.asarray(w_star, dtype=float)
    outside = float(ws @ (q @ ws)) > beta
    env_inside = slack < lam_min - beta
    beyond_reach = _fsum_norm(ws) > math.sqrt((beta + slack) / lam_min)
    met = outside and env_inside and beyond_reach
    se_acc, se_sw = nonconvex_se_bounds(core, w_star, coeff)
    res_acc, res_sw = restriction_loss_bounds(core, w_star, coeff)
    tighter_acc = tighter_sw = None
    if met:
        tighter_acc = res_acc < se_acc
        tighter_sw = res_sw < se_sw if _fsum_norm(coeff) > 0.0 else None
    return TightnessVerdict(
        met, outside, env_inside, beyond_reach, se_acc, se_sw, res_acc, res_sw,
        tighter_acc, tighter_sw,
    )


# ---------------------------------------------------------------------------
# Report assembly


@dataclass(frozen=True, eq=False)
class BoundEntry:
    name: str
    objective: str
    value: float
    preconditions: dict[str, bool] = field(default_factory=dict)
    inputs: dict[str, float] = field(default_factory=dict)
    realized_loss: float | None = None
    valid: bool | None = None
    certified: bool = True


@dataclass(frozen=True, eq=False)
class BoundsReport:
    """Every applicable bound for one (scenario, fairness) instance."""

    entries: tuple[BoundEntry, ...]
    tightness: TightnessVerdict | None = None

    def to_text(self) -> str:
        lines = ["bound                     obj  value            realized         valid"]
        for e in self.entries:
            realized = f"{e.realized_loss:.10g}" if e.realized_loss is not None else "-"
            valid = {True: "yes", False: "NO", None: "-"}[e.valid]
            cert = "" if e.certified else "  (uncertified)"
            lines.append(f"{e.name:<25} {e.objective:<4} {e.value:<16.10g} {realized:<16} {valid}{cert}")
        if self.tightness is not None:
            t = self.tightness
            lines.append(
                "restriction-vs-SE tightness: conditions "
                + ("met" if t.conditions_met else "not met")
                + (f"; strictly tighter acc={t.strictly_tighter_acc} sw={t.strictly_tighter_sw}"
                   if t.conditions_met else "")
            )
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        def fmt(x: float) -> str:
            return f"{x:.17g}"

        rows = ["bound,objective,value,realized_loss,valid,certified,preconditions,inputs"]
        for e in self.entries:
            pre = ";".join(f"{k}={v}" for k, v in sorted(e.preconditions.items()))
            inp = ";".join(f"{k}={fmt(v)}" for k, v in sorted(e.inputs.items()))
            realized = fmt(e.realized_loss) if e.realized_loss is not None else ""
            valid = "" if e.valid is None else str(e.valid).lower()
            rows.append(
                f"{e.name},{e.objective},{fmt(e.value)},{realized},{valid},"
                f"{str(e.certified).lower()},{pre},{inp}"
            )
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(rows) + "\n")


def _realized_losses(s: Scenario, spec: FairnessSpec, starts: int, seed: int) -> dict[str, float]:
    coeff = sw_coefficient(s)
    out: dict[str, float] = {}
    for objective in (Objective.ACC, Objective.SW):
        unconstrained = solvers.solve_unconstrained(objective, s.ground_truth, coeff)
        if spec.convex:
            constrained = solvers.solve_constrained(objective, spec, s)
        else:
            constrained = solvers.solve_nonconvex_multistart(objective, spec, s, starts=starts, seed=seed)
            try:
                restricted = solvers.solve_nonconvex_restricted(objective, spec, s)
                out[f"restriction_gap_{objective.value}"] = (
                    constrained.objective_value - restricted.objective_value
                )
            except ContractError:
                pass
        out[objective.value] = unconstrained.objective_value - constrained.objective_value
    return out


def bounds_report(
    s: Scenario,
    spec: FairnessSpec,
    run_solvers: bool = True,
    starts: int = 32,
    seed: int = 0,
) -> BoundsReport:
    """Assemble every bound whose preconditions hold for this instance."""
    ws = s.ground_truth
    coeff = sw_coefficient(s)
    realized = _realized_losses(s, spec, starts, seed) if run_solvers else {}

    def entry(name, objective, value, preconditions, inputs, realized_key=None,
              certified=True, equality=False) -> BoundEntry:
        rl = realized.get(realized_key or objective)
        valid = None
        if rl is not None:
            valid = abs(rl - value) <= 1e-9 if equality else rl <= value + 1e-8
        return BoundEntry(name, objective, value, preconditions, inputs, rl, valid, certified)

    entries: list[BoundEntry] = []
    acc_generic, sw_generic = generic_loss_bounds(ws, coeff)
    base_inputs = {"w_star_norm": _fsum_norm(ws), "coeff_norm": _fsum_norm(coeff), "beta": spec.beta}
    entries.append(entry("generic_acc", "acc", acc_generic, {}, base_inputs))
    entries.append(entry("generic_sw", "sw", sw_generic, {}, base_inputs))

    tightness = None
    if spec.convex:
        report = assess_geometry(s, spec)
        poly = report.get("polyhedral_region")
        fair_ell = report.get("fair_set_ellipsoid")
        feas_ell = report.get("feasible_ellipsoid")
        m = spec.matrix if spec.matrix is not None else discrepancy_matrix(s).matrix
        if spec.kind.value == "l1" and poly is not None and poly.satisfied:
            rows, _ = polyhedron_rows(m, spec.beta)
            h = hoffman_constant(rows)
            value = polyhedral_acc_bound(m, spec.beta, ws, hoffman=h)
            entries.append(entry(
                "polyhedral_acc", "acc", value,
                {"polyhedral_region": True},
                dict(base_inputs, hoffman=h.value, sigma_min=poly.details["sigma_min"]),
                certified=h.certified,
            ))
        if spec.kind.value == "l2" and fair_ell is not None and fair_ell.satisfied:
            if _fsum_norm(coeff) <= 1.0:
                entries.append(entry(
                    "ellipsoid_sw_const", "sw", ellipsoid_sw_bound(),
                    {"fair_set_ellipsoid": True, "welfare_scale_at_most_one": True},
                    base_inputs,
                ))
            if feas_ell is not None and feas_ell.satisfied:
                q = fair_ell.details["quad"]
                acc_b, sw_b = internal_ellipsoid_bounds(q, spec.beta, ws, coeff)
                lam_min = feas_ell.details["lambda_min"]
                inp = dict(base_inputs, lambda_min=lam_min)
                entries.append(entry(
                    "internal_ellipsoid_acc", "acc", acc_b, {"feasible_ellipsoid": True}, inp
                ))
                entries.append(entry(
                    "internal_ellipsoid_sw", "sw", sw_b, {"feasible_ellipsoid": True}, inp,
                    equality=True,
                ))
    else:
        core = check_quadratic_core(spec)
        if core.satisfied:
            acc_b, sw_b = nonconvex_se_bounds(core, ws, coeff)
            inp = dict(base_inputs, lambda_min=core.details["lambda_min"],
                       lipschitz=core.details["lipschitz"], diameter=core.details["diameter"])
            entries.append(entry("nonconvex_core_acc", "acc", acc_b, {"quadratic_core": True}, inp))
            entries.append(entry("nonconvex_core_sw", "sw", sw_b, {"quadratic_core": True}, inp))
            res_acc, res_sw = restriction_loss_bounds(core, ws, coeff)
            entries.append(entry(
                "restriction_gap_acc", "acc", res_acc, {"quadratic_core": True}, inp,
                realized_key="restriction_gap_acc",
            ))
            entries.append(entry(
                "restriction_gap_sw", "sw", res_sw, {"quadratic_core": True}, inp,
                realized_key="restriction_gap_sw",
            ))
            tightness = restriction_tightness_check(core, ws, coeff)
    return BoundsReport(tuple(entries), tightness)
