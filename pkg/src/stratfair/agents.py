"""Peer learning of the deployed rule and closed-form agent best responses.

Agents never see the deployed rule directly: each one fits the minimum-norm
least-squares rule consistent with peers' (features, score) pairs, which on a
group subspace reduces to projecting the true rule onto that subspace.  Given
the estimate, the utility-maximizing exogenous effort has a closed form
through the cost matrix and the contribution matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .model import ContributionMatrix, GroupParams, GroupSampler

#: Relative singular-value cutoff for the min-norm least-squares solve.
ERM_RCOND = 1e-10


@dataclass(frozen=True, eq=False)
class PeerDataset:
    """Observed peers: feature rows and their scores under the deployed rule."""

    features: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        y = np.asarray(self.scores, dtype=float)
        if f.ndim != 2 or y.ndim != 1 or f.shape[0] != y.shape[0]:
            raise InputError("peer features must be (n, d) with n matching scores")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "scores", y)

    @staticmethod
    def sample(
        sampler: GroupSampler,
        w,
        n: int,
        rng: np.random.Generator,
        noise_std: float = 0.0,
    ) -> "PeerDataset":
        """Draw n peers from a group sampler and score them with rule w.

        ``noise_std`` adds optional Gaussian score noise (diagnostics only;
        the observation model is noiseless by default).
        """
        x = sampler.draw(n, rng)
        y = x @ np.asarray(w, dtype=float)
        if noise_std > 0.0:
            y = y + noise_std * rng.standard_normal(n)
        return PeerDataset(x, y)


@dataclass(frozen=True, eq=False)
class BestResponse:
    """An agent's move: exogenous effort, resulting features, utility."""

    exogenous_effort: np.ndarray
    altered_features: np.ndarray
    utility: float


def peer_estimate_closed_form(projector, w) -> np.ndarray:
    """Closed form of the peer-learned rule: the projector applied to w."""
    p = np.asarray(projector, dtype=float)
    v = np.asarray(w, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[1] != v.shape[0]:
        raise InputError("projector/rule dimension mismatch")
    return p @ v


def peer_estimate_erm(features, scores) -> np.ndarray:
    """Minimum-Euclidean-norm least-squares rule fitting the peer data.

    Ties among least-squares solutions are broken toward the smallest norm
    (pseudoinverse solution); singular values below ``ERM_RCOND`` times the
    largest are treated as zero.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(scores, dtype=float)
    return np.linalg.pinv(x, rcond=ERM_RCOND) @ y


def best_response_effort(w, group: GroupParams, contribution: ContributionMatrix) -> np.ndarray:
    """Utility-maximizing exogenous effort for one group.

    Solves the stationarity condition of the concave effort utility:
    cost @ effort = contribution.T @ projector @ w.
    """
    v = np.asarray(w, dtype=float)
    target = contribution.entries.T @ (group.projector @ v)
    try:
        return np.linalg.solve(group.cost, target)
    except np.linalg.LinAlgError as exc:
        from .errors import StructuralError

        raise StructuralError("cost matrix is singular; best response undefined") from exc


def altered_features(x, effort, contribution: ContributionMatrix) -> np.ndarray:
    """Features the principal observes: original plus propagated effort."""
    xv = np.asarray(x, dtype=float)
    ev = np.asarray(effort, dtype=float)
    if xv.shape != ev.shape or xv.shape[-1] != contribution.dimension:
        raise InputError("feature/effort dimension mismatch")
    return xv + ev @ contribution.entries.T if xv.ndim > 1 else xv + contribution.entries @ ev


def agent_utility(x, effort, group: GroupParams, contribution: ContributionMatrix, w) -> float:
    """Anticipated score minus quadratic effort cost.

    The score uses the peer-learned estimate (projector applied to w) on the
    altered features.
    """
    est = peer_estimate_closed_form(group.projector, w)
    xp = altered_features(x, effort, contribution)
    ev = np.asarray(effort, dtype=float)
    return float(est @ xp - 0.5 * ev @ (group.cost @ ev))


def best_response(x, w, group: GroupParams, contribution: ContributionMatrix) -> BestResponse:
    """Bundle the closed-form effort with its altered features and utility."""
    effort = best_response_effort(w, group, contribution)
    return BestResponse(
        exogenous_effort=effort,
        altered_features=altered_features(x, effort, contribution),
        utility=agent_utility(x, effort, group, contribution, w),
    )
