"""The principal's two objectives: closed forms and Monte Carlo estimators.

Accuracy reduces to negative squared distance between the deployed rule and
the ground-truth rule; social welfare reduces to a linear functional whose
coefficient vector aggregates both groups' response maps.  The Monte Carlo
estimators evaluate the raw expectation definitions over the group samplers
and exist to cross-check the closed forms (welfare) or as a diagnostic
(accuracy; the closed form is the objective of record).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .agents import best_response_effort
from .errors import InputError
from .model import Scenario
from .rng import derived_rng


class Objective(str, enum.Enum):
    ACC = "acc"
    SW = "sw"


def accuracy_value(w, w_star) -> float:
    """Negative squared Euclidean distance between rule and ground truth."""
    diff = np.asarray(w_star, dtype=float) - np.asarray(w, dtype=float)
    return -float(diff @ diff)


def sw_coefficient(s: Scenario) -> np.ndarray:
    """Coefficient vector making welfare maximization linear in the rule.

    Sums, over both groups, the transpose of (contribution @ inverse cost @
    contribution.T @ projector) applied to the ground-truth rule.
    """
    c = s.contribution.entries
    acc = np.zeros((s.dimension, s.dimension))
    for g in s.groups:
        acc += c @ np.linalg.solve(g.cost, c.T @ g.projector)
    return acc.T @ s.ground_truth


def sw_value(w, coeff) -> float:
    """Welfare of a rule, up to the rule-independent baseline terms.

    The dropped constants (expected pre-move score of each group) cancel in
    every loss comparison; :func:`monte_carlo_sw` keeps them, so compare
    Monte Carlo results as differences.
    """
    return float(np.asarray(coeff, dtype=float) @ np.asarray(w, dtype=float))


@dataclass(frozen=True)
class MonteCarloEstimate:
    """An empirical mean with its standard error and provenance."""

    value: float
    stderr: float
    draws_per_group: int
    seed: int


def _group_draws(s: Scenario, gi: int, n: int, seed: int) -> np.ndarray:
    sampler = s.groups[gi].sampler
    if sampler is None:
        raise InputError(f"group {gi + 1} has no sampler; Monte Carlo undefined")
    return sampler.draw(n, derived_rng(seed, gi))


def monte_carlo_sw(s: Scenario, w, n: int, seed: int = 0) -> MonteCarloEstimate:
    """Empirical welfare: mean ground-truth score of altered features.

    Sums the per-group means of ``altered_features . ground_truth`` over
    ``n`` draws per group.  Deterministic function of (seed, n).
    """
    c = s.contribution.entries
    total = 0.0
    var = 0.0
    for gi in range(2):
        x = _group_draws(s, gi, n, seed)
        effort = best_response_effort(w, s.groups[gi], s.contribution)
        shift = float((c @ effort) @ s.ground_truth)
        terms = x @ s.ground_truth + shift
        total += float(terms.mean())
        var += float(terms.var(ddof=1)) / n if n > 1 else 0.0
    return MonteCarloEstimate(total, var**0.5, n, seed)


def monte_carlo_acc_diagnostic(s: Scenario, w, n: int, seed: int = 0) -> MonteCarloEstimate:
    """Empirical raw accuracy: negative mean squared score gap on altered features.

    Diagnostic only: it matches :func:`accuracy_value` exactly only under an
    identity second moment of altered features (e.g. isotropic groups with no
    induced effort); ranking consistency is what it is tested for.
    """
    wv = np.asarray(w, dtype=float)
    gap = s.ground_truth - wv
    c = s.contribution.entries
    total = 0.0
    var = 0.0
    for gi in range(2):
        x = _group_draws(s, gi, n, seed)
        effort = best_response_effort(wv, s.groups[gi], s.contribution)
        xp = x + c @ effort
        terms = -((xp @ gap) ** 2)
        total += float(terms.mean())
        var += float(terms.var(ddof=1)) / n if n > 1 else 0.0
    return MonteCarloEstimate(total, var**0.5, n, seed)
