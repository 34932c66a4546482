"""Shared instance generators for the test suite.

Random instances are deliberately well-conditioned (cost eigenvalues and
graph weights in moderate ranges) so that closed-form identities can be
asserted at tight tolerances without conditioning noise.
"""

from __future__ import annotations

import numpy as np
import pytest

from stratfair import (
    CausalGraph,
    ContributionMatrix,
    GroupParams,
    GroupSampler,
    Scenario,
    build_contribution_matrix,
)


def random_dag(rng: np.random.Generator, d: int, edge_prob: float = 0.4,
               weight_max: float = 0.6) -> CausalGraph:
    order = rng.permutation(d)
    edges = []
    for i in range(d):
        for j in range(i + 1, d):
            if rng.random() < edge_prob:
                edges.append((int(order[i]), int(order[j]), float(rng.uniform(0.0, weight_max))))
    return CausalGraph(d, tuple(edges))


def random_spd(rng: np.random.Generator, d: int, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eigs = rng.uniform(lo, hi, d)
    return basis @ np.diag(eigs) @ basis.T


def random_projector(rng: np.random.Generator, d: int, rank: int) -> np.ndarray:
    basis, _ = np.linalg.qr(rng.standard_normal((d, max(1, rank))))
    return basis @ basis.T


def random_scenario(rng: np.random.Generator, d: int, full_rank_projectors: bool = False,
                    uniform_cost: bool = False) -> Scenario:
    costs = []
    projectors = []
    shared = random_spd(rng, d)
    for _ in range(2):
        costs.append(shared if uniform_cost else random_spd(rng, d))
        rank = d if full_rank_projectors else int(rng.integers(1, d + 1))
        projectors.append(np.eye(d) if (full_rank_projectors and rng.random() < 0.5) else random_projector(rng, d, rank))
    graph = random_dag(rng, d)
    contribution = build_contribution_matrix(graph)
    groups = tuple(
        GroupParams(
            cost=c,
            projector=p,
            sampler=GroupSampler(mean=np.zeros(d), factor=p),
        )
        for c, p in zip(costs, projectors)
    )
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    return Scenario(
        contribution=contribution,
        groups=groups,  # type: ignore[arg-type]
        desirability=rng.uniform(0.25, 1.0, d),
        ground_truth=direction * rng.uniform(0.4, 1.0),
    )


def nondisparate_cost_example() -> Scenario:
    """Two features, identity costs and spillovers, complementary rank-one
    projectors, desirability (1, 3/4), ground truth (1/2, 1/2)."""
    eye = np.eye(2)
    return Scenario(
        contribution=ContributionMatrix(eye),
        groups=(
            GroupParams(cost=eye, projector=np.diag([1.0, 0.0]),
                        sampler=GroupSampler(np.zeros(2), np.diag([1.0, 0.0]))),
            GroupParams(cost=eye, projector=np.diag([0.0, 1.0]),
                        sampler=GroupSampler(np.zeros(2), np.diag([0.0, 1.0]))),
        ),
        desirability=np.array([1.0, 0.75]),
        ground_truth=np.array([0.5, 0.5]),
    )


@pytest.fixture
def worked_example() -> Scenario:
    return nondisparate_cost_example()


def enumerate_path_weight_sums(graph: CausalGraph, source: int, target: int) -> float:
    """Oracle: exhaustive DFS over simple paths; path weight is the sum of
    its edge weights, and paths contribute the sum of their weights."""
    adjacency: dict[int, list[tuple[int, float]]] = {}
    for s, t, w in graph.edges:
        adjacency.setdefault(s, []).append((t, w))
    total = 0.0

    def walk(node: int, acc: float, seen: frozenset[int]):
        nonlocal total
        if node == target:
            total += acc
            return
        for nxt, w in adjacency.get(node, []):
            if nxt not in seen:
                walk(nxt, acc + w, seen | {nxt})

    if source == target:
        return 1.0
    walk(source, 0.0, frozenset([source]))
    return total
