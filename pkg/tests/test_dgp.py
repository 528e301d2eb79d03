"""Simulation design tests: hand-solved tiny systems and fixed point checks."""
from __future__ import annotations

import numpy as np
import pytest

from netdr.dgp import (
    COVARIATE_GRID,
    OutcomeParams,
    SelectionParams,
    draw_primitives,
    neighbor_mean,
    simulate_outcomes,
    simulate_selection,
    treated_fraction,
)
from netdr.graph import Graph, generate_er
from netdr.rng import stream


def dyad() -> Graph:
    return Graph.from_edges(2, [(0, 1)])


def test_draw_primitives_shapes_and_grid():
    d = draw_primitives(500, stream(0, 0))
    assert d.X.shape == d.eps.shape == d.nu.shape == (500,)
    assert set(np.unique(d.X)).issubset(set(COVARIATE_GRID))
    # all grid points show up at this sample size
    assert len(np.unique(d.X)) == 5
    assert np.all(np.isfinite(d.eps)) and np.all(np.isfinite(d.nu))


def test_draw_primitives_deterministic_per_stream():
    a = draw_primitives(50, stream(3, 1))
    b = draw_primitives(50, stream(3, 1))
    c = draw_primitives(50, stream(3, 2))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.nu, b.nu)
    assert not np.array_equal(a.nu, c.nu)


def test_neighbor_mean_hand_case_and_isolated_zero():
    g = Graph.from_edges(4, [(0, 1), (0, 2)])
    x = np.array([1.0, 2.0, 4.0, 9.0])
    m = neighbor_mean(g, x)
    assert m[0] == 3.0  # (2 + 4) / 2
    assert m[1] == 1.0 and m[2] == 1.0
    assert m[3] == 0.0  # isolated


def test_selection_dyad_by_hand():
    # beta = 0: D_i = 1{alpha + delta*X_j + gamma*X_i + nu_i + nu_j > 0}
    g = dyad()
    p = SelectionParams(alpha=-0.5, beta=0.0, delta=1.0, gamma=-1.0)
    X = np.array([0.0, 1.0])
    nu = np.array([0.3, 0.4])
    # unit 0: -0.5 + 1*1 - 0 + 0.3 + 0.4 = 1.2 > 0
    # unit 1: -0.5 + 0  - 1 + 0.4 + 0.3 = -0.8 < 0
    res = simulate_selection(g, X, nu, p)
    assert list(res.D) == [1, 0]
    assert res.converged


def test_selection_peer_term_pulls_neighbor_in():
    # bases: unit0 = 0.2, unit1 = -0.8 (own covariate penalty), so the start
    # profile is [1, 0]; with beta = 2 unit 1's best response to a treated
    # neighbor flips positive (-0.8 + 2 > 0) and the dynamics settle at
    # [1, 1] on the second sweep.
    g = dyad()
    X = np.array([0.0, 1.0])
    nu = np.zeros(2)
    without_peer = SelectionParams(alpha=0.2, beta=0.0, delta=0.0, gamma=-1.0)
    res0 = simulate_selection(g, X, nu, without_peer)
    assert list(res0.D) == [1, 0]
    with_peer = SelectionParams(alpha=0.2, beta=2.0, delta=0.0, gamma=-1.0)
    res1 = simulate_selection(g, X, nu, with_peer)
    assert list(res1.D) == [1, 1]
    assert res1.converged and res1.iterations == 2


def test_selection_returns_best_response_fixed_point():
    for seed in range(6):
        rng = stream(77, seed)
        g = generate_er(80, 4.0, rng)
        X = COVARIATE_GRID[rng.integers(0, 5, size=80)]
        nu = rng.standard_normal(80)
        res = simulate_selection(g, X, nu)
        assert res.converged
        d = res.D.astype(np.float64)
        p = SelectionParams()
        index = (
            p.alpha
            + p.beta * neighbor_mean(g, d)
            + p.delta * neighbor_mean(g, X)
            + p.gamma * X
            + nu
            + neighbor_mean(g, nu)
        )
        assert np.array_equal((index > 0).astype(np.uint8), res.D)


def test_selection_respects_max_iter_flag():
    g = dyad()
    # beta < 0 with knife-edge base produces a 2-cycle: each unit wants the
    # opposite of its neighbor, both start identical.
    p = SelectionParams(alpha=0.1, beta=-1.0, delta=0.0, gamma=0.0)
    res = simulate_selection(g, np.zeros(2), np.zeros(2), p, max_iter=10)
    assert not res.converged
    assert res.iterations == 10


def test_outcome_dyad_fixed_point_by_hand():
    # X = 0 and eps = 0 leave Y = alpha + beta * Y_other, so Y = 0.5 / 0.2
    g = dyad()
    y = simulate_outcomes(g, np.zeros(2), np.zeros(2, np.uint8), np.zeros(2))
    assert np.allclose(y, 2.5, atol=1e-9)


def test_outcome_solves_the_linear_system():
    for seed in range(5):
        rng = stream(5, seed)
        g = generate_er(60, 5.0, rng)
        X = COVARIATE_GRID[rng.integers(0, 5, size=60)]
        eps = rng.standard_normal(60)
        params = OutcomeParams()
        y = simulate_outcomes(g, X, np.zeros(60, np.uint8), eps)
        rhs = (
            params.alpha
            + params.delta * neighbor_mean(g, X)
            + params.gamma * X
            + eps
            + neighbor_mean(g, eps)
        )
        residual = y - (rhs + params.beta * neighbor_mean(g, y))
        assert float(np.max(np.abs(residual))) < 1e-8


def test_outcome_ignores_treatments():
    g = generate_er(40, 4.0, stream(9, 0))
    d = draw_primitives(40, stream(9, 1))
    y0 = simulate_outcomes(g, d.X, np.zeros(40, np.uint8), d.eps)
    y1 = simulate_outcomes(g, d.X, np.ones(40, np.uint8), d.eps)
    assert np.array_equal(y0, y1)


def test_outcome_rejects_explosive_peer_coefficient():
    with pytest.raises(ValueError):
        simulate_outcomes(
            dyad(), np.zeros(2), np.zeros(2), np.zeros(2), OutcomeParams(beta=1.0)
        )


def test_treated_fraction():
    assert treated_fraction(np.array([1, 0, 1, 1])) == 0.75
    assert treated_fraction(np.array([], dtype=np.uint8)) == 0.0
