"""Simulation design: covariates, endogenous selection, spillover outcomes.

Units sit on a fixed graph. Covariates are drawn from a five-point grid and
two independent standard normal shocks enter the model: ``nu`` drives
selection into treatment, ``eps`` drives outcomes. Both the selection index
and the outcome equation average quantities over graph neighbors, so
treatment choices and outcomes are network dependent by construction. Units
without neighbors contribute zero for every neighbor average.

Selection is a binary choice with a peer term: starting from the no-peer
profile, units best-respond synchronously to the previous profile until the
profile stops changing. Outcomes solve a linear-in-means system by fixed
point iteration; the outcome equation has no treatment terms, which makes the
true contrast between any two exposures exactly zero, a convenient ground
truth for the Monte Carlo study.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph

__all__ = [
    "COVARIATE_GRID",
    "SelectionParams",
    "OutcomeParams",
    "SimDraw",
    "SelectionResult",
    "draw_primitives",
    "neighbor_mean",
    "simulate_selection",
    "simulate_outcomes",
    "treated_fraction",
]

COVARIATE_GRID = np.array([0.0, 0.25, 0.5, 0.75, 1.0])


@dataclass(frozen=True)
class SelectionParams:
    """Coefficients of the selection index.

    index_i = alpha + beta * mean_j D_j + delta * mean_j X_j + gamma * X_i
              + nu_i + mean_j nu_j
    with means over the neighbors of i. ``beta`` is the peer term; the
    initial profile is the index's sign with beta switched off.
    """

    alpha: float = -0.5
    beta: float = 1.5
    delta: float = 1.0
    gamma: float = -1.0


@dataclass(frozen=True)
class OutcomeParams:
    """Coefficients of the linear-in-means outcome equation.

    Y_i = alpha + beta * mean_j Y_j + delta * mean_j X_j + gamma * X_i
          + eps_i + mean_j eps_j
    requires |beta| < 1 for a unique fixed point.
    """

    alpha: float = 0.5
    beta: float = 0.8
    delta: float = 10.0
    gamma: float = -1.0


@dataclass(frozen=True)
class SimDraw:
    """Primitive draws for one replication."""

    X: np.ndarray
    eps: np.ndarray
    nu: np.ndarray


@dataclass(frozen=True)
class SelectionResult:
    D: np.ndarray
    iterations: int
    converged: bool


def draw_primitives(n: int, rng: np.random.Generator) -> SimDraw:
    """Draw covariates and the two shock vectors.

    Consumption order is fixed (X, then eps, then nu) so a draw is
    reproducible from the stream alone. X is uniform on COVARIATE_GRID.
    """
    X = COVARIATE_GRID[rng.integers(0, COVARIATE_GRID.size, size=n)]
    eps = rng.standard_normal(n)
    nu = rng.standard_normal(n)
    return SimDraw(X=X, eps=eps, nu=nu)


def neighbor_mean(g: Graph, x: np.ndarray) -> np.ndarray:
    """Mean of ``x`` over each unit's neighbors; 0 for isolated units.

    The last axis indexes units; stacked inputs (m, n) average each row
    independently, which the enumeration tools use to process many
    counterfactual profiles in one call.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != g.n:
        raise ValueError("last axis must have one entry per unit")
    totals = (g.csr() @ x.T).T
    degs = g.degrees
    out = np.zeros_like(totals)
    np.divide(totals, degs, out=out, where=degs > 0)
    return out


def simulate_selection(
    g: Graph,
    X: np.ndarray,
    nu: np.ndarray,
    params: SelectionParams = SelectionParams(),
    max_iter: int = 100,
) -> SelectionResult:
    """Run synchronous myopic best-response dynamics to a treatment profile.

    The start profile thresholds the index without the peer term. Each sweep
    replaces the whole profile with the best response to the previous one.
    Returns the first fixed point, or the last iterate flagged unconverged
    when ``max_iter`` sweeps did not settle.
    """
    base = (
        params.alpha
        + params.delta * neighbor_mean(g, X)
        + params.gamma * np.asarray(X, dtype=np.float64)
        + np.asarray(nu, dtype=np.float64)
        + neighbor_mean(g, nu)
    )
    d = base > 0.0
    iterations = 0
    converged = False
    a = g.csr()
    degs = np.maximum(g.degrees, 1).astype(np.float64)
    for _ in range(max_iter):
        peer = (a @ d.astype(np.float64)) / degs
        nxt = base + params.beta * peer > 0.0
        iterations += 1
        if np.array_equal(nxt, d):
            converged = True
            d = nxt
            break
        d = nxt
    return SelectionResult(D=d.astype(np.uint8), iterations=iterations, converged=converged)


def simulate_outcomes(
    g: Graph,
    X: np.ndarray,
    D: np.ndarray,
    eps: np.ndarray,
    params: OutcomeParams = OutcomeParams(),
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Solve the linear-in-means outcome system by fixed point iteration.

    ``D`` is accepted for interface symmetry with the selection step but the
    baseline outcome equation deliberately has no treatment terms: the true
    effect of any exposure contrast is zero, which the Monte Carlo study uses
    as its ground truth. Iterates from Y = 0 until the sup-norm change drops
    below ``tol``.
    """
    if abs(params.beta) >= 1.0:
        raise ValueError("outcome peer coefficient must satisfy |beta| < 1")
    rhs = (
        params.alpha
        + params.delta * neighbor_mean(g, X)
        + params.gamma * np.asarray(X, dtype=np.float64)
        + np.asarray(eps, dtype=np.float64)
        + neighbor_mean(g, eps)
    )
    y = np.zeros(g.n, dtype=np.float64)
    a = g.csr()
    degs = np.maximum(g.degrees, 1).astype(np.float64)
    for _ in range(max_iter):
        y_next = rhs + params.beta * ((a @ y) / degs)
        delta = float(np.max(np.abs(y_next - y))) if g.n else 0.0
        y = y_next
        if delta < tol:
            return y
    raise RuntimeError("outcome fixed point did not converge")


def treated_fraction(D: np.ndarray) -> float:
    """Share of treated units."""
    D = np.asarray(D)
    return float(D.mean()) if D.size else 0.0
