"""Parametric sieve baselines: polynomial regressions on node controls.

The control set for unit i is (own covariate, neighbor mean covariate,
degree). A sieve of order m regresses on all monomials of total degree at
most m in those three controls, so orders 1, 2, 3 give 4, 10 and 20
columns including the intercept. These models see exactly the same
information a depth-1 network sees, but through a fixed functional form;
they anchor the comparisons against the learned nuisances.
"""
from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np
from scipy.special import expit

from .dgp import neighbor_mean
from .graph import Graph

__all__ = [
    "build_controls",
    "polynomial_features",
    "linear_fit",
    "linear_predict",
    "logistic_fit",
    "logistic_predict",
]

_RIDGE_JITTER = 1e-8


def build_controls(g: Graph, X: np.ndarray) -> np.ndarray:
    """Stack (X_i, neighbor mean of X, degree) as an (n, 3) matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (g.n,):
        raise ValueError("X must have one entry per unit")
    return np.column_stack([X, neighbor_mean(g, X), g.degrees.astype(np.float64)])


def polynomial_features(controls: np.ndarray, order: int) -> np.ndarray:
    """All monomials of total degree <= order, intercept first.

    Terms are ordered by total degree, then by the sorted tuple of column
    indices, so the layout is deterministic: order 1 is
    (1, w1, w2, w3), order 2 appends the six quadratics, and so on.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    W = np.asarray(controls, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError("controls must be 2-d")
    n, k = W.shape
    cols = [np.ones(n)]
    for degree in range(1, order + 1):
        for combo in combinations_with_replacement(range(k), degree):
            col = np.ones(n)
            for j in combo:
                col = col * W[:, j]
            cols.append(col)
    return np.column_stack(cols)


def linear_fit(features: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least squares by normal equations, with a tiny ridge on deficiency.

    A rank-deficient gram matrix gets ``1e-8`` added to its diagonal, which
    picks a particular solution without noticeably biasing well posed
    problems.
    """
    F = np.asarray(features, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gram = F.T @ F
    moment = F.T @ y
    p = gram.shape[0]
    if np.linalg.matrix_rank(gram, hermitian=True) < p:
        gram = gram + _RIDGE_JITTER * np.eye(p)
    try:
        return np.linalg.solve(gram, moment)
    except np.linalg.LinAlgError:
        return np.linalg.solve(gram + _RIDGE_JITTER * np.eye(p), moment)


def linear_predict(features: np.ndarray, coef: np.ndarray) -> np.ndarray:
    return np.asarray(features, dtype=np.float64) @ coef


def logistic_fit(
    features: np.ndarray,
    y: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> np.ndarray:
    """Logistic regression by Newton iterations with step halving.

    Each step solves the weighted normal equations; if the full step does
    not improve the log likelihood it is halved (up to 30 times). Stops when
    the coefficient change drops below ``tol`` or after ``max_iter`` steps,
    whichever comes first, so separated data returns the capped iterate.
    """
    F = np.asarray(features, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = F.shape[1]
    coef = np.zeros(p)

    def loglik(b):
        z = F @ b
        # log sigma(z) if y=1 else log(1 - sigma(z)), written stably
        return float(np.sum(y * z - np.logaddexp(0.0, z)))

    current = loglik(coef)
    for _ in range(max_iter):
        mu = expit(F @ coef)
        w = mu * (1.0 - mu)
        gram = F.T @ (F * w[:, None])
        score = F.T @ (y - mu)
        if np.linalg.matrix_rank(gram, hermitian=True) < p:
            gram = gram + _RIDGE_JITTER * np.eye(p)
        step = np.linalg.solve(gram, score)
        scale = 1.0
        for _ in range(30):
            candidate = coef + scale * step
            value = loglik(candidate)
            if value >= current:
                break
            scale *= 0.5
        else:
            break
        moved = float(np.max(np.abs(candidate - coef)))
        coef, current = candidate, value
        if moved < tol:
            break
    return coef


def logistic_predict(features: np.ndarray, coef: np.ndarray) -> np.ndarray:
    return expit(np.asarray(features, dtype=np.float64) @ coef)
