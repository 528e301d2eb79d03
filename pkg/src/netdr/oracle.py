"""Exact enumeration ground truth on tiny instances.

A :class:`DiscreteDGP` fixes the graph and covariates and gives every
noise coordinate a finite support, so the joint distribution of
treatments and outcomes is a finite product measure that can be summed
exactly. On top of that this module computes the exposure-contrast
estimand by brute force, checks the two decompositions that give it a
causal reading (one under strictly local outcome interference, one under
conditionally independent treatments), and measures how much an exposure
probability changes when the world is truncated to a unit's radius-L
neighborhood.

Rule contracts: ``selection(g, X, nu) -> D`` and
``outcome(g, X, D, eps) -> Y`` must accept stacked noise arrays with
units on the last axis and evaluate each row independently, which lets
every enumeration run as a handful of array operations. Atom grids are
lexicographic with unit 0 varying slowest.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .dgp import OutcomeParams, SelectionParams, neighbor_mean
from .exposure import ExposureSpec, indicator
from .graph import Graph, induced_subgraph, k_neighborhood

__all__ = [
    "DiscreteDGP",
    "PreconditionFailure",
    "DecompositionCheck",
    "TruncationCheck",
    "best_response_selection",
    "linear_in_means_outcome",
    "local_outcome",
    "exact_tau",
    "exposure_probabilities",
    "verify_local_decomposition",
    "verify_independent_decomposition",
    "truncated_pscore",
    "dr_expectation",
]

_MAX_ATOMS = 1_000_000


class PreconditionFailure(ValueError):
    """A decomposition's precondition fails on this instance; refuse it."""


class DecompositionCheck(NamedTuple):
    lhs: float
    rhs: float
    gap: float


class TruncationCheck(NamedTuple):
    full: float
    truncated: float
    gap: float


@dataclass
class DiscreteDGP:
    """A fully enumerable data generating process.

    ``eps_support[i]`` / ``eps_probs[i]`` give the outcome noise atoms of
    unit i, ``nu_support`` / ``nu_probs`` the selection noise. Noise
    coordinates are independent across units, so the joint law is the
    product over units; supports must be small enough that the full atom
    grid stays enumerable.
    """

    g: Graph
    X: np.ndarray
    eps_support: list = field(repr=False)
    eps_probs: list = field(repr=False)
    nu_support: list = field(repr=False)
    nu_probs: list = field(repr=False)
    selection: Callable = field(repr=False)
    outcome: Callable = field(repr=False)

    def __post_init__(self):
        n = self.g.n
        if n > 10:
            raise ValueError("enumeration is limited to n <= 10")
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.shape != (n,):
            raise ValueError("X must have one entry per unit")
        for name, support, probs in (
            ("eps", self.eps_support, self.eps_probs),
            ("nu", self.nu_support, self.nu_probs),
        ):
            if len(support) != n or len(probs) != n:
                raise ValueError(f"{name} support lists must have one entry per unit")
            for s, p in zip(support, probs):
                s, p = np.asarray(s, dtype=np.float64), np.asarray(p, dtype=np.float64)
                if s.size == 0 or s.shape != p.shape:
                    raise ValueError(f"{name} support and probabilities must align")
                if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-12:
                    raise ValueError(f"{name} probabilities must be a distribution")
        if self._atom_count() > _MAX_ATOMS:
            raise ValueError("joint support too large to enumerate")

    def _atom_count(self) -> int:
        total = 1
        for s in self.eps_support:
            total *= len(np.atleast_1d(s))
        for s in self.nu_support:
            total *= len(np.atleast_1d(s))
        return total


# ----------------------------------------------------------------------
# rule factories (stacked-profile implementations of the dgp equations)
# ----------------------------------------------------------------------


def best_response_selection(
    params: SelectionParams = SelectionParams(),
    include_neighbor_noise: bool = True,
    max_iter: int = 100,
) -> Callable:
    """Myopic best-response treatment selection, row-wise over noise atoms.

    Mirrors :func:`netdr.dgp.simulate_selection`: start from the profile
    that thresholds the index without the peer term, then apply synchronous
    best responses. ``include_neighbor_noise`` drops the neighbor-averaged
    noise term; with it off and ``params.beta = 0`` each treatment depends
    on its own noise coordinate alone, which is the conditionally
    independent regime.
    """

    def rule(g: Graph, X: np.ndarray, nu: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        nu = np.asarray(nu, dtype=np.float64)
        base = (
            params.alpha
            + params.delta * neighbor_mean(g, X)
            + params.gamma * X
            + nu
        )
        if include_neighbor_noise:
            base = base + neighbor_mean(g, nu)
        d = base > 0.0
        for _ in range(max_iter):
            nxt = base + params.beta * neighbor_mean(g, d.astype(np.float64)) > 0.0
            if np.array_equal(nxt, d):
                break
            d = nxt
        return d.astype(np.uint8)

    return rule


def linear_in_means_outcome(
    params: OutcomeParams = OutcomeParams(),
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> Callable:
    """The baseline outcome system, row-wise; treatments enter nowhere.

    Interference has unbounded radius through the endogenous peer term, so
    only the independent-treatment decomposition applies to it.
    """
    if abs(params.beta) >= 1.0:
        raise ValueError("outcome peer coefficient must satisfy |beta| < 1")

    def rule(g: Graph, X: np.ndarray, D: np.ndarray, eps: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        eps = np.asarray(eps, dtype=np.float64)
        rhs = (
            params.alpha
            + params.delta * neighbor_mean(g, X)
            + params.gamma * X
            + eps
            + neighbor_mean(g, eps)
        )
        y = np.zeros_like(rhs)
        for _ in range(max_iter):
            y_next = rhs + params.beta * neighbor_mean(g, y)
            if float(np.max(np.abs(y_next - y))) < tol:
                return y_next
            y = y_next
        raise RuntimeError("outcome fixed point did not converge")

    return rule


def local_outcome(
    direct: float = 1.0,
    spillover: float = 0.0,
    covariate: float = 0.0,
    covariate_spillover: float = 0.0,
    intercept: float = 0.0,
    noise: float = 1.0,
    noise_spillover: float = 0.0,
) -> Callable:
    """A one-shot outcome rule with strictly local treatment dependence.

    Y_i depends on D only through D_i and the neighbor mean of D, so
    interference is exact within radius 0 (``spillover = 0``) or 1. This is
    the rule family the local decomposition check exercises.
    """

    def rule(g: Graph, X: np.ndarray, D: np.ndarray, eps: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        D = np.asarray(D, dtype=np.float64)
        eps = np.asarray(eps, dtype=np.float64)
        y = (
            intercept
            + direct * D
            + covariate * X
            + covariate_spillover * neighbor_mean(g, X)
            + noise * eps
        )
        if spillover != 0.0:
            y = y + spillover * neighbor_mean(g, D)
        if noise_spillover != 0.0:
            y = y + noise_spillover * neighbor_mean(g, eps)
        return y

    return rule


# ----------------------------------------------------------------------
# enumeration engine
# ----------------------------------------------------------------------


def _grid(supports, probs):
    """Product grid (atoms x units) and atom probabilities, unit 0 slowest."""
    arrays = [np.atleast_1d(np.asarray(s, dtype=np.float64)) for s in supports]
    mesh = np.meshgrid(*arrays, indexing="ij")
    values = np.stack([m.ravel() for m in mesh], axis=-1)
    p = np.ones(values.shape[0])
    pmesh = np.meshgrid(*[np.atleast_1d(np.asarray(q, dtype=np.float64)) for q in probs], indexing="ij")
    for m in pmesh:
        p = p * m.ravel()
    return values, p


class _Enumeration:
    """Aggregated treatment-profile law plus a cache of E[Y | D]."""

    def __init__(self, ddgp: DiscreteDGP):
        self.ddgp = ddgp
        nu_vals, nu_p = _grid(ddgp.nu_support, ddgp.nu_probs)
        realized = np.asarray(ddgp.selection(ddgp.g, ddgp.X, nu_vals), dtype=np.uint8)
        self.profiles, inverse = np.unique(realized, axis=0, return_inverse=True)
        self.prob = np.bincount(inverse, weights=nu_p, minlength=self.profiles.shape[0])
        self.eps_vals, self.eps_p = _grid(ddgp.eps_support, ddgp.eps_probs)
        self._mu: dict = {}

    def outcome_mean(self, D: np.ndarray) -> np.ndarray:
        """E over outcome noise of Y given the treatment profile."""
        D = np.asarray(D, dtype=np.uint8)
        key = D.tobytes()
        if key not in self._mu:
            Y = self.ddgp.outcome(self.ddgp.g, self.ddgp.X, D.astype(np.float64), self.eps_vals)
            self._mu[key] = self.eps_p @ np.asarray(Y, dtype=np.float64)
        return self._mu[key]

    def exposure(self, spec: ExposureSpec) -> np.ndarray:
        """Indicator matrix (profiles x units) for one exposure value."""
        return indicator(spec, self.ddgp.g, self.profiles)

    def conditional_outcome(self, spec: ExposureSpec):
        """(P(T_i = spec), E[Y_i | T_i = spec]) per unit; nan where P = 0."""
        ind = self.exposure(spec).astype(np.float64)
        p = self.prob @ ind
        num = np.zeros(self.ddgp.g.n)
        for k in range(self.profiles.shape[0]):
            if self.prob[k] == 0.0:
                continue
            num += self.prob[k] * ind[k] * self.outcome_mean(self.profiles[k])
        mu = np.divide(num, p, out=np.full_like(num, np.nan), where=p > 0)
        return p, mu


def _included_units(p_treat, p_control, n):
    include = (p_treat > 0) & (p_control > 0)
    if not include.any():
        raise ValueError("every unit has a zero-probability exposure arm")
    excluded = int(n - include.sum())
    if excluded:
        warnings.warn(
            f"excluded {excluded} unit(s) whose exposure probability is zero for an arm",
            stacklevel=3,
        )
    return include


def exposure_probabilities(ddgp: DiscreteDGP, spec: ExposureSpec) -> np.ndarray:
    """P(T_i = spec | X, A) for every unit, by exact enumeration."""
    return _Enumeration(ddgp).conditional_outcome(spec)[0]


def exact_tau(ddgp: DiscreteDGP, spec_treat: ExposureSpec, spec_control: ExposureSpec) -> float:
    """The exposure-contrast estimand, averaged over well-defined units.

    Units for which either conditioning event has probability zero drop out
    with a warning; if that happens everywhere the estimand is undefined
    and a ValueError is raised.
    """
    e = _Enumeration(ddgp)
    p_t, mu_t = e.conditional_outcome(spec_treat)
    p_c, mu_c = e.conditional_outcome(spec_control)
    include = _included_units(p_t, p_c, ddgp.g.n)
    return float(np.mean(mu_t[include] - mu_c[include]))


def _pinned_profile(e: _Enumeration, ind_control, ball, i):
    rows = np.flatnonzero(ind_control[:, i])
    balls = e.profiles[np.ix_(rows, ball)]
    if not np.all(balls == balls[0]):
        raise PreconditionFailure(
            f"control exposure does not pin the radius-K treatments around unit {i}"
        )
    return balls[0]


def verify_local_decomposition(
    ddgp: DiscreteDGP,
    spec_treat: ExposureSpec,
    spec_control: ExposureSpec,
    K: int,
    tol: float = 1e-10,
) -> DecompositionCheck:
    """Check the exact-interference decomposition of the estimand.

    Requires (and verifies empirically) that outcomes depend on treatments
    only within radius K and that the control exposure pins the whole
    radius-K treatment profile. The right side reweights potential-outcome
    contrasts against the pinned profile by the conditional law of the
    radius-K treatments; the check fails loudly if the two sides differ by
    ``tol`` or more.
    """
    e = _Enumeration(ddgp)
    g = ddgp.g
    ind_t = e.exposure(spec_treat)
    ind_c = e.exposure(spec_control)
    p_t, mu_t = e.conditional_outcome(spec_treat)
    p_c, mu_c = e.conditional_outcome(spec_control)
    include = _included_units(p_t, p_c, g.n)

    def potential(ball, values, i):
        # zero fill and one fill outside the ball must agree under exact-K
        # interference; a gap reveals longer-range dependence
        low = np.zeros(g.n, dtype=np.uint8)
        high = np.ones(g.n, dtype=np.uint8)
        low[ball] = values
        high[ball] = values
        m_low = e.outcome_mean(low)[i]
        m_high = e.outcome_mean(high)[i]
        if abs(m_low - m_high) > tol:
            raise PreconditionFailure(
                "outcome depends on treatments beyond the radius-K neighborhood"
            )
        return m_low

    lhs_terms = []
    rhs_terms = []
    for i in np.flatnonzero(include):
        ball = k_neighborhood(g, i, K)
        delta = _pinned_profile(e, ind_c, ball, i)
        rows = np.flatnonzero(ind_t[:, i])
        weights = e.prob[rows] / p_t[i]
        base = potential(ball, delta, i)
        rhs_i = 0.0
        for w, k in zip(weights, rows):
            rhs_i += w * (potential(ball, e.profiles[k, ball], i) - base)
        lhs_terms.append(mu_t[i] - mu_c[i])
        rhs_terms.append(rhs_i)
    lhs = float(np.mean(lhs_terms))
    rhs = float(np.mean(rhs_terms))
    gap = abs(lhs - rhs)
    if gap >= tol:
        raise AssertionError(f"local decomposition violated: |{lhs} - {rhs}| = {gap}")
    return DecompositionCheck(lhs=lhs, rhs=rhs, gap=gap)


def verify_independent_decomposition(
    ddgp: DiscreteDGP,
    spec_treat: ExposureSpec,
    spec_control: ExposureSpec,
    K: int,
    tol: float = 1e-10,
    expect_zero_residual: bool = False,
) -> DecompositionCheck:
    """Check the independent-treatment decomposition and report its residual.

    Requires that the exposure is a function of the radius-K treatment
    profile alone (verified empirically) and that the control exposure pins
    that profile. The residual is exactly zero when treatments are
    conditionally independent; pass ``expect_zero_residual`` to enforce
    that. With dependent treatments the residual is the truncation bias and
    is only reported. The ``gap`` field holds |residual|.
    """
    e = _Enumeration(ddgp)
    g = ddgp.g
    ind_t = e.exposure(spec_treat)
    ind_c = e.exposure(spec_control)
    p_t, mu_t = e.conditional_outcome(spec_treat)
    p_c, mu_c = e.conditional_outcome(spec_control)
    include = _included_units(p_t, p_c, g.n)

    lhs_terms = []
    rhs_terms = []
    for i in np.flatnonzero(include):
        ball = k_neighborhood(g, i, K)
        _check_exposure_locality(e, ind_t, ind_c, ball, i)
        delta = _pinned_profile(e, ind_c, ball, i)
        rhs_i = 0.0
        for k in np.flatnonzero(ind_t[:, i]):
            w = e.prob[k] / p_t[i]
            pinned = e.profiles[k].copy()
            pinned[ball] = delta
            rhs_i += w * (
                e.outcome_mean(e.profiles[k])[i] - e.outcome_mean(pinned)[i]
            )
        lhs_terms.append(mu_t[i] - mu_c[i])
        rhs_terms.append(rhs_i)
    lhs = float(np.mean(lhs_terms))
    rhs = float(np.mean(rhs_terms))
    residual = lhs - rhs
    if expect_zero_residual and abs(residual) > tol:
        raise AssertionError(
            f"residual {residual} exceeds {tol} despite independent treatments"
        )
    return DecompositionCheck(lhs=lhs, rhs=rhs, gap=abs(residual))


def _check_exposure_locality(e, ind_t, ind_c, ball, i):
    """The exposure at i must be a function of the radius-K profile."""
    seen: dict = {}
    for k in range(e.profiles.shape[0]):
        key = e.profiles[k, ball].tobytes()
        value = (int(ind_t[k, i]), int(ind_c[k, i]))
        if seen.setdefault(key, value) != value:
            raise PreconditionFailure(
                f"exposure at unit {i} depends on treatments beyond radius K"
            )


def truncated_pscore(
    ddgp: DiscreteDGP, i: int, spec: ExposureSpec, radius: int
) -> TruncationCheck:
    """Exposure probability versus its radius-L truncation.

    The truncated probability re-runs the selection rule on the subgraph
    induced by N(i, radius) (labels compressed in increasing order), using
    only the noise coordinates of those units. The gap measures how much
    the exposure probability depends on the world beyond the radius. Both
    probabilities are atom-level sums in the same order, so a radius that
    covers the whole graph gives a gap of exactly zero.
    """

    def pscore(units):
        sub, relabel = induced_subgraph(ddgp.g, units)
        nu_vals, nu_p = _grid(
            [ddgp.nu_support[u] for u in units], [ddgp.nu_probs[u] for u in units]
        )
        D = np.asarray(ddgp.selection(sub, ddgp.X[units], nu_vals), dtype=np.uint8)
        ind = indicator(spec, sub, D)[:, relabel[i]]
        return float(nu_p @ ind.astype(np.float64))

    full = pscore(np.arange(ddgp.g.n))
    truncated = pscore(k_neighborhood(ddgp.g, i, radius))
    return TruncationCheck(full=full, truncated=truncated, gap=abs(full - truncated))


def dr_expectation(
    ddgp: DiscreteDGP, spec_treat: ExposureSpec, spec_control: ExposureSpec
) -> float:
    """Exact expectation of the doubly robust contribution at the truth.

    Plugs the exact exposure probabilities and conditional outcome means
    into the estimator's moment function and integrates over all atoms.
    Averaged over the same units as :func:`exact_tau`, the two agree to
    numerical precision, which is the unbiasedness identity behind the
    estimator.
    """
    e = _Enumeration(ddgp)
    p_t, mu_t = e.conditional_outcome(spec_treat)
    p_c, mu_c = e.conditional_outcome(spec_control)
    include = _included_units(p_t, p_c, ddgp.g.n)
    ind_t = e.exposure(spec_treat).astype(np.float64)
    ind_c = e.exposure(spec_control).astype(np.float64)
    total = np.zeros(ddgp.g.n)
    for k in range(e.profiles.shape[0]):
        if e.prob[k] == 0.0:
            continue
        m = e.outcome_mean(e.profiles[k])
        psi = mu_t - mu_c
        with np.errstate(invalid="ignore"):
            psi = psi + ind_t[k] * np.where(include, (m - mu_t) / p_t, 0.0)
            psi = psi - ind_c[k] * np.where(include, (m - mu_c) / p_c, 0.0)
        total += e.prob[k] * np.where(include, psi, 0.0)
    return float(np.mean(total[include]))
