"""Doubly robust estimation of exposure contrasts with network-aware errors.

The target is the average contrast between two exposure values t and t'.
Each unit contributes

    psi_i = 1{T_i = t} (Y_i - mu_t(i)) / p_t(i) + mu_t(i)
          - 1{T_i = t'} (Y_i - mu_t'(i)) / p_t'(i) - mu_t'(i)

where p and mu are fitted exposure probabilities and outcome regressions.
The point estimate is the mean of psi and stays consistent when either
nuisance is correct. Because outcomes of nearby units are dependent, the
variance sums empirical covariances over all pairs within a graph-distance
bandwidth (a network HAC estimate); bandwidth zero recovers the usual IID
variance exactly.

Nuisances come from either the message-passing networks in
:mod:`netdr.gnn` (depth matched to the dependence radius) or the polynomial
sieves in :mod:`netdr.glm`. Propensity models fit on the units whose degree
makes the exposure possible at all; outcome models fit on the units
observed at the exposure being predicted.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np
from scipy import sparse

from .exposure import ExposureSpec, degree_eligible, indicator
from .glm import (
    build_controls,
    linear_fit,
    linear_predict,
    logistic_fit,
    logistic_predict,
    polynomial_features,
)
from .gnn import GNNConfig, predict_probability, forward_gnn, train_gnn
from .graph import Graph, ball_mask, hac_bandwidth

__all__ = [
    "EstimatorConfig",
    "NuisanceFits",
    "EstimateReport",
    "trim",
    "fit_propensity",
    "fit_outcome",
    "fit_nuisances",
    "doubly_robust",
    "hac_variance",
    "iid_variance",
    "standard_error",
    "confidence_interval",
    "estimate_effect",
]


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator knobs, all primitive-typed so configs serialize flat.

    ``nuisance`` picks the fitting route. The gnn fields mirror
    :class:`netdr.gnn.GNNConfig`; ``depth`` doubles as the receptive field
    and should match the interference radius. ``bandwidth`` of -1 means the
    data-driven rule; any other value pins the HAC radius. When the two
    exposures partition units by own arm, ``share_complement_propensity``
    derives the control propensity as one minus the treated one instead of
    fitting a second model.
    """

    nuisance: str = "gnn"  # gnn | glm
    depth: int = 2
    hidden_width: int = 8
    epochs: int = 200
    learning_rate: float = 0.01
    architecture: str = "pna"
    aggregators: str = "scaled"
    glm_order: int = 1
    trim_lo: float = 0.01
    trim_hi: float = 0.99
    share_complement_propensity: bool = True
    standardize_targets: bool = True
    bandwidth: int = -1

    def __post_init__(self):
        if self.nuisance not in ("gnn", "glm"):
            raise ValueError(f"unknown nuisance route {self.nuisance!r}")
        if not 0.0 < self.trim_lo < self.trim_hi < 1.0:
            raise ValueError("trim bounds must satisfy 0 < lo < hi < 1")
        if self.bandwidth < -1:
            raise ValueError("bandwidth must be -1 (rule) or a radius >= 0")
        if self.glm_order < 1:
            raise ValueError("glm_order must be at least 1")

    def gnn_config(self, loss: str) -> GNNConfig:
        return GNNConfig(
            depth=self.depth,
            architecture=self.architecture,
            hidden_width=self.hidden_width,
            aggregators=self.aggregators,
            loss=loss,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
        )


@dataclass
class NuisanceFits:
    """Fitted exposure probabilities and outcome regressions, one per arm."""

    p_treat: np.ndarray
    p_control: np.ndarray
    mu_treat: np.ndarray
    mu_control: np.ndarray


@dataclass
class EstimateReport:
    """Everything one estimation run produces."""

    tau_hat: float
    hac_se: float
    iid_se: float
    bandwidth: int
    treated_count: int
    control_count: int
    ci_lo: float
    ci_hi: float
    contributions: np.ndarray = field(repr=False)
    warnings: list = field(default_factory=list)


def trim(p: np.ndarray, lo: float = 0.01, hi: float = 0.99) -> np.ndarray:
    """Clip probabilities into [lo, hi]."""
    return np.clip(p, lo, hi)


def fit_propensity(
    g: Graph,
    X: np.ndarray,
    D: np.ndarray,
    spec: ExposureSpec,
    config: EstimatorConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Fit P(exposure = spec | X, A) on the degree-eligible units.

    Units whose degree falls outside the spec's window have probability
    exactly zero and are excluded from the fit; their entries come back 0.
    """
    eligible = degree_eligible(spec, g)
    if not eligible.any():
        raise ValueError("no unit satisfies the exposure's degree window")
    target = indicator(spec, g, D).astype(np.float64)
    if config.nuisance == "gnn":
        model = train_gnn(g, X, target, eligible, config.gnn_config("logistic"), rng)
        p = predict_probability(model, g, X)
    else:
        F = polynomial_features(build_controls(g, X), config.glm_order)
        coef = logistic_fit(F[eligible], target[eligible])
        p = logistic_predict(F, coef)
    p = np.where(eligible, p, 0.0)
    return p


def fit_outcome(
    g: Graph,
    X: np.ndarray,
    Y: np.ndarray,
    observed: np.ndarray,
    config: EstimatorConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Regress Y on (X, A) using the units observed at one exposure.

    ``observed`` marks the units whose realized exposure matches the arm
    being modeled. With ``standardize_targets`` the fit runs on centered,
    unit-scale outcomes and predictions are mapped back, which keeps the
    optimizer step size meaningful across outcome scales.
    """
    mask = np.asarray(observed).astype(bool)
    if not mask.any():
        raise ValueError("no unit observed at this exposure")
    y = np.asarray(Y, dtype=np.float64)
    shift, scale = 0.0, 1.0
    if config.standardize_targets:
        shift = float(y[mask].mean())
        spread = float(y[mask].std())
        scale = spread if spread > 0 else 1.0
    target = (y - shift) / scale
    if config.nuisance == "gnn":
        model = train_gnn(g, X, target, mask, config.gnn_config("least_squares"), rng)
        mu = forward_gnn(model, g, X)
    else:
        F = polynomial_features(build_controls(g, X), config.glm_order)
        coef = linear_fit(F[mask], target[mask])
        mu = linear_predict(F, coef)
    return mu * scale + shift


def fit_nuisances(
    g: Graph,
    X: np.ndarray,
    D: np.ndarray,
    Y: np.ndarray,
    spec_treat: ExposureSpec,
    spec_control: ExposureSpec,
    config: EstimatorConfig,
    rng: np.random.Generator,
) -> NuisanceFits:
    """Fit all four nuisance functions with independent init streams."""
    streams = rng.spawn(4)
    p_t = fit_propensity(g, X, D, spec_treat, config, streams[0])
    if config.share_complement_propensity and spec_treat.complements(spec_control):
        p_c = 1.0 - p_t
    else:
        p_c = fit_propensity(g, X, D, spec_control, config, streams[1])
    mu_t = fit_outcome(g, X, Y, indicator(spec_treat, g, D), config, streams[2])
    mu_c = fit_outcome(g, X, Y, indicator(spec_control, g, D), config, streams[3])
    return NuisanceFits(p_treat=p_t, p_control=p_c, mu_treat=mu_t, mu_control=mu_c)


def doubly_robust(
    Y: np.ndarray,
    ind_treat: np.ndarray,
    ind_control: np.ndarray,
    fits: NuisanceFits,
) -> np.ndarray:
    """Per-unit contributions psi_i; their mean is the point estimate.

    Inverse-probability corrections apply only where the matching indicator
    is one, so zero probabilities elsewhere never divide. Callers trim the
    propensities first.
    """
    y = np.asarray(Y, dtype=np.float64)
    t = np.asarray(ind_treat).astype(bool)
    c = np.asarray(ind_control).astype(bool)
    psi = fits.mu_treat - fits.mu_control
    corr = np.zeros_like(y)
    corr[t] = (y[t] - fits.mu_treat[t]) / fits.p_treat[t]
    corr[c] -= (y[c] - fits.mu_control[c]) / fits.p_control[c]
    return psi + corr


def hac_variance(
    contributions: np.ndarray,
    g: Graph,
    bandwidth: int,
    pair_mask: sparse.csr_matrix | None = None,
) -> float:
    """Network HAC variance of the mean contribution (can be negative).

    Sums (psi_i - mean)(psi_j - mean) over every ordered pair within graph
    distance ``bandwidth``, divided by n. ``pair_mask`` can supply a
    precomputed within-bandwidth adjacency (as from
    :func:`netdr.graph.ball_mask`) to amortize the distance computation.
    """
    c = np.asarray(contributions, dtype=np.float64)
    centered = c - c.mean()
    mask = pair_mask if pair_mask is not None else ball_mask(g, bandwidth)
    ball_sums = mask @ centered
    return float(np.sum(centered * ball_sums) / c.size)


def iid_variance(contributions: np.ndarray) -> float:
    """Variance of the mean under independence: mean squared deviation."""
    c = np.asarray(contributions, dtype=np.float64)
    centered = c - c.mean()
    return float(np.sum(centered * centered) / c.size)


def standard_error(variance: float, n: int) -> float:
    """SE of the mean from a variance estimate, clamped at zero."""
    return float(np.sqrt(max(variance, 0.0) / n))


def confidence_interval(tau: float, se: float, level: float = 0.95):
    """Normal interval at the given coverage level."""
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    return tau - z * se, tau + z * se


def estimate_effect(
    g: Graph,
    X: np.ndarray,
    D: np.ndarray,
    Y: np.ndarray,
    spec_treat: ExposureSpec,
    spec_control: ExposureSpec,
    config: EstimatorConfig,
    rng: np.random.Generator,
) -> EstimateReport:
    """Fit nuisances, form contributions, and attach HAC and IID errors."""
    warnings: list = []
    ind_t = indicator(spec_treat, g, D)
    ind_c = indicator(spec_control, g, D)
    if ind_t.sum() == 0 or ind_c.sum() == 0:
        raise ValueError("an exposure arm has no observed units")

    fits = fit_nuisances(g, X, D, Y, spec_treat, spec_control, config, rng)
    fits, n_trimmed = _trim_fits(fits, g, spec_treat, spec_control, config)
    if n_trimmed:
        warnings.append(f"trimmed {n_trimmed} propensities to [{config.trim_lo}, {config.trim_hi}]")

    psi = doubly_robust(Y, ind_t, ind_c, fits)
    bandwidth = config.bandwidth if config.bandwidth >= 0 else hac_bandwidth(g)
    var_hac = hac_variance(psi, g, bandwidth)
    if var_hac < 0:
        warnings.append("negative dependence-adjusted variance clamped to zero")
    tau = float(psi.mean())
    hac_se = standard_error(var_hac, g.n)
    iid_se = standard_error(iid_variance(psi), g.n)
    lo, hi = confidence_interval(tau, hac_se)
    return EstimateReport(
        tau_hat=tau,
        hac_se=hac_se,
        iid_se=iid_se,
        bandwidth=int(bandwidth),
        treated_count=int(ind_t.sum()),
        control_count=int(ind_c.sum()),
        ci_lo=lo,
        ci_hi=hi,
        contributions=psi,
        warnings=warnings,
    )


def _trim_fits(fits, g, spec_treat, spec_control, config):
    lo, hi = config.trim_lo, config.trim_hi
    n_out = 0
    pair = []
    for p, spec in ((fits.p_treat, spec_treat), (fits.p_control, spec_control)):
        eligible = degree_eligible(spec, g)
        n_out += int(np.sum((p[eligible] < lo) | (p[eligible] > hi)))
        clipped = p.copy()
        clipped[eligible] = trim(p[eligible], lo, hi)
        pair.append(clipped)
    return (
        NuisanceFits(
            p_treat=pair[0],
            p_control=pair[1],
            mu_treat=fits.mu_treat,
            mu_control=fits.mu_control,
        ),
        n_out,
    )
