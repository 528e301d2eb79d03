"""Doubly robust effect estimation with network-dependence-aware errors.

One simulated dataset, two nuisance routes: a network regressor whose
receptive field matches the interference structure, and a generalized
linear model on hand-selected controls. The moment combines inverse
propensity weighting with outcome regression, and the variance sums
covariances over unit pairs within a path-distance bandwidth. The true
effect is zero by construction.
"""

from netdr.dgp import draw_primitives, simulate_outcomes, simulate_selection
from netdr.estimator import EstimatorConfig, estimate_effect
from netdr.exposure import treatment_arm
from netdr.graph import generate_er
from netdr.rng import stream

n = 1000
g = generate_er(n, 5.0, stream(3, 0))
draw = draw_primitives(n, stream(3, 1))
D = simulate_selection(g, draw.X, draw.nu).D
Y = simulate_outcomes(g, draw.X, D, draw.eps)

spec_t, spec_c = treatment_arm(1), treatment_arm(0)

for label, config in (
    ("gnn depth 2", EstimatorConfig(nuisance="gnn", depth=2)),
    ("glm order 1", EstimatorConfig(nuisance="glm", glm_order=1)),
):
    report = estimate_effect(g, draw.X, D, Y, spec_t, spec_c, config, stream(3, 2))
    print(f"{label}: tau_hat {report.tau_hat:+.4f}")
    print(f"  dependence-robust se {report.hac_se:.4f} (bandwidth {report.bandwidth})")
    print(f"  iid se               {report.iid_se:.4f} (too small under dependence)")
    print(f"  95% ci               [{report.ci_lo:+.4f}, {report.ci_hi:+.4f}]")
    print(f"  arms                 {report.treated_count} treated / {report.control_count} control")
