"""The simulated selection and outcome processes.

Treatments come from best-response dynamics: each unit's latent index
includes the fraction of treated neighbors, so adoption propagates until
a fixed point. Outcomes follow a linear-in-means equation in which a
unit's outcome depends on its neighbors' outcomes, giving spillovers of
unbounded reach that decay with distance. Treatments never enter the
outcome equation, so every treatment contrast has a true effect of zero;
what remains is confounding through shared covariates and noise.
"""

import numpy as np

from netdr.dgp import draw_primitives, simulate_outcomes, simulate_selection, treated_fraction
from netdr.graph import generate_er
from netdr.rng import stream

n = 2000
g = generate_er(n, 5.0, stream(1, 0))
draw = draw_primitives(n, stream(1, 1))

result = simulate_selection(g, draw.X, draw.nu)
print(f"best response settled after {result.iterations} sweeps (converged={result.converged})")
print(f"treated fraction: {treated_fraction(result.D):.4f}")

Y = simulate_outcomes(g, draw.X, result.D, draw.eps)
print(f"outcomes: mean {Y.mean():.2f}, sd {Y.std():.2f}")

# the naive contrast is badly confounded even though the true effect is zero
naive = Y[result.D == 1].mean() - Y[result.D == 0].mean()
print(f"naive treated-minus-control gap: {naive:+.3f} (true effect is 0)")

# selection is genuinely endogenous: switching off the peer term changes profiles
from netdr.dgp import SelectionParams

no_peer = simulate_selection(g, draw.X, draw.nu, SelectionParams(beta=0.0))
flipped = np.mean(result.D != no_peer.D)
print(f"share of units flipped by the peer term: {flipped:.4f}")
