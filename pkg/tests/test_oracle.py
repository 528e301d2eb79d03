"""Enumeration oracle: estimand, decompositions, truncation, moment identity."""
import itertools
import warnings

import numpy as np
import pytest

from netdr.dgp import (
    OutcomeParams,
    SelectionParams,
    draw_primitives,
    simulate_outcomes,
    simulate_selection,
)
from netdr.exposure import ExposureSpec, indicator, treatment_arm
from netdr.graph import Graph, generate_er
from netdr.oracle import (
    DiscreteDGP,
    PreconditionFailure,
    best_response_selection,
    dr_expectation,
    exact_tau,
    exposure_probabilities,
    linear_in_means_outcome,
    local_outcome,
    truncated_pscore,
    verify_independent_decomposition,
    verify_local_decomposition,
)
from netdr.rng import stream
from oracle_cases import (
    SOME_TREATED_NEIGHBORS,
    ZERO_TREATED_NEIGHBORS,
    independent_case,
    local_case,
    two_point_supports,
)


def _dual_tau(ddgp, spec_t, spec_c):
    """Joint-atom enumerator iterating with the LAST unit slowest.

    Independent implementation of the estimand used to cross-check the
    factorized one: no profile aggregation, no outcome-mean caching, and a
    deliberately different atom order.
    """
    g, X = ddgp.g, ddgp.X
    n = g.n
    num_t, den_t = np.zeros(n), np.zeros(n)
    num_c, den_c = np.zeros(n), np.zeros(n)
    nu_sizes = [len(s) for s in ddgp.nu_support]
    eps_sizes = [len(s) for s in ddgp.eps_support]
    for rev_idx in itertools.product(*(range(k) for k in reversed(nu_sizes))):
        idx = tuple(reversed(rev_idx))
        nu = np.array([ddgp.nu_support[u][idx[u]] for u in range(n)])
        p_nu = float(np.prod([ddgp.nu_probs[u][idx[u]] for u in range(n)]))
        D = np.asarray(ddgp.selection(g, X, nu), dtype=np.float64)
        ind_t = indicator(spec_t, g, D).astype(np.float64)
        ind_c = indicator(spec_c, g, D).astype(np.float64)
        mean_y = np.zeros(n)
        for rev_jdx in itertools.product(*(range(k) for k in reversed(eps_sizes))):
            jdx = tuple(reversed(rev_jdx))
            eps = np.array([ddgp.eps_support[u][jdx[u]] for u in range(n)])
            p_eps = float(np.prod([ddgp.eps_probs[u][jdx[u]] for u in range(n)]))
            mean_y += p_eps * np.asarray(ddgp.outcome(g, X, D, eps), dtype=np.float64)
        num_t += p_nu * ind_t * mean_y
        den_t += p_nu * ind_t
        num_c += p_nu * ind_c * mean_y
        den_c += p_nu * ind_c
    include = (den_t > 0) & (den_c > 0)
    return float(np.mean(num_t[include] / den_t[include] - num_c[include] / den_c[include]))


def _uniform_pm1(n):
    return [np.array([-1.0, 1.0]) for _ in range(n)], [np.array([0.5, 0.5]) for _ in range(n)]


# ----------------------------------------------------------------------
# estimand
# ----------------------------------------------------------------------


def test_isolated_unit_outcome_ignores_treatment():
    g = Graph.from_edges(1, [])
    ddgp = DiscreteDGP(
        g=g,
        X=np.array([0.5]),
        eps_support=[np.array([0.0])],
        eps_probs=[np.array([1.0])],
        nu_support=[np.array([-10.0, 10.0])],
        nu_probs=[np.array([0.5, 0.5])],
        selection=best_response_selection(
            SelectionParams(alpha=0.0, beta=0.0, delta=0.0, gamma=0.0),
            include_neighbor_noise=False,
        ),
        outcome=local_outcome(direct=0.0, intercept=1.0),
    )
    assert exact_tau(ddgp, treatment_arm(1), treatment_arm(0)) == 0.0


def test_dyad_direct_effect_is_one():
    g = Graph.from_edges(2, [(0, 1)])
    nu_s, nu_p = _uniform_pm1(2)
    ddgp = DiscreteDGP(
        g=g,
        X=np.zeros(2),
        eps_support=[np.array([0.0])] * 2,
        eps_probs=[np.array([1.0])] * 2,
        nu_support=nu_s,
        nu_probs=nu_p,
        selection=best_response_selection(
            SelectionParams(alpha=0.0, beta=0.0, delta=0.0, gamma=0.0),
            include_neighbor_noise=False,
        ),
        outcome=local_outcome(direct=1.0, noise=0.0),
    )
    assert abs(exact_tau(ddgp, treatment_arm(1), treatment_arm(0)) - 1.0) < 1e-14


def test_exact_tau_matches_joint_enumerator_paper_form():
    # three-unit path with the simulation's own equations on +-1 noise
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    eps_s, eps_p = _uniform_pm1(3)
    nu_s, nu_p = _uniform_pm1(3)
    ddgp = DiscreteDGP(
        g=g,
        X=np.array([0.0, 0.5, 1.0]),
        eps_support=eps_s,
        eps_probs=eps_p,
        nu_support=nu_s,
        nu_probs=nu_p,
        selection=best_response_selection(),
        outcome=linear_in_means_outcome(),
    )
    got = exact_tau(ddgp, treatment_arm(1), treatment_arm(0))
    want = _dual_tau(ddgp, treatment_arm(1), treatment_arm(0))
    assert abs(got - want) < 1e-10


@pytest.mark.parametrize("seed", [60, 61, 62])
def test_exact_tau_matches_joint_enumerator_random(seed):
    ddgp, spec_t, spec_c, _ = local_case(seed, spillover=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        got = exact_tau(ddgp, spec_t, spec_c)
        want = _dual_tau(ddgp, spec_t, spec_c)
    assert abs(got - want) < 1e-10


def test_exact_tau_relabeling_invariance():
    ddgp, spec_t, spec_c, _ = local_case(63)
    rng = stream(63, 999)
    n = ddgp.g.n
    perm = rng.permutation(n)
    inverse = np.empty(n, dtype=np.int64)
    inverse[perm] = np.arange(n)
    relabeled = DiscreteDGP(
        g=Graph.from_edges(n, [(perm[i], perm[j]) for i, j in ddgp.g.edges()]),
        X=ddgp.X[inverse],
        eps_support=[ddgp.eps_support[inverse[u]] for u in range(n)],
        eps_probs=[ddgp.eps_probs[inverse[u]] for u in range(n)],
        nu_support=[ddgp.nu_support[inverse[u]] for u in range(n)],
        nu_probs=[ddgp.nu_probs[inverse[u]] for u in range(n)],
        selection=ddgp.selection,
        outcome=ddgp.outcome,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        base = exact_tau(ddgp, spec_t, spec_c)
        moved = exact_tau(relabeled, spec_t, spec_c)
    assert abs(base - moved) < 1e-12


def test_exclusion_warns_and_total_exclusion_raises():
    g = Graph.from_edges(2, [(0, 1)])
    always = [np.array([5.0]), np.array([-1.0, 5.0])]
    probs = [np.array([1.0]), np.array([0.5, 0.5])]
    ddgp = DiscreteDGP(
        g=g,
        X=np.zeros(2),
        eps_support=[np.array([0.0])] * 2,
        eps_probs=[np.array([1.0])] * 2,
        nu_support=always,
        nu_probs=probs,
        selection=best_response_selection(
            SelectionParams(alpha=0.0, beta=0.0, delta=0.0, gamma=0.0),
            include_neighbor_noise=False,
        ),
        outcome=local_outcome(),
    )
    # unit 0 is always treated: it must be excluded with a warning
    with pytest.warns(UserWarning, match="excluded 1"):
        exact_tau(ddgp, treatment_arm(1), treatment_arm(0))

    both_always = DiscreteDGP(
        g=g,
        X=np.zeros(2),
        eps_support=[np.array([0.0])] * 2,
        eps_probs=[np.array([1.0])] * 2,
        nu_support=[np.array([5.0])] * 2,
        nu_probs=[np.array([1.0])] * 2,
        selection=ddgp.selection,
        outcome=ddgp.outcome,
    )
    with pytest.raises(ValueError, match="zero-probability"):
        exact_tau(both_always, treatment_arm(1), treatment_arm(0))


def test_probability_grid_sums_to_one():
    from netdr.oracle import _grid

    ddgp, *_ = local_case(64)
    _, p_nu = _grid(ddgp.nu_support, ddgp.nu_probs)
    _, p_eps = _grid(ddgp.eps_support, ddgp.eps_probs)
    assert abs(p_nu.sum() - 1.0) < 1e-12
    assert abs(p_eps.sum() - 1.0) < 1e-12


# ----------------------------------------------------------------------
# decomposition checks
# ----------------------------------------------------------------------


@pytest.mark.parametrize("seed", [70, 71, 72, 73])
def test_local_decomposition_direct_effects(seed):
    ddgp, spec_t, spec_c, K = local_case(seed, spillover=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        check = verify_local_decomposition(ddgp, spec_t, spec_c, K)
    assert check.gap < 1e-10


@pytest.mark.parametrize("seed", [74, 75, 76])
def test_local_decomposition_spillover_exposures(seed):
    ddgp, spec_t, spec_c, K = local_case(seed, spillover=True)
    assert K == 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        check = verify_local_decomposition(ddgp, spec_t, spec_c, K)
    assert check.gap < 1e-10


def test_local_decomposition_star_hand_case():
    # hub with three leaves, contrasting "treated with no treated neighbors"
    # against "untreated with no treated neighbors" at radius one; the peer
    # effect keeps treatments dependent, which the decomposition tolerates
    g = Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    nu_s, nu_p = _uniform_pm1(4)
    eps_s, eps_p = two_point_supports(4, stream(77, 0))
    ddgp = DiscreteDGP(
        g=g,
        X=np.array([0.0, 0.25, 0.5, 0.75]),
        eps_support=eps_s,
        eps_probs=eps_p,
        nu_support=nu_s,
        nu_probs=nu_p,
        selection=best_response_selection(
            SelectionParams(alpha=0.1, beta=0.8, delta=0.5, gamma=-0.4),
            include_neighbor_noise=False,
        ),
        outcome=local_outcome(direct=2.0, spillover=-1.5, covariate=1.0, noise=1.0),
    )
    spec_t = ExposureSpec(arm=1, neighbor_treated=ZERO_TREATED_NEIGHBORS)
    spec_c = ExposureSpec(arm=0, neighbor_treated=ZERO_TREATED_NEIGHBORS)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        check = verify_local_decomposition(ddgp, spec_t, spec_c, 1)
    assert check.gap < 1e-10


def test_local_decomposition_refuses_unpinned_control():
    # T = D with K = 1: the control exposure fixes only the unit's own
    # treatment, not its neighbor's, so the check must refuse
    ddgp, spec_t, spec_c, _ = local_case(78, spillover=False)
    with pytest.raises(PreconditionFailure, match="pin"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            verify_local_decomposition(ddgp, spec_t, spec_c, 1)


def test_local_decomposition_refuses_nonlocal_outcome():
    # spillover outcome checked at K = 0 leaks beyond the ball
    ddgp, spec_t, spec_c, _ = local_case(79, spillover=True)
    with pytest.raises(PreconditionFailure, match="beyond the radius"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            verify_local_decomposition(ddgp, treatment_arm(1), treatment_arm(0), 0)


@pytest.mark.parametrize("seed", [80, 81, 82, 83])
def test_independent_treatments_zero_residual(seed):
    ddgp, spec_t, spec_c, K = independent_case(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        check = verify_independent_decomposition(
            ddgp, spec_t, spec_c, K, expect_zero_residual=True
        )
    assert check.gap <= 1e-10


def test_independent_zero_residual_with_spillover_exposure():
    ddgp, spec_t, spec_c, K = independent_case(84, outcome_kind="local-spillover")
    assert K == 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        check = verify_independent_decomposition(
            ddgp, spec_t, spec_c, K, expect_zero_residual=True
        )
    assert check.gap <= 1e-10


def test_dependent_treatments_nonzero_residual_reported():
    # outcome = neighbor's treatment; selection couples the dyad through
    # shared noise, so conditioning on own treatment shifts the neighbor's
    g = Graph.from_edges(2, [(0, 1)])
    nu_s, nu_p = _uniform_pm1(2)
    ddgp = DiscreteDGP(
        g=g,
        X=np.zeros(2),
        eps_support=[np.array([0.0])] * 2,
        eps_probs=[np.array([1.0])] * 2,
        nu_support=nu_s,
        nu_probs=nu_p,
        selection=best_response_selection(
            SelectionParams(alpha=0.0, beta=0.0, delta=0.0, gamma=0.0),
            include_neighbor_noise=True,
        ),
        outcome=local_outcome(direct=0.0, spillover=1.0, noise=0.0),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        check = verify_independent_decomposition(
            ddgp, treatment_arm(1), treatment_arm(0), 0
        )
    assert np.isfinite(check.gap)
    assert check.gap > 1e-6
    with pytest.raises(AssertionError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            verify_independent_decomposition(
                ddgp, treatment_arm(1), treatment_arm(0), 0, expect_zero_residual=True
            )


def test_radius_covering_graph_is_exact_despite_dependence():
    # the dyad's exposures pin both treatments, so no truncation remains
    g = Graph.from_edges(2, [(0, 1)])
    nu_s, nu_p = _uniform_pm1(2)
    eps_s, eps_p = two_point_supports(2, stream(85, 0))
    ddgp = DiscreteDGP(
        g=g,
        X=np.array([0.25, 0.75]),
        eps_support=eps_s,
        eps_probs=eps_p,
        nu_support=nu_s,
        nu_probs=nu_p,
        selection=best_response_selection(
            SelectionParams(alpha=0.0, beta=0.0, delta=0.0, gamma=0.0),
            include_neighbor_noise=True,
        ),
        outcome=linear_in_means_outcome(),
    )
    spec_t = ExposureSpec(arm=1, neighbor_treated=SOME_TREATED_NEIGHBORS)
    spec_c = ExposureSpec(arm=0, neighbor_treated=ZERO_TREATED_NEIGHBORS)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        check = verify_independent_decomposition(ddgp, spec_t, spec_c, 1)
    assert check.gap <= 1e-12


def test_exposure_locality_refusal():
    # neighbor-count windows are not a function of one's own treatment alone
    ddgp, _, _, _ = local_case(86, spillover=True)
    spec_t = ExposureSpec(arm=1, neighbor_treated=SOME_TREATED_NEIGHBORS)
    spec_c = ExposureSpec(arm=0, neighbor_treated=ZERO_TREATED_NEIGHBORS)
    with pytest.raises(PreconditionFailure, match="beyond radius"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            verify_independent_decomposition(ddgp, spec_t, spec_c, 0)


# ----------------------------------------------------------------------
# truncated exposure probabilities
# ----------------------------------------------------------------------


def _p5_ddgp(beta, include_neighbor_noise=True):
    g = Graph.from_edges(5, [(i, i + 1) for i in range(4)])
    nu_s, nu_p = _uniform_pm1(5)
    return DiscreteDGP(
        g=g,
        X=np.array([0.0, 0.25, 0.5, 0.75, 1.0]),
        eps_support=[np.array([0.0])] * 5,
        eps_probs=[np.array([1.0])] * 5,
        nu_support=nu_s,
        nu_probs=nu_p,
        selection=best_response_selection(
            SelectionParams(alpha=-0.2, beta=beta, delta=0.6, gamma=-0.5),
            include_neighbor_noise=include_neighbor_noise,
        ),
        outcome=local_outcome(),
    )


def test_truncation_gap_zero_when_radius_covers_graph():
    ddgp = _p5_ddgp(beta=1.5)
    check = truncated_pscore(ddgp, 2, treatment_arm(1), 4)
    assert check.gap == 0.0


def test_truncation_gap_zero_for_own_noise_selection():
    ddgp = _p5_ddgp(beta=0.0, include_neighbor_noise=False)
    check = truncated_pscore(ddgp, 2, treatment_arm(1), 1)
    assert check.gap < 1e-12


def test_truncation_gap_decreases_on_path():
    ddgp = _p5_ddgp(beta=1.5)
    gaps = [truncated_pscore(ddgp, 2, treatment_arm(1), L).gap for L in (1, 2)]
    assert gaps[0] > gaps[1]
    assert gaps[1] < 1e-12  # radius two reaches every unit from the center


# ----------------------------------------------------------------------
# moment identity and rule consistency
# ----------------------------------------------------------------------


@pytest.mark.parametrize("seed", [90, 91])
def test_dr_expectation_matches_exact_tau(seed):
    ddgp, spec_t, spec_c, _ = local_case(seed, spillover=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tau = exact_tau(ddgp, spec_t, spec_c)
        moment = dr_expectation(ddgp, spec_t, spec_c)
    assert abs(tau - moment) < 1e-10


def test_dr_expectation_matches_under_dependence():
    ddgp, spec_t, spec_c, _ = local_case(92, spillover=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tau = exact_tau(ddgp, spec_t, spec_c)
        moment = dr_expectation(ddgp, spec_t, spec_c)
    assert abs(tau - moment) < 1e-10


def test_batched_selection_matches_simulation():
    for seed in (93, 94):
        g = generate_er(25, 4.0, stream(seed, 0))
        draw = draw_primitives(25, stream(seed, 1))
        rule = best_response_selection()
        got = rule(g, draw.X, draw.nu)
        want = simulate_selection(g, draw.X, draw.nu).D
        assert np.array_equal(got, want)
        stacked = rule(g, draw.X, np.stack([draw.nu, -draw.nu]))
        assert np.array_equal(stacked[0], want)


def test_batched_outcome_matches_simulation():
    g = generate_er(25, 4.0, stream(95, 0))
    draw = draw_primitives(25, stream(95, 1))
    D = simulate_selection(g, draw.X, draw.nu).D
    rule = linear_in_means_outcome()
    got = rule(g, draw.X, D.astype(np.float64), draw.eps)
    want = simulate_outcomes(g, draw.X, D, draw.eps)
    assert np.max(np.abs(got - want)) < 1e-9
    stacked = rule(g, draw.X, D.astype(np.float64), np.stack([draw.eps, draw.eps * 0.5]))
    assert np.max(np.abs(stacked[0] - want)) < 1e-9


def test_validation_rejects_bad_instances():
    g = Graph.from_edges(2, [(0, 1)])
    ok_support = [np.array([0.0])] * 2
    ok_probs = [np.array([1.0])] * 2
    with pytest.raises(ValueError, match="distribution"):
        DiscreteDGP(
            g=g,
            X=np.zeros(2),
            eps_support=ok_support,
            eps_probs=[np.array([0.7])] * 2,
            nu_support=ok_support,
            nu_probs=ok_probs,
            selection=best_response_selection(),
            outcome=local_outcome(),
        )
    with pytest.raises(ValueError, match="n <= 10"):
        DiscreteDGP(
            g=Graph.from_edges(11, []),
            X=np.zeros(11),
            eps_support=[np.array([0.0])] * 11,
            eps_probs=[np.array([1.0])] * 11,
            nu_support=[np.array([0.0])] * 11,
            nu_probs=[np.array([1.0])] * 11,
            selection=best_response_selection(),
            outcome=local_outcome(),
        )
    big_support = [np.linspace(0, 1, 6)] * 8
    big_probs = [np.full(6, 1.0 / 6.0)] * 8
    with pytest.raises(ValueError, match="too large"):
        DiscreteDGP(
            g=Graph.from_edges(8, [(0, 1)]),
            X=np.zeros(8),
            eps_support=big_support,
            eps_probs=big_probs,
            nu_support=big_support,
            nu_probs=big_probs,
            selection=best_response_selection(),
            outcome=local_outcome(),
        )
