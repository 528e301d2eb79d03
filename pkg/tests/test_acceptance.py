"""Acceptance suite: headline Monte Carlo numbers plus exact guarantees.

The table block re-runs the shipped ER experiment at 500 replications and
asserts the headline quantities (bias, coverage, standard error agreement,
runtime). It trains nine networks per replication and dominates the suite's
runtime; everything else asserts exact properties at tight tolerances.
Each test prints one summary line so a log scan shows every measured value.
"""
import math
import time
from collections import deque

import numpy as np
import pytest

from netdr.dgp import draw_primitives, simulate_selection, treated_fraction
from netdr.estimator import (
    NuisanceFits,
    doubly_robust,
    hac_variance,
    iid_variance,
)
from netdr.exposure import ExposureSpec, indicator
from netdr.gnn import GNNConfig, forward_gnn, train_gnn
from netdr.graph import (
    Graph,
    avg_path_length,
    generate_er,
    generate_rgg,
    hac_bandwidth,
)
from netdr.harness import ExperimentConfig, run_experiment
from netdr.rng import stream
from netdr.oracle import verify_independent_decomposition, verify_local_decomposition
from netdr.wl import colors_from_values, wl_refine
from gradcheck import operator_battery
from oracle_cases import independent_case, local_case

# Table-run knobs. Width and epochs are the calibrated training schedule the
# package ships as its experiment defaults for this design.
TABLE_SEED = 0
TABLE_REPS = 500
TABLE_EPOCHS = 500
TABLE_WIDTH = 8
# Runtime target: thirty minutes across eight workers, charged as total
# core-seconds so the assertion is machine-shape independent.
CORE_SECOND_BUDGET = 30 * 60 * 8


def _report(label, detail, ok):
    print(f"[acceptance] {label}: {detail} -> {'PASS' if ok else 'FAIL'}", flush=True)
    assert ok, f"{label}: {detail}"


# ----------------------------------------------------------------------
# 1 + 2: the ER table at n = 1000
# ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def table_run():
    config = ExperimentConfig(
        graph_model="er",
        n=1000,
        replications=TABLE_REPS,
        seed=TABLE_SEED,
        workers=1,
        estimators=("gnn", "glm_order_1", "glm_order_2", "glm_order_3"),
        depths=(1, 2, 3),
        epochs=TABLE_EPOCHS,
        hidden_width=TABLE_WIDTH,
    )
    start = time.perf_counter()
    result = run_experiment(config)
    elapsed = time.perf_counter() - start
    assert not result.failures, result.failures
    rows = {row.estimator: row for row in result.rows}
    return rows, elapsed, config


def test_table_gnn_bias(table_run):
    rows, _, _ = table_run
    bias = abs(rows["gnn_l2"].bias)
    _report("table depth-2 bias", f"|{rows['gnn_l2'].bias:+.4f}| <= 0.05", bias <= 0.05)


def test_table_hac_coverage(table_run):
    rows, _, _ = table_run
    cover = rows["gnn_l2"].cover_hac
    _report("table depth-2 HAC coverage", f"{cover:.4f} in [0.88, 0.97]",
            0.88 <= cover <= 0.97)


def test_table_se_agreement(table_run):
    rows, _, _ = table_run
    row = rows["gnn_l2"]
    ratio = row.se_hac / row.se_oracle
    _report("table depth-2 SE ratio", f"hac {row.se_hac:.4f} / oracle {row.se_oracle:.4f}"
            f" = {ratio:.3f} within 30%", abs(ratio - 1.0) <= 0.30)


def test_table_runtime(table_run):
    _, elapsed, config = table_run
    core_seconds = elapsed * config.workers
    _report("table runtime", f"{core_seconds:.0f} core-seconds"
            f" <= {CORE_SECOND_BUDGET}", core_seconds <= CORE_SECOND_BUDGET)


def test_table_iid_coverage_too_low(table_run):
    rows, _, _ = table_run
    cover = rows["gnn_l2"].cover_iid
    _report("table IID coverage", f"{cover:.4f} < 0.88 (dependence ignored)",
            cover < 0.88)


def test_table_glm_bias_dominates(table_run):
    rows, _, _ = table_run
    gnn = abs(rows["gnn_l2"].bias)
    worst = min(abs(rows[f"glm_order_{k}"].bias) for k in (1, 2, 3))
    _report("table GLM bias ratio", f"min GLM |bias| {worst:.4f}"
            f" >= 2 x depth-2 |bias| {gnn:.4f}", worst >= 2.0 * gnn)


def test_table_depth_two_least_biased(table_run):
    rows, _, _ = table_run
    b1, b2, b3 = (abs(rows[f"gnn_l{d}"].bias) for d in (1, 2, 3))
    _report("table depth ordering", f"|l2| {b2:.4f} < |l1| {b1:.4f}"
            f" and < |l3| {b3:.4f}", b2 < b1 and b2 < b3)


# ----------------------------------------------------------------------
# 3: selection equilibrium treats about 57 percent
# ----------------------------------------------------------------------


def test_treated_fraction():
    fractions = []
    for rep in range(100):
        g = generate_er(2000, 5.0, stream(900, rep, 0))
        draw = draw_primitives(2000, stream(900, rep, 1))
        fractions.append(treated_fraction(simulate_selection(g, draw.X, draw.nu).D))
    mean = float(np.mean(fractions))
    _report("treated fraction", f"{mean:.4f} within 0.57 +/- 0.03",
            abs(mean - 0.57) <= 0.03)


# ----------------------------------------------------------------------
# 4: characteristic path lengths of the two graph models
# ----------------------------------------------------------------------


def test_path_lengths():
    rgg = [avg_path_length(generate_rgg(2000, 5.0, stream(901, rep, 0)))
           for rep in range(20)]
    er = [avg_path_length(generate_er(2000, 5.0, stream(902, rep, 0)))
          for rep in range(20)]
    mean_rgg, mean_er = float(np.mean(rgg)), float(np.mean(er))
    _report("RGG path length", f"{mean_rgg:.2f} within 39.5 +/- 5",
            abs(mean_rgg - 39.5) <= 5.0)
    _report("ER path length", f"{mean_er:.2f} within 4.9 +/- 0.5",
            abs(mean_er - 4.9) <= 0.5)


# ----------------------------------------------------------------------
# 5: HAC variance equals the dense double sum
# ----------------------------------------------------------------------


def _floyd(g):
    big = 10 ** 9
    dist = np.full((g.n, g.n), big)
    np.fill_diagonal(dist, 0)
    for i, j in g.edges():
        dist[i, j] = dist[j, i] = 1
    for k in range(g.n):
        dist = np.minimum(dist, dist[:, k][:, None] + dist[k][None, :])
    return dist


def test_hac_matches_dense_double_sum():
    worst = 0.0
    for trial in range(200):
        rng = stream(903, trial)
        n = int(rng.integers(2, 101))
        g = Graph.from_edges(
            n, [(i, j) for i in range(n) for j in range(i + 1, n)
                if rng.uniform() < 2.5 / n])
        c = rng.normal(size=n) * float(rng.uniform(0.5, 3.0))
        b = int(rng.integers(0, 5))
        centered = c - c.mean()
        within = _floyd(g) <= b
        want = float(centered @ within @ centered) / n
        worst = max(worst, abs(hac_variance(c, g, b) - want))
        assert hac_variance(c, g, 0) == iid_variance(c)
    _report("HAC dense double sum", f"max |diff| {worst:.2e} < 1e-12 over 200 graphs,"
            " bandwidth 0 bitwise IID", worst < 1e-12)


# ----------------------------------------------------------------------
# 6: enumeration oracle decompositions
# ----------------------------------------------------------------------


def test_identification_decompositions():
    import warnings

    worst_local, worst_indep = 0.0, 0.0
    cases = 0
    for seed in range(910, 922):
        ddgp, spec_t, spec_c, radius = local_case(seed, spillover=bool(seed % 2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            check = verify_local_decomposition(ddgp, spec_t, spec_c, radius)
        worst_local = max(worst_local, check.gap)
        cases += 1
    for seed in range(922, 934):
        kind = "local-spillover" if seed % 2 else "linear-in-means"
        ddgp, spec_t, spec_c, radius = independent_case(seed, outcome_kind=kind)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            check = verify_independent_decomposition(
                ddgp, spec_t, spec_c, radius, expect_zero_residual=True)
        worst_indep = max(worst_indep, check.gap)
        cases += 1
    _report("identification decompositions",
            f"{cases} instances, local gap {worst_local:.2e},"
            f" independent residual {worst_indep:.2e}, both < 1e-10",
            cases >= 20 and worst_local < 1e-10 and worst_indep < 1e-10)


# ----------------------------------------------------------------------
# 7: network invariances on random (graph, features, model) triples
# ----------------------------------------------------------------------


def _untrained(config, g, X, seed):
    return train_gnn(
        g, X, np.zeros(g.n), np.ones(g.n, bool),
        GNNConfig(depth=config.depth, architecture=config.architecture,
                  hidden_width=config.hidden_width, aggregators=config.aggregators,
                  loss=config.loss, epochs=0, learning_rate=config.learning_rate),
        stream(seed, 0),
    )


def _ball(g, center, radius):
    seen = {center}
    frontier = deque([(center, 0)])
    while frontier:
        node, d = frontier.popleft()
        if d == radius:
            continue
        for nbr in g.neighbors(node):
            if int(nbr) not in seen:
                seen.add(int(nbr))
                frontier.append((int(nbr), d + 1))
    return seen


def test_gnn_invariance_suite():
    worst_perm, worst_local, worst_wl = 0.0, 0.0, 0.0
    for trial in range(50):
        rng = stream(904, trial)
        depth = int(rng.integers(1, 4))
        half = int(rng.integers(5, 10))
        base_edges = [(i, j) for i in range(half) for j in range(i + 1, half)
                      if rng.uniform() < 0.4]
        # two disjoint copies of one block guarantee nontrivial color classes
        edges = base_edges + [(i + half, j + half) for i, j in base_edges]
        n = 2 * half
        g = Graph.from_edges(n, edges)
        X = np.tile(rng.choice([0.0, 0.5, 1.0], size=half), 2)
        config = GNNConfig(depth=depth, hidden_width=int(rng.integers(1, 5)))
        model = _untrained(config, g, X, 905 + trial)
        base = forward_gnn(model, g, X)

        perm = rng.permutation(n)
        relabeled = Graph.from_edges(n, [(perm[i], perm[j]) for i, j in g.edges()])
        Xp = np.empty(n)
        Xp[perm] = X
        moved = forward_gnn(model, relabeled, Xp)
        worst_perm = max(worst_perm, float(np.max(np.abs(moved[perm] - base))))

        # locality: changing features strictly outside the receptive field
        # of unit 0 must leave its prediction untouched
        ball = _ball(g, 0, depth)
        outside = np.array([u for u in range(n) if u not in ball], dtype=int)
        X_far = X.copy()
        if outside.size:
            X_far[outside] = rng.uniform(0, 1, outside.size)
        worst_local = max(worst_local,
                          abs(float(forward_gnn(model, g, X_far)[0] - base[0])))

        # units sharing a refinement color after `depth` rounds are
        # indistinguishable to a depth-layer network
        colors = wl_refine(g, colors_from_values(X), rounds=depth).colors
        for color in np.unique(colors):
            members = np.flatnonzero(colors == color)
            if members.size > 1:
                spread = float(np.max(base[members]) - np.min(base[members]))
                worst_wl = max(worst_wl, spread)
    _report("invariance suite", f"50 triples: equivariance {worst_perm:.2e},"
            f" locality {worst_local:.2e}, color consistency {worst_wl:.2e},"
            " all < 1e-10",
            worst_perm < 1e-10 and worst_local < 1e-10 and worst_wl < 1e-10)


# ----------------------------------------------------------------------
# 8: every taped operator against central differences
# ----------------------------------------------------------------------


def test_autodiff_gradients():
    results = list(operator_battery(seed=906, points=100))
    worst_name, worst = max(results, key=lambda nw: nw[1])
    _report("autodiff gradients", f"{len(results)} operators x 100 points,"
            f" worst {worst_name} {worst:.2e} < 1e-5", worst < 1e-5)


# ----------------------------------------------------------------------
# 9: double robustness with one nuisance ruined
# ----------------------------------------------------------------------


def test_double_robustness():
    n, reps, effect = 2000, 200, 1.5
    spec_t, spec_c = ExposureSpec(arm=1), ExposureSpec(arm=0)
    good_p, good_mu = [], []
    for rep in range(reps):
        rng = stream(7, rep)
        g = generate_er(n, 5.0, rng)
        X = rng.uniform(0, 1, n)
        p = 1.0 / (1.0 + np.exp(-(0.5 - X)))
        D = (rng.uniform(size=n) < p).astype(np.uint8)
        Y = 1.0 + 2.0 * X + effect * D + rng.standard_normal(n)
        ind_t, ind_c = indicator(spec_t, g, D), indicator(spec_c, g, D)

        noise_mu = rng.standard_normal(n) * 3.0
        fits = NuisanceFits(p_treat=p, p_control=1.0 - p,
                            mu_treat=noise_mu, mu_control=-noise_mu)
        good_p.append(float(doubly_robust(Y, ind_t, ind_c, fits).mean()))

        noise_p = rng.uniform(0.1, 0.9, n)
        fits = NuisanceFits(p_treat=noise_p, p_control=1.0 - noise_p,
                            mu_treat=1.0 + 2.0 * X + effect,
                            mu_control=1.0 + 2.0 * X)
        good_mu.append(float(doubly_robust(Y, ind_t, ind_c, fits).mean()))
    for label, taus in (("true propensity, noise outcome", good_p),
                        ("noise propensity, true outcome", good_mu)):
        t = np.asarray(taus)
        bias = abs(t.mean() - effect)
        mc_se = t.std(ddof=1) / math.sqrt(reps)
        _report(f"double robustness ({label})",
                f"|bias| {bias:.4f} < 3 x MC SE {3 * mc_se:.4f}", bias < 3 * mc_se)


# ----------------------------------------------------------------------
# 10: bandwidth rule hand values and branch activation
# ----------------------------------------------------------------------


def _apl_by_bfs(g):
    # independent average-path-length computation on the largest component
    comp_of = np.full(g.n, -1)
    comp = 0
    for s in range(g.n):
        if comp_of[s] >= 0:
            continue
        queue = deque([s])
        comp_of[s] = comp
        while queue:
            u = queue.popleft()
            for v in g.neighbors(u):
                if comp_of[v] < 0:
                    comp_of[v] = comp
                    queue.append(int(v))
        comp += 1
    sizes = np.bincount(comp_of[comp_of >= 0])
    members = np.flatnonzero(comp_of == int(np.argmax(sizes)))
    total, pairs = 0, 0
    member_set = set(int(m) for m in members)
    for s in member_set:
        dist = {s: 0}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in g.neighbors(u):
                if int(v) not in dist:
                    dist[int(v)] = dist[u] + 1
                    queue.append(int(v))
        total += sum(dist.values())
        pairs += len(dist) - 1
    return total / pairs


def test_bandwidth_rule():
    path10 = Graph.from_edges(10, [(i, i + 1) for i in range(9)])
    complete10 = Graph.from_edges(10, [(i, j) for i in range(10) for j in range(i + 1, 10)])
    b_path, b_complete = hac_bandwidth(path10), hac_bandwidth(complete10)
    _report("bandwidth hand values", f"path-10 {b_path} == 1, complete-10"
            f" {b_complete} == 1", b_path == 1 and b_complete == 1)

    g = generate_rgg(500, 5.0, stream(907, 0))
    length = _apl_by_bfs(g)
    degree = float(g.degrees.mean())
    threshold = 2.0 * math.log(g.n) / math.log(degree)
    expected = math.ceil(length ** 0.25)
    _report("bandwidth fourth-root branch",
            f"RGG length {length:.2f} >= threshold {threshold:.2f},"
            f" rule {hac_bandwidth(g)} == ceil(L^0.25) {expected}",
            length >= threshold and hac_bandwidth(g) == expected)
