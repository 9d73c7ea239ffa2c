import itertools
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvrouter import criteria as cr
from cvrouter import gaussian as ga
from cvrouter import netgen as ng
from cvrouter import optimizer as op


def involution_spectrum(g, sq):
    """Local spectrum from R = (cov - lam I)/mu restricted to A: nu = sqrt(lam^2 - mu^2 t^2)."""
    cov = ga.build_cluster(g, sq)
    r = (cov - sq.lam * np.eye(2 * g.n)) / sq.mu
    t = np.linalg.eigvalsh(ga.reduce(r, g.side_a))
    nu = np.sqrt(np.clip(sq.lam**2 - sq.mu**2 * t**2, 1, None))
    return np.sort(nu)[::-1][::2]


@given(st.integers(2, 12), st.integers(0, 10**6), st.floats(1.5, 30))
def test_spectrum_matches_involution_oracle(n, seed, s):
    rng = np.random.default_rng(seed)
    g = ng.bipartition(ng.barabasi_albert(n, 1, rng))
    sq = ga.Squeezing(s)
    assert np.allclose(cr.spectrum_report(g, sq).eigenvalues_a, involution_spectrum(g, sq), rtol=1e-7)


def test_edgeless_is_all_ones():
    rep = cr.spectrum_report(ng.bipartition(ng.from_edges(4, [])), 10)
    assert np.allclose(rep.eigenvalues_a, 1) and np.allclose(rep.eigenvalues_b, 1)
    assert rep.count_one == 2 and not rep.contains_lambda
    assert rep.verdict_bipartite == "impossible" and rep.verdict_internal == "possible"
    assert rep.marginal_internal


def test_single_edge_holds_the_pair():
    rep = cr.check_bipartite(ng.bipartition(ng.complete(2)), 10)
    assert rep.contains_lambda and rep.eigenvalues_a[0] == pytest.approx(5.05)


def test_complete_six():
    rep = cr.check_internal(ng.bipartition(ng.complete(6)), 10)
    assert rep.count_one == 2 and not rep.contains_lambda
    assert rep.verdict_internal == "possible" and rep.verdict_bipartite == "impossible"


def test_report_round_trip():
    rep = cr.spectrum_report(ng.bipartition(ng.grid(3, 2)), 10)
    back = cr.SpectrumReport.from_json(rep.to_json())
    assert np.array_equal(back.eigenvalues_a, rep.eigenvalues_a)
    assert back.to_json() == rep.to_json()


def test_square_covariance_is_cluster():
    g = ng.bipartition(ng.grid(2, 2))
    for s in (2, 10, 31.62):
        cov = ga.build_cluster(g, s)
        assert np.allclose(cov[np.ix_(cr.SQUARE_ORDER, cr.SQUARE_ORDER)], cr.square_covariance(s), atol=1e-12)


def test_square_hand_solution_block():
    sq = ga.Squeezing(10)
    block = cr.square_pair_block(cr.square_oracle(sq, **cr.SQUARE_HAND_SOLUTION))
    d = sq.mu / math.sqrt(5)
    expected = np.array(
        [[sq.lam - d, 0, 0, 2 * d], [0, sq.lam - d, 2 * d, 0], [0, 2 * d, sq.lam + d, 0], [2 * d, 0, 0, sq.lam + d]]
    )
    assert np.allclose(block, expected, atol=1e-12)
    assert np.linalg.det(block) == pytest.approx(1)
    # the rest of the square decouples from the pair
    gen = cr.square_oracle(sq, **cr.SQUARE_HAND_SOLUTION)
    assert np.allclose(gen[np.ix_([0, 4, 2, 6], [1, 5, 3, 7])], 0, atol=1e-12)


def test_decoupling_theta_example():
    assert cr.decoupling_theta(np.pi / 2) == pytest.approx(1.01722, abs=1e-5)


@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_decoupling_theta_cancels_xx(phi1, phi2):
    local = cr._scan_local(10, cr.decoupling_theta(phi1), phi1, phi2)
    assert abs(local[0, 1]) < 1e-9 and abs(local[2, 3]) < 1e-9


def test_xx_factor_closed_form():
    # Cov(X1, X2) = -b (cos 2t - sin t cos t sin p1) sin(p1 + p2 + p3) with phases exp(+i phi)
    from cvrouter.unitaries import beam_splitter_unitary

    b = (100 - 1) / 50
    for t, p1, p2, p3 in [(0.3, 1.0, 0.2, 2.0), (1.1, -0.4, 3.0, 0.5)]:
        s_a = ga.passive_symplectic(beam_splitter_unitary(t, p1, p2, p3))
        local = s_a @ cr.square_covariance(10)[:4, :4] @ s_a.T
        expected = -b * (math.cos(2 * t) - math.sin(t) * math.cos(t) * math.sin(p1)) * math.sin(p1 + p2 + p3)
        assert local[0, 1] == pytest.approx(expected, abs=1e-12)


def test_square_scan_shape_and_csv():
    scan = cr.square_scan(10, 7)
    assert scan.var_residual.shape == (7, 7)
    lines = scan.to_csv().splitlines()
    assert lines[0] == "phi1_a,phi2_a,var_x1_minus_lambda,cov_x1_p1" and len(lines) == 50


FEASIBLE = [(ng.grid(3, 2), (0, 5)), (ng.grid(3, 2), (2, 3)), (ng.grid(5, 2), (1, 8)), (ng.complete(2), (0, 1))]


@pytest.mark.parametrize("graph,pair", FEASIBLE)
def test_constructive_bipartite(graph, pair):
    g = ng.bipartition(graph)
    res = cr.constructive_route(g, 10, pair)
    assert np.allclose(res.routed, ga.target_pair_covariance(10), atol=1e-9)
    out = res.symplectic @ ga.build_cluster(g, 10) @ res.symplectic.T
    assert np.allclose(ga.routing_rows(out, *pair), ga.ideal_rows(g.n, *pair, 10), atol=1e-9)
    for u in (res.u_a, res.u_b):
        assert np.allclose(u @ u.conj().T, np.eye(len(u)), atol=1e-10)


def test_constructive_reversed_pair():
    g = ng.bipartition(ng.grid(3, 2))
    res = cr.constructive_route(g, 10, (5, 0))
    assert res.pair == (5, 0)
    assert np.allclose(res.routed, ga.target_pair_covariance(10), atol=1e-9)


@pytest.mark.parametrize("n,pair", [(6, (0, 2)), (7, (1, 3)), (5, (0, 2))])
def test_constructive_internal_on_complete(n, pair):
    g = ng.bipartition(ng.complete(n))
    res = cr.constructive_route(g, 4, pair)
    assert np.allclose(res.routed, ga.target_pair_covariance(4), atol=1e-9)


@pytest.mark.parametrize(
    "graph,pair", [(ng.complete(6), (0, 5)), (ng.grid(4, 2), (0, 7)), (ng.grid(3, 2), (0, 1))]
)
def test_constructive_precondition(graph, pair):
    with pytest.raises(cr.PreconditionError):
        cr.constructive_route(ng.bipartition(graph), 10, pair)


def test_internal_needs_two_pure_modes():
    # provider B of K5 holds two modes but only one pure one
    with pytest.raises(cr.PreconditionError):
        cr.constructive_route(ng.bipartition(ng.complete(5)), 4, (3, 4))


def test_constructive_needs_partition():
    with pytest.raises(cr.PreconditionError):
        cr.constructive_route(ng.grid(3, 2), 10, (0, 5))


def test_constructive_flags_degenerate_lambda():
    # two disjoint edges across the cut: two local modes carry lambda
    g = ng.bipartition(ng.from_edges(4, [(0, 2), (1, 3)]))
    res = cr.constructive_route(g, 10, (0, 3))
    assert res.ambiguous
    assert np.allclose(res.routed, ga.target_pair_covariance(10), atol=1e-9)


def small_connected_graphs(max_n):
    for g in nx.graph_atlas_g()[1:]:
        if 2 <= g.number_of_nodes() <= max_n and nx.is_connected(g):
            yield ng.bipartition(ng.from_edges(g.number_of_nodes(), list(g.edges())))


def test_spectrum_decides_constructive_route_small_graphs():
    """Every cross pair routes constructively exactly when lambda is in the spectrum."""
    sq = ga.Squeezing(10)
    for g in small_connected_graphs(6):
        rep = cr.spectrum_report(g, sq)
        for pair in itertools.product(g.side_a, g.side_b):
            if rep.contains_lambda:
                res = cr.constructive_route(g, sq, pair)
                assert np.allclose(res.routed, ga.target_pair_covariance(sq), atol=1e-8), (g.edges, pair)
            else:
                with pytest.raises(cr.PreconditionError):
                    cr.constructive_route(g, sq, pair)


@pytest.mark.slow
def test_optimizer_never_beats_no_go_on_small_graphs():
    """Soundness of the bipartite criterion: no ideal optimizer run when lambda is missing."""
    sq = ga.Squeezing(3)
    for g in small_connected_graphs(5):
        if cr.spectrum_report(g, sq).contains_lambda:
            continue
        problem = op.RoutingProblem(g, sq, g.side_a[0], g.side_b[-1])
        cfg = op.CmaConfig(problem.dim, max_generations=1500, stagnation_generations=300, seed=1)
        assert op.route(problem, cfg).f_opt > op.IDEAL_THRESHOLD, g.edges


def test_histogram_counts_and_csv_round_trip():
    spec = ng.TopologySpec("ba", 40, seed=2)
    hist = cr.spectral_histogram(spec, 3, 10, bins=25)
    assert hist.counts.sum() == hist.total == 60
    assert 0 <= hist.value_one_pct <= 100
    edges, counts = cr.SpectralHistogram.read_csv(hist.to_csv())
    assert np.array_equal(edges, hist.edges) and np.array_equal(counts, hist.counts)
    spectra = cr.ensemble_eigenvalues(spec, 3, 10)
    threaded = cr.spectral_histogram(spec, 3, 10, bins=25, threads=3)
    assert np.array_equal(threaded.counts, hist.counts)
    assert spectra[1].shape == (20,)


def test_histogram_side_swap_invariance():
    # a pure global state gives both providers the same non-trivial spectrum
    g = ng.bipartition(ng.generate(ng.TopologySpec("ba", 30, seed=5)))
    rep = cr.spectrum_report(g, 10)
    assert np.allclose(rep.eigenvalues_a, rep.eigenvalues_b, atol=1e-8)
    flipped = ng.bipartition(g, g.side_b)
    assert np.allclose(cr.spectrum_report(flipped, 10).eigenvalues_a, rep.eigenvalues_b, atol=1e-8)


def test_histogram_edgeless_single_bin():
    hist = cr.spectral_histogram(ng.TopologySpec("explicit", 4), 1, 10, bins=10)
    assert np.flatnonzero(hist.counts).tolist() == [0] and hist.edges[0] == 1.0
    assert hist.value_one_pct == 100


@pytest.mark.parametrize("k", range(1, 51))
def test_parity_law_on_ladders(k):
    rep = cr.spectrum_report(ng.bipartition(ng.grid(k, 2)), 10)
    assert rep.contains_lambda == (k % 2 == 1)
    assert rep.count_one == 0


def test_parity_law_counterexample_path_of_six():
    # 1x6 path cut 3|3: k is odd yet lambda is absent
    rep = cr.spectrum_report(ng.bipartition(ng.grid(1, 6)), 10)
    assert not rep.contains_lambda
    assert np.allclose(rep.eigenvalues_a, [4.67737852, 1, 1], rtol=1e-8)
