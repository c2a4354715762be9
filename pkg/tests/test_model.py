import itertools
import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, spatial, special

from coopnet.model import (
    BinaryGraph,
    ChannelParams,
    CoincidentNodesWarning,
    ConnectivityMatrix,
    Deployment,
    Domain,
    SingularGainError,
    analytic_mean_degree,
    build_connectivity_matrix,
    degree_pmf,
    derive_seed,
    local_connection_probability,
    make_rng,
    pair_connectivity,
    path_loss,
    realize_edges,
    sample_deployment,
)


# --- rng and seeds ---------------------------------------------------------


def test_make_rng_is_pcg64_and_reproducible():
    a, b = make_rng(7), make_rng(7)
    assert isinstance(a.bit_generator, np.random.PCG64)
    assert np.array_equal(a.random(5), b.random(5))


@pytest.mark.parametrize("bad", [-1, 2**64, 1.5, True, "3"])
def test_make_rng_rejects_bad_seeds(bad):
    with pytest.raises((TypeError, ValueError)):
        make_rng(bad)


def test_derive_seed_deterministic_and_distinct():
    assert derive_seed(11, 1) == derive_seed(11, 1)
    seeds = {derive_seed(r, s) for r in range(5) for s in range(1, 4)}
    assert len(seeds) == 15
    assert all(0 <= x < 2**64 for x in seeds)


# --- domain and deployment -------------------------------------------------


def test_for_density_area():
    d = Domain.for_density(36, 4.0)
    assert d.side == pytest.approx(3.0)
    assert d.area == pytest.approx(9.0)


@pytest.mark.parametrize("shape,side", [("circle", 1.0), ("square", 0.0), ("torus", math.inf)])
def test_domain_validation(shape, side):
    with pytest.raises(ValueError):
        Domain(shape, side)


@given(
    st.lists(st.tuples(st.floats(0, 5), st.floats(0, 5)), min_size=2, max_size=2),
)
def test_torus_distance_is_min_over_images(pts):
    dom = Domain("torus", 5.0)
    a, b = np.array(pts[0]), np.array(pts[1])
    images = [b + 5.0 * np.array(k) for k in itertools.product((-1, 0, 1), repeat=2)]
    brute = min(np.linalg.norm(a - im) for im in images)
    assert dom.distance(a, b) == pytest.approx(brute, abs=1e-12)


def test_distance_matrix_matches_pdist():
    dep = sample_deployment(60, Domain("square", 4.0), seed=3)
    ref = spatial.distance.squareform(spatial.distance.pdist(dep.positions))
    d = dep.distance_matrix(block=7)
    assert np.allclose(d, ref, rtol=0, atol=1e-12)
    assert np.array_equal(d, d.T)


def test_sample_deployment_uniform_and_seeded():
    dom = Domain("square", 2.0)
    a = sample_deployment(4000, dom, seed=1)
    b = sample_deployment(4000, dom, seed=1)
    assert np.array_equal(a.positions, b.positions)
    assert np.all(dom.contains(a.positions))
    # each coordinate is U(0, 2): mean 1, sd 2/sqrt(12)
    se = (2 / math.sqrt(12)) / math.sqrt(4000)
    assert np.all(np.abs(a.positions.mean(axis=0) - 1.0) < 4 * se)
    assert a.density == pytest.approx(1000.0)


def test_deployment_rejects_outside_points_and_is_readonly():
    with pytest.raises(ValueError):
        Deployment(Domain("square", 1.0), [[0.5, 0.5], [1.5, 0.2]])
    dep = Deployment(Domain("square", 1.0), [[0.5, 0.5], [0.1, 0.2]])
    with pytest.raises(ValueError):
        dep.positions[0, 0] = 0.0


def test_deployment_roundtrip_json():
    dep = sample_deployment(10, Domain("torus", 3.0), seed=5)
    back = Deployment.from_dict(json.loads(json.dumps(dep.to_dict())))
    assert back.domain == dep.domain
    assert np.array_equal(back.positions, dep.positions)


# --- channel -----------------------------------------------------------------


def test_path_loss_values():
    p = ChannelParams(eta=4, eps=0.1, r0=1)
    assert path_loss(1.0, p) == pytest.approx(1 / 1.1)
    assert path_loss(0.0, p) == pytest.approx(10.0)
    with pytest.raises(SingularGainError):
        path_loss(0.0, ChannelParams(eta=4, eps=0.0))


def test_pair_connectivity_matches_rayleigh_monte_carlo():
    # no outage iff |h|^2 * PL(r) >= r0^-eta with |h|^2 ~ Exp(1)
    p = ChannelParams(eta=3.0, eps=0.2, r0=1.3)
    fade = make_rng(0).exponential(size=400_000)
    for r in (0.0, 0.5, 1.0, 1.5, 2.2):
        mc = np.mean(fade * path_loss(r, p) >= p.threshold_scale)
        se = math.sqrt(mc * (1 - mc) / fade.size) + 1e-6
        assert abs(pair_connectivity(r, p) - mc) < 4 * se


def test_pair_connectivity_special_cases():
    p = ChannelParams(eta=4, eps=0.0)
    assert pair_connectivity(0.0, p) == 1.0
    assert pair_connectivity(1.0, ChannelParams(eta=4, eps=0.1)) == pytest.approx(math.exp(-1.1))
    hd = ChannelParams(eta=math.inf)
    assert hd.hard_disk
    assert pair_connectivity(np.array([0.0, 1.0, 1.0 + 1e-12]), hd).tolist() == [1.0, 1.0, 0.0]
    # no overflow for a large exponent
    assert pair_connectivity(0.5, ChannelParams(eta=400, eps=0.0, r0=2.0)) == pytest.approx(1.0)


@given(st.floats(0.5, 8), st.floats(0, 1), st.floats(0.3, 3))
@settings(max_examples=50)
def test_pair_connectivity_decreasing_in_distance(eta, eps, r0):
    p = ChannelParams(eta, eps, r0)
    h = pair_connectivity(np.linspace(0, 5 * r0, 200), p)
    assert np.all(np.diff(h) <= 0)
    assert np.all((h >= 0) & (h <= 1))


@pytest.mark.parametrize("eta", [ChannelParams().eta, 0.0, -1.0])
def test_channel_validation(eta):
    if eta > 0:
        ChannelParams(eta=eta)
    else:
        with pytest.raises(ValueError):
            ChannelParams(eta=eta)


def test_connectivity_matrix_properties():
    dep = sample_deployment(40, Domain.for_density(40, 4.0), seed=2)
    h = build_connectivity_matrix(dep, ChannelParams())
    assert np.array_equal(h.h, h.h.T)
    assert np.all(np.diag(h.h) == 0)
    assert np.all((h.h >= 0) & (h.h <= 1))
    back = ConnectivityMatrix.from_dict(json.loads(json.dumps(h.to_dict())))
    assert np.array_equal(back.h, h.h)


def test_connectivity_matrix_validation():
    with pytest.raises(ValueError):
        ConnectivityMatrix([[0, 0.5], [0.4, 0]])
    with pytest.raises(ValueError):
        ConnectivityMatrix([[0.1, 0.5], [0.5, 0]])
    with pytest.raises(ValueError):
        ConnectivityMatrix([[0, 1.5], [1.5, 0]])


def test_coincident_nodes_warn_without_guard():
    dep = Deployment(Domain("square", 1.0), [[0.5, 0.5], [0.5, 0.5], [0.1, 0.1]])
    with pytest.warns(CoincidentNodesWarning):
        h = build_connectivity_matrix(dep, ChannelParams(eps=0.0))
    assert h.h[0, 1] == 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_connectivity_matrix(dep, ChannelParams(eps=0.1))


# --- graphs ------------------------------------------------------------------


def test_binary_graph_canonical_form():
    g = BinaryGraph(4, [[2, 1], [0, 3], [1, 0]])
    assert g.edges.tolist() == [[0, 1], [0, 3], [1, 2]]
    assert g.degrees().tolist() == [2, 2, 1, 1]
    assert BinaryGraph.from_adjacency(g.adjacency()).edges.tolist() == g.edges.tolist()
    assert BinaryGraph.from_dict(g.to_dict()).edges.tolist() == g.edges.tolist()


@pytest.mark.parametrize("edges", [[[0, 0]], [[0, 1], [1, 0]], [[0, 5]]])
def test_binary_graph_validation(edges):
    with pytest.raises(ValueError):
        BinaryGraph(3, edges)


def test_realize_edges_frequency_matches_h():
    h = ConnectivityMatrix(np.array([[0, 0.2, 0.9, 0], [0.2, 0, 0.5, 1.0], [0.9, 0.5, 0, 0.0], [0, 1.0, 0.0, 0]]))
    reps = 4000
    counts = np.zeros((4, 4))
    for s in range(reps):
        counts += realize_edges(h, s).adjacency()
    freq = counts / reps
    se = np.sqrt(h.h * (1 - h.h) / reps) + 1e-9
    assert np.all(np.abs(freq - h.h) <= 4 * se)
    assert freq[0, 3] == 0 and freq[1, 3] == 1


def test_realize_edges_deterministic():
    dep = sample_deployment(30, Domain.for_density(30, 4.0), seed=0)
    h = build_connectivity_matrix(dep, ChannelParams())
    assert np.array_equal(realize_edges(h, 9).edges, realize_edges(h, 9).edges)


# --- analytic mean degree ------------------------------------------------------


def test_mean_degree_default_value():
    lam = analytic_mean_degree(4.0, ChannelParams(4, 0.1, 1), guard_correction=False)
    assert lam == pytest.approx(2 * math.pi * math.sqrt(math.pi), rel=1e-12)
    corrected = analytic_mean_degree(4.0, ChannelParams(4, 0.1, 1))
    assert corrected == pytest.approx(lam * math.exp(-0.1), rel=1e-12)


@pytest.mark.parametrize("eta,eps,r0", [(2.0, 0.01, 1.0), (3.0, 0.3, 0.7), (4.0, 0.1, 1.0), (6.5, 0.0, 2.0)])
def test_mean_degree_matches_quadrature(eta, eps, r0):
    rho = 2.5
    p = ChannelParams(eta, eps, r0)
    val, _ = integrate.quad(lambda r: 2 * math.pi * rho * r * pair_connectivity(r, p), 0, math.inf)
    assert analytic_mean_degree(rho, p) == pytest.approx(val, rel=1e-8)


def test_mean_degree_hard_disk_and_validation():
    assert analytic_mean_degree(3.0, ChannelParams(eta=math.inf, r0=2.0)) == pytest.approx(12 * math.pi)
    # soft kernel tends to the hard disk as eta grows
    big = analytic_mean_degree(3.0, ChannelParams(eta=400.0, eps=0.0, r0=2.0))
    assert big == pytest.approx(12 * math.pi, rel=5e-3)
    with pytest.raises(ValueError):
        analytic_mean_degree(0.0, ChannelParams())


# --- local connection probability and degree law ---------------------------------


def test_local_probability_center_of_large_domain():
    # far from the border the average tends to (corrected lambda / rho) / area
    side = 20.0
    p = ChannelParams(4, 0.1, 1)
    dep = Deployment(Domain("square", side), [[side / 2, side / 2], [1.0, 1.0]])
    got = local_connection_probability(0, dep, p, resolution=512)
    want = analytic_mean_degree(1.0, p) / side**2
    assert got == pytest.approx(want, rel=2e-3)


def test_local_probability_grid_refinement():
    dep = sample_deployment(5, Domain("square", 3.0), seed=4)
    p = ChannelParams()
    vals = [local_connection_probability(1, dep, p, resolution=r) for r in (32, 128, 512)]
    # midpoint rule: error shrinks by ~16 per 4x refinement, allow a wide margin
    assert abs(vals[1] - vals[2]) < abs(vals[0] - vals[2]) / 4
    assert abs(vals[1] - vals[2]) < 1e-4


def test_local_probability_errors():
    dep = sample_deployment(3, Domain("square", 1.0), seed=0)
    with pytest.raises(ValueError):
        local_connection_probability(0, dep, ChannelParams(), resolution=4)
    with pytest.raises(IndexError):
        local_connection_probability(3, dep, ChannelParams())


def test_degree_pmf_binomial_closed_form():
    n, h = 12, 0.3
    pmf = degree_pmf(h, n)
    ref = [math.comb(n - 1, k) * h**k * (1 - h) ** (n - 1 - k) for k in range(n)]
    assert np.allclose(pmf, ref, rtol=1e-12)
    assert pmf.sum() == pytest.approx(1.0)
    pois = degree_pmf(h, n, poisson=True)
    lam = (n - 1) * h
    assert pois[2] == pytest.approx(math.exp(-lam) * lam**2 / 2)
    with pytest.raises(ValueError):
        degree_pmf(1.2, n)


def test_degree_pmf_matches_sampled_degrees():
    # node degree in a realized graph is Binomial(n-1, h) when all H_i. equal h
    n, h = 10, 0.4
    hm = np.full((n, n), h)
    np.fill_diagonal(hm, 0)
    cm = ConnectivityMatrix(hm)
    reps = 3000
    deg0 = np.array([realize_edges(cm, s).degrees()[0] for s in range(reps)])
    emp = np.bincount(deg0, minlength=n) / reps
    pmf = degree_pmf(h, n)
    assert np.all(np.abs(emp - pmf) <= 4 * np.sqrt(pmf * (1 - pmf) / reps) + 1e-3)
    assert special.comb(n - 1, 4) * h**4 * (1 - h) ** 5 == pytest.approx(pmf[4])


def test_fig1_density():
    dep = sample_deployment(10_000, Domain("square", 25.0), seed=1)
    assert dep.density == pytest.approx(16.0)


def test_soft_kernel_approaches_hard_disk():
    r = np.linspace(0, 3, 3001)
    soft = pair_connectivity(r, ChannelParams(eta=64.0, eps=0.0, r0=1.0))
    hard = pair_connectivity(r, ChannelParams(eta=math.inf, r0=1.0))
    away = np.abs(r - 1.0) > 0.1
    assert np.max(np.abs(soft - hard)[away]) < 0.05


@pytest.mark.parametrize("p", [0.1, 0.5, 0.93])
def test_realize_edges_two_node_band(p):
    h = ConnectivityMatrix(np.array([[0.0, p], [p, 0.0]]))
    m = 10_000
    freq = sum(realize_edges(h, s).num_edges for s in range(m)) / m
    assert abs(freq - p) <= 4 * math.sqrt(p * (1 - p) / m)


def test_degree_pmf_degenerate_and_mean():
    assert degree_pmf(0.0, 10)[0] == 1.0
    assert degree_pmf(1.0, 10)[9] == 1.0
    pmf = degree_pmf(0.3, 5)
    assert abs(pmf.sum() - 1.0) < 1e-12
    assert np.dot(np.arange(5), pmf) == pytest.approx(1.2)


@pytest.mark.parametrize("n,h", [(500, 0.02), (1000, 0.005), (2000, 0.01)])
def test_poisson_approximation_total_variation(n, h):
    tv = 0.5 * np.abs(degree_pmf(h, n) - degree_pmf(h, n, poisson=True)).sum()
    assert tv < 0.05
