import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dgcformer.clustering import (
    CLUSTER_JSON_SCHEMA,
    ChannelClusterer,
    GRUAutoencoder,
    GraphClusterNet,
    build_graph,
    build_mask,
    centers_from_labels,
    channel_features,
    cluster_export,
    correlation_matrix,
    inertia,
    kmeans,
    loss_ds,
    loss_rec,
    mask_vector,
    propagation_operator,
    soft_assignment,
    target_distribution,
)
from dgcformer.data import SyntheticSpec, generate_synthetic
from dgcformer.errors import DegenerateCluster, ShapeMismatch
from dgcformer.training import select_cluster_count, silhouette

import oracles

D = torch.float64


def T(a):
    return torch.tensor(a, dtype=D)


# -- frozen derived examples -------------------------------------------------

def test_soft_assignment_scalar(derived):
    ex = derived["soft_assignment_scalar"]
    q = soft_assignment(T(ex["h"]), T(ex["centers"]), ex["t"])
    np.testing.assert_allclose(q.numpy(), ex["q"], atol=1e-15)
    np.testing.assert_allclose(q.numpy(), [[2 / 3, 1 / 3]], atol=1e-15)


def test_target_distribution_example(derived):
    ex = derived["target_distribution_2x2"]
    p = target_distribution(T(ex["q"])).numpy()
    np.testing.assert_allclose(p, ex["p"], atol=1e-12)
    np.testing.assert_allclose(p, [[0.8727, 0.1273], [0.4909, 0.5091]], atol=1e-4)


def test_loss_rec_example(derived):
    ex = derived["loss_rec_single"]
    assert loss_rec(T(ex["x"]), T(ex["x_rec"])).item() == ex["value"] == 2.0


def test_loss_ds_example_and_asymmetry(derived):
    ex = derived["loss_ds_pair"]
    fwd = loss_ds(T(ex["p"]), T(ex["g"])).item()
    back = loss_ds(T(ex["g"]), T(ex["p"])).item()
    assert fwd == pytest.approx(math.log(2), abs=1e-12)
    assert fwd == pytest.approx(ex["forward"], abs=1e-12)
    assert back == pytest.approx(ex["swapped"], abs=1e-9)
    assert back != pytest.approx(fwd)


def test_mask_and_vector_example(derived):
    ex = derived["mask_vector_001"]
    m = build_mask(ex["labels"])
    np.testing.assert_array_equal(m, ex["mask"])
    np.testing.assert_array_equal(mask_vector(m), ex["vector"])
    np.testing.assert_array_equal(mask_vector(m), [1, 1, 0])


def test_propagation_operator_examples(derived):
    np.testing.assert_allclose(propagation_operator(np.array(derived["propagation_path3"]["adj"], float)),
                               derived["propagation_path3"]["op"], atol=1e-15)
    np.testing.assert_array_equal(propagation_operator(np.zeros((4, 4))), np.eye(4))


# -- random agreement with the brute-force oracles -------------------------------

def test_random_agreement_with_oracles():
    rng = np.random.default_rng(123)
    for _ in range(150):
        N, n, l2 = rng.integers(1, 7), rng.integers(1, 5), rng.integers(1, 4)
        h = rng.normal(size=(N, l2))
        mu = rng.normal(size=(n, l2))
        t = float(rng.choice([0.5, 1.0, 2.0]))
        q = soft_assignment(T(h), T(mu), t)
        np.testing.assert_allclose(q.numpy(), oracles.soft_assignment(h.tolist(), mu.tolist(), t), atol=1e-8)
        p = target_distribution(q)
        np.testing.assert_allclose(p.numpy(), oracles.target_distribution(q.tolist()), atol=1e-8)
        g = torch.softmax(T(rng.normal(size=(N, n))), -1)
        assert loss_ds(p, g).item() == pytest.approx(oracles.loss_ds(p.tolist(), g.tolist()), abs=1e-8)
        x, xr = rng.normal(size=(N, 5)), rng.normal(size=(N, 5))
        assert loss_rec(T(x), T(xr)).item() == pytest.approx(oracles.loss_rec(x.tolist(), xr.tolist()), abs=1e-8)
        labels = rng.integers(0, n, N).tolist()
        m = build_mask(labels)
        np.testing.assert_array_equal(m, oracles.build_mask(labels))
        np.testing.assert_array_equal(mask_vector(m), oracles.mask_vector(m.tolist()))
        adj = np.triu(rng.integers(0, 2, (N, N)), 1).astype(float)
        adj = adj + adj.T
        np.testing.assert_allclose(propagation_operator(adj), oracles.propagation_operator(adj.tolist()), atol=1e-12)


def test_gcn_forward_matches_oracle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        N, L, l1, l2, n = 4, 6, 5, 3, int(rng.integers(1, 4))
        net = GraphClusterNet(L, l1, l2, [n], epsilon=0.5).double()
        x, h1, h2 = rng.normal(size=(N, L)), rng.random((N, l1)), rng.random((N, l2))
        adj = (rng.random((N, N)) > 0.5).astype(float)
        adj = np.triu(adj, 1) + np.triu(adj, 1).T
        op = propagation_operator(adj)
        got = net(T(x), T(op), T(h1), T(h2), n).detach().numpy()
        want = oracles.gcn_forward(x.tolist(), op.tolist(), h1.tolist(), h2.tolist(),
                                   net.w0.tolist(), net.w1.tolist(), net.w2[str(n)].tolist(), 0.5)
        np.testing.assert_allclose(got, want, atol=1e-10)


def test_batched_losses_average_over_windows():
    rng = np.random.default_rng(8)
    x, xr = rng.normal(size=(3, 4, 6)), rng.normal(size=(3, 4, 6))
    want = np.mean([oracles.loss_rec(x[b].tolist(), xr[b].tolist()) for b in range(3)])
    assert loss_rec(T(x), T(xr)).item() == pytest.approx(want, abs=1e-12)
    with pytest.raises(ShapeMismatch):
        loss_rec(T(x), T(xr[..., :5]))


# -- properties -------------------------------------------------------------------

finite = st.floats(-5, 5, allow_nan=False)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 3)), elements=finite),
       arrays(np.float64, st.tuples(st.integers(1, 4), st.just(3)), elements=finite))
@settings(max_examples=80, deadline=None)
def test_distributions_are_row_stochastic(h, mu):
    mu = mu[:, : h.shape[1]]
    q = soft_assignment(T(h), T(mu))
    np.testing.assert_allclose(q.sum(-1).numpy(), 1.0, atol=1e-6)
    p = target_distribution(q)
    np.testing.assert_allclose(p.sum(-1).numpy(), 1.0, atol=1e-6)
    assert (p >= 0).all()


@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_gcn_output_row_stochastic(N, n, seed):
    torch.manual_seed(seed)
    net = GraphClusterNet(5, 4, 3, [n]).double()
    x = torch.randn(2, N, 5, dtype=D)
    g = net(x, T(np.eye(N)), torch.rand(2, N, 4, dtype=D), torch.rand(2, N, 3, dtype=D), n)
    np.testing.assert_allclose(g.sum(-1).detach().numpy(), 1.0, atol=1e-6)


def _entropy(rows):
    rows = np.clip(rows, 1e-300, None)
    return -(rows * np.log(rows)).sum(-1)


@given(st.integers(2, 4), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_sharpening_lowers_entropy_for_balanced_q(n, seed):
    rng = np.random.default_rng(seed)
    base = rng.dirichlet(np.ones(n))
    # every cyclic shift of one row: all column sums are equal
    q = np.stack([np.roll(base, k) for k in range(n)])
    p = target_distribution(T(q)).numpy()
    assert np.all(_entropy(p) <= _entropy(q) + 1e-12)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=8))
def test_mask_is_an_equivalence_relation(labels):
    m = build_mask(labels).astype(bool)
    assert m.diagonal().all()
    assert (m == m.T).all()
    closure = (m.astype(int) @ m.astype(int)) > 0
    assert (closure == m).all()
    vec = mask_vector(m)
    for i in range(len(labels)):
        assert vec[i] == (labels.count(labels[i]) > 1)


def test_degenerate_target_raises():
    q = T([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(DegenerateCluster):
        target_distribution(q)


# -- graph ------------------------------------------------------------------------

def test_white_noise_has_no_edges():
    v = np.random.default_rng(0).normal(size=(2000, 6))
    assert build_graph(v, 0.6).sum() == 0


def test_high_threshold_on_noisy_synthetic_has_no_edges():
    s, _ = generate_synthetic(SyntheticSpec(noise_std=0.1, steps=2000))
    assert build_graph(s.values, 0.999).sum() == 0


def test_graph_links_planted_groups():
    s, labels = generate_synthetic(SyntheticSpec(noise_std=0.1, steps=2000))
    a = build_graph(s.values, 0.6)
    expect = (labels[:, None] == labels[None, :]).astype(float) - np.eye(8)
    np.testing.assert_array_equal(a, expect)


def test_graph_uses_absolute_correlation():
    x = np.random.default_rng(1).normal(size=500)
    a = build_graph(np.column_stack([x, -x]), 0.6)
    assert a[0, 1] == a[1, 0] == 1.0


def test_correlation_matrix_matches_oracle_and_handles_constants():
    rng = np.random.default_rng(2)
    v = rng.normal(size=(50, 3))
    v[:, 2] = 4.0
    c = correlation_matrix(v)
    assert c[0, 1] == pytest.approx(oracles.pearson(v[:, 0].tolist(), v[:, 1].tolist()), abs=1e-12)
    assert c[0, 2] == 0.0 and c[2, 2] == 1.0


def test_threshold_must_be_in_unit_interval():
    with pytest.raises(ValueError):
        build_graph(np.zeros((5, 2)), 1.0)


def test_isolated_identical_nodes_get_identical_rows():
    torch.manual_seed(0)
    net = GraphClusterNet(6, 4, 3, [2]).double()
    x = torch.randn(1, 6, dtype=D).repeat(2, 1)
    h1, h2 = torch.rand(1, 4, dtype=D).repeat(2, 1), torch.rand(1, 3, dtype=D).repeat(2, 1)
    g = net(x, T(propagation_operator(np.zeros((2, 2)))), h1, h2, 2)
    assert torch.equal(g[0], g[1])


# -- k-means and count selection ---------------------------------------------------

def _blobs(rng, sizes=(5, 5), spread=0.05):
    centers = rng.normal(scale=20, size=(len(sizes), 3))
    pts = np.concatenate([c + spread * rng.normal(size=(k, 3)) for c, k in zip(centers, sizes)])
    labels = np.concatenate([np.full(k, i) for i, k in enumerate(sizes)])
    return pts, labels


def test_kmeans_recovers_blobs():
    rng = np.random.default_rng(3)
    pts, truth = _blobs(rng)
    labels, centers = kmeans(pts, 2, seed=0)
    assert len(set(zip(labels, truth))) == 2
    assert inertia(pts, labels, centers) < 1.0


def test_kmeans_is_seeded_and_handles_duplicates():
    pts = np.zeros((5, 2))
    labels, _ = kmeans(pts, 3, seed=1)
    assert len(set(labels.tolist())) == 3  # duplicate points still fill every cluster
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(20, 2))
    a, ca = kmeans(pts, 3, seed=9)
    b, cb = kmeans(pts, 3, seed=9)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(ca, cb)


def test_kmeans_rejects_bad_counts():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 4)


def test_silhouette_matches_oracle(derived):
    ex = derived["silhouette_blobs"]
    pts = np.array(ex["points"])
    assert silhouette(pts, np.array(ex["true_labels"])) == pytest.approx(ex["scores"]["2"], abs=1e-12)


def test_select_cluster_count_blobs(derived):
    ex = derived["silhouette_blobs"]
    pts = np.array(ex["points"])
    assert max(ex["scores"], key=ex["scores"].get) == "2"
    assert select_cluster_count(pts, [2, 3, 4]) == 2
    assert select_cluster_count(pts, [3]) == 3
    assert select_cluster_count(pts[:2], [2]) == 2


def test_select_cluster_count_never_picks_one_unless_alone():
    pts, _ = _blobs(np.random.default_rng(5), (3, 3))
    assert select_cluster_count(pts, [1, 2]) == 2
    assert select_cluster_count(pts, [1]) == 1
    assert silhouette(pts, np.zeros(6, int)) == -1.0
    assert silhouette(pts, np.arange(6)) == 0.0


def test_select_cluster_count_ties_go_to_smaller():
    pts = np.array([[0.0], [0.0], [10.0], [10.0]])
    # n=2 gives silhouette 1; n=3 must split a zero-spread pair and scores lower
    assert select_cluster_count(pts, [2, 3]) == 2
    with pytest.raises(ValueError):
        select_cluster_count(pts, [5])


def test_channel_features_and_centers():
    h2 = np.arange(2 * 3 * 2, dtype=float).reshape(2, 3, 2)
    f = channel_features(h2)
    assert f.shape == (3, 4)
    np.testing.assert_array_equal(f[1], np.concatenate([h2[0, 1], h2[1, 1]]))
    c = centers_from_labels(h2, np.array([0, 0, 1]), 2)
    np.testing.assert_allclose(c[1], h2[:, 2].mean(0))


# -- autoencoder ------------------------------------------------------------------

def test_encoder_shapes_with_defaults():
    ae = GRUAutoencoder(96)
    h1, h2 = ae.encode(torch.randn(7, 96))
    assert h1.shape == (7, 32) and h2.shape == (7, 10)
    assert (h2 >= 0).all()
    assert ae.decode(h2).shape == (7, 96)
    h1b, h2b = ae.encode(torch.randn(4, 7, 96))
    assert h2b.shape == (4, 7, 10)


def test_encoder_is_permutation_equivariant():
    torch.manual_seed(1)
    ae = GRUAutoencoder(16, 8, 4).double()
    x = torch.randn(5, 16, dtype=D)
    perm = torch.tensor([3, 0, 4, 1, 2])
    _, h = ae.encode(x)
    _, hp = ae.encode(x[perm])
    torch.testing.assert_close(hp, h[perm], rtol=0, atol=1e-12)


def test_encoder_rejects_wrong_length():
    with pytest.raises(ShapeMismatch):
        GRUAutoencoder(16).encode(torch.randn(2, 15))


def test_clusterer_losses_by_ablation():
    torch.manual_seed(2)
    x = torch.randn(3, 4, 12)
    adj = np.zeros((4, 4))
    for use_rfl, use_gcl in [(True, True), (True, False), (False, True)]:
        c = ChannelClusterer(12, adj, [2], l1=6, l2=3, use_rfl=use_rfl, use_gcl=use_gcl)
        c.set_centers(2, np.random.default_rng(0).normal(size=(2, 3)))
        out = c.losses(x, 2)
        assert (out["rec"].item() > 0) == use_rfl
        assert (out["ds"].item() != 0) == use_gcl


def test_cluster_export_validates_schema():
    import jsonschema

    payload = cluster_export([0, 1, 0], 0.6)
    jsonschema.validate(payload, CLUSTER_JSON_SCHEMA)
    assert payload["n"] == 2
    assert payload["mask"] == [[1, 0, 1], [0, 1, 0], [1, 0, 1]]
