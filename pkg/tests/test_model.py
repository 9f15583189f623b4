import time
from types import SimpleNamespace

import numpy as np
import pytest

from obfugraph import tensor as T
from obfugraph.graph import CodeGraph
from obfugraph.model import (ClusterGT, ClusterGTConfig, guard_cluster_adjacency,
                             mean_aggregator, prepare)
from obfugraph.partition import Partition, adjacency, partition
from obfugraph.tensor import Adam, Tensor
from obfugraph.train import sample_loss

from gradcheck import check, directional_check, model_gradcheck
from toys import tiny_config, toy_graph


def make_partition(assign, m=None) -> Partition:
    assign = np.asarray(assign, dtype=np.int64)
    m = m or int(assign.max()) + 1
    return Partition(m, assign, np.bincount(assign, minlength=m), 0, 0)


def default_model(kernel="tensor_product", seed=0, **kw) -> ClusterGT:
    return ClusterGT(ClusterGTConfig(kernel=kernel, dropout=0.0, **kw), seed=seed)


# -- brute-force references ---------------------------------------------------------

def kappa(x, y, tau):
    return np.exp(float(np.dot(x, y)) * tau)


def brute_force_attention(H, assign, A, model: ClusterGT, layer: int = 0) -> np.ndarray:
    """Term-by-term evaluation of the dual-granularity attention, loops only."""
    cfg = model.cfg
    n = H.shape[0]
    m = int(max(assign)) + 1
    size = [sum(1 for a in assign if a == j) for j in range(m)]
    C = [[(1.0 / size[j] if assign[t] == j else 0.0) for j in range(m)] for t in range(n)]
    Ap = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            Ap[i, j] = sum(C[s][i] * A[s][t] * C[t][j] for s in range(n) for t in range(n))
    Ap = np.maximum(Ap, 0)
    top = Ap.max() if Ap.max() > 0 else 1.0
    for i in range(m):
        Ap[i, i] += top
    M = [sum(C[s][j] * H[s] for s in range(n)) for j in range(m)]
    P = {k: model.params[f"layer{layer}.{k}"].data for k in ("W_q", "W_k", "W_v", "Wc_q", "Wc_k")}
    if cfg.kernel == "linear_combination":
        alpha = 1.0 / (1.0 + np.exp(-model.params[f"layer{layer}.theta_mix"].data[0, 0]))
    tau = cfg.temperature
    out = np.zeros((m, cfg.d))
    for h in range(cfg.heads):
        sl = slice(h * cfg.d_head, (h + 1) * cfg.d_head)
        for i in range(m):
            Qi = M[i] @ P["Wc_q"][:, sl]
            qi = M[i] @ P["W_q"][:, sl]
            num = np.zeros(cfg.d_head)
            den = 0.0
            for j in range(m):
                Kj = M[j] @ P["Wc_k"][:, sl]
                for t in range(n):
                    if C[t][j] == 0.0:
                        continue
                    kt = H[t] @ P["W_k"][:, sl]
                    vt = H[t] @ P["W_v"][:, sl]
                    if cfg.kernel == "tensor_product":
                        kb = kappa(Qi, Kj, tau) * kappa(qi, kt, tau)
                    else:
                        kb = alpha * kappa(Qi, Kj, tau) + (1 - alpha) * kappa(qi, kt, tau)
                    w = Ap[i, j] * C[t][j] * kb
                    num += w * vt
                    den += w
            out[i, sl] = num / den
    W_o = model.params[f"layer{layer}.W_o"].data
    b_o = model.params[f"layer{layer}.b_o"].data
    return out @ W_o + b_o


def six_node_case():
    g = CodeGraph(kind_ids=np.array([3, 7, 7, 11, 2, 5]),
                  value_buckets=np.array([10, 200, 200, 4000, 77, 10]),
                  lines=np.array([1, 1, 2, 3, 3, 4]), columns=np.array([0, 4, 4, 2, 9, 0]),
                  edges=np.array([[0, 1, 0], [0, 2, 0], [2, 3, 0], [3, 4, 0], [4, 5, 0],
                                  [1, 4, 1], [2, 5, 2]]))
    return g, make_partition([0, 0, 0, 1, 1, 1])


@pytest.mark.parametrize("kernel", ["tensor_product", "linear_combination"])
def test_six_node_two_cluster_matches_brute_force(kernel):
    g, part = six_node_case()
    model = default_model(kernel, seed=3)
    if kernel == "linear_combination":
        model.params["layer0.theta_mix"].data[:] = 0.7
    gi = prepare(g, part)
    H = model.message_pass(model.embed(gi), gi, 0)
    O, _ = model.attention(H, gi, 0)
    A = adjacency(g.n, g.undirected_pairs(), sparse=False)
    ref = brute_force_attention(H.data, part.assign.tolist(), A.tolist(), model)
    assert np.max(np.abs(O.data - ref)) < 1e-9


@pytest.mark.parametrize("kernel", ["tensor_product", "linear_combination"])
def test_attention_weights_are_normalized(kernel):
    g = toy_graph(60, 1, buckets=16384)
    gi = prepare(g, partition(g, 8, 0))
    model = default_model(kernel, seed=1)
    H = model.message_pass(model.embed(gi), gi, 0)
    _, weights = model.attention(H, gi, 0, keep_weights=True)
    assert len(weights) == model.cfg.heads
    for P in weights:
        assert P.shape == (gi.m, gi.n)
        assert (P >= 0).all()
        assert np.max(np.abs(P.sum(axis=1) - 1.0)) < 1e-9


def _single_cluster_reference(H, model, alpha=None):
    cfg = model.cfg
    p = {k: model.params[f"layer0.{k}"].data
         for k in ("W_q", "W_k", "W_v", "Wc_q", "Wc_k", "W_o", "b_o")}
    mean = H.mean(axis=0)
    heads = []
    for h in range(cfg.heads):
        sl = slice(h * cfg.d_head, (h + 1) * cfg.d_head)
        s = (H @ p["W_k"][:, sl]) @ (mean @ p["W_q"][:, sl]) * cfg.temperature
        if alpha is None:
            w = np.exp(s - s.max())
        else:
            # the cluster kernel is a constant added to every node's weight
            kc = np.exp((mean @ p["Wc_q"][:, sl]) @ (mean @ p["Wc_k"][:, sl]) * cfg.temperature)
            w = alpha * kc + (1 - alpha) * np.exp(s)
        w /= w.sum()
        heads.append(w @ (H @ p["W_v"][:, sl]))
    return np.concatenate(heads) @ p["W_o"] + p["b_o"][0]


def test_single_cluster_is_softmax_attention():
    g = toy_graph(25, 2, buckets=16384)
    gi = prepare(g, make_partition(np.zeros(25, dtype=int)))
    model = default_model("tensor_product", seed=2)
    H = model.message_pass(model.embed(gi), gi, 0)
    O, _ = model.attention(H, gi, 0)
    assert np.max(np.abs(O.data[0] - _single_cluster_reference(H.data, model))) < 1e-9


def test_single_cluster_linear_kernel_closed_form():
    g = toy_graph(25, 2, buckets=16384)
    gi = prepare(g, make_partition(np.zeros(25, dtype=int)))
    model = default_model("linear_combination", seed=2)
    model.params["layer0.theta_mix"].data[:] = -0.4
    H = model.message_pass(model.embed(gi), gi, 0)
    O, _ = model.attention(H, gi, 0)
    alpha = 1 / (1 + np.exp(0.4))
    assert np.max(np.abs(O.data[0] - _single_cluster_reference(H.data, model, alpha))) < 1e-9


def cluster_level_reference(H, gi, model, layer=0):
    """Attention over cluster value means with only the cluster kernel."""
    cfg = model.cfg
    p = {k: model.params[f"layer{layer}.{k}"].data for k in ("Wc_q", "Wc_k", "W_v", "W_o", "b_o")}
    M = gi.C.T @ H
    Vbar = gi.C.T @ (H @ p["W_v"])
    out = []
    for h in range(cfg.heads):
        sl = slice(h * cfg.d_head, (h + 1) * cfg.d_head)
        S = np.exp((M @ p["Wc_q"][:, sl]) @ (M @ p["Wc_k"][:, sl]).T * cfg.temperature) * gi.Ap
        out.append((S / S.sum(axis=1, keepdims=True)) @ Vbar[:, sl])
    return np.concatenate(out, axis=1) @ p["W_o"] + p["b_o"]


def test_linear_kernel_alpha_one_limit_is_cluster_attention():
    g = toy_graph(40, 4, buckets=16384)
    gi = prepare(g, partition(g, 4, 0))
    model = default_model("linear_combination", seed=4)
    model.params["layer0.theta_mix"].data[:] = 60.0  # sigmoid rounds to exactly 1
    H = model.message_pass(model.embed(gi), gi, 0)
    O, _ = model.attention(H, gi, 0)
    assert np.max(np.abs(O.data - cluster_level_reference(H.data, gi, model))) < 1e-9


def test_tensor_kernel_with_unit_node_kernel_is_cluster_attention():
    g = toy_graph(40, 5, buckets=16384)
    gi = prepare(g, partition(g, 4, 0))
    model = default_model("tensor_product", seed=5)
    model.params["layer0.W_q"].data[:] = 0.0  # q = 0 makes the node kernel 1
    H = model.message_pass(model.embed(gi), gi, 0)
    O, _ = model.attention(H, gi, 0)
    assert np.max(np.abs(O.data - cluster_level_reference(H.data, gi, model))) < 1e-9


@pytest.mark.parametrize("kernel", ["tensor_product", "linear_combination"])
def test_identical_values_give_that_value(kernel):
    g = toy_graph(20, 6, buckets=16384)
    gi = prepare(g, partition(g, 4, 0))
    model = default_model(kernel, seed=6)
    rng = np.random.default_rng(0)
    H = rng.normal(size=(20, 128))
    H[:, 0] = 1.0
    w = rng.normal(size=128)
    W_v = np.zeros((128, 128))
    W_v[0] = w
    model.params["layer0.W_v"].data = W_v
    O, _ = model.attention(Tensor(H), gi, 0)
    expect = w @ model.params["layer0.W_o"].data + model.params["layer0.b_o"].data[0]
    assert np.max(np.abs(O.data - expect)) < 1e-12


def test_mixing_weights_sum_to_one_after_training():
    g = toy_graph(30, 7, buckets=32, label=1)
    gi = prepare(g, partition(g, 4, 0), d_pos=2)
    model = ClusterGT(tiny_config(kernel="linear_combination"), seed=7)
    opt = Adam(model.params, lr=0.05)
    thetas = []
    for _ in range(100):
        opt.zero_grad()
        with T.Tape() as tape:
            loss = sample_loss(model.forward(gi), 1)
        tape.backward(loss)
        opt.step()
        for layer in range(model.cfg.layers):
            alpha, beta = model.mix(layer)
            a, b = float(alpha.data[0, 0]), float(beta.data[0, 0])
            assert a >= 0 and b >= 0 and abs(a + b - 1.0) <= 1e-12
        thetas.append(float(model.params["layer0.theta_mix"].data[0, 0]))
    assert thetas[0] != thetas[-1]  # the mixing logit actually trains


# -- message passing, cluster queries, embedding ----------------------------------------

def test_message_pass_empty_edges():
    model = default_model()
    H = np.random.default_rng(0).normal(size=(5, 128))
    A = adjacency(5, np.zeros((0, 2), dtype=int), sparse=True)
    out = model.message_pass(Tensor(H), SimpleNamespace(a_hat=mean_aggregator(A)), 0)
    W = model.params["layer0.W_mp"].data
    assert np.allclose(out.data, np.maximum(H @ W, 0) + H, rtol=0, atol=1e-12)


def test_message_pass_two_nodes_hand_algebra():
    model = default_model()
    model.params["layer0.W_mp"].data = np.eye(128)
    H = np.random.default_rng(1).normal(size=(2, 128))
    A = adjacency(2, np.array([[0, 1]]), sparse=True)
    out = model.message_pass(Tensor(H), SimpleNamespace(a_hat=mean_aggregator(A)), 0,
                             activation=False)
    avg = H.mean(axis=0)
    assert np.allclose(out.data, avg + H, rtol=0, atol=1e-12)


def test_message_pass_permutation_equivariance():
    model = default_model()
    rng = np.random.default_rng(2)
    g = toy_graph(15, 8)
    A = adjacency(15, g.undirected_pairs(), sparse=False)
    H = rng.normal(size=(15, 128))
    base = model.message_pass(Tensor(H), SimpleNamespace(a_hat=mean_aggregator(A)), 0).data
    for _ in range(10):
        P = np.eye(15)[rng.permutation(15)]
        out = model.message_pass(Tensor(P @ H),
                                 SimpleNamespace(a_hat=mean_aggregator(P @ A @ P.T)), 0).data
        assert np.allclose(out, P @ base, rtol=0, atol=1e-12)


def test_cluster_queries_keys():
    model = default_model()
    rng = np.random.default_rng(3)
    g = toy_graph(12, 9)
    H = Tensor(rng.normal(size=(12, 128)))
    # singleton clusters with identity projections return the node rows
    gi = prepare(g, make_partition(np.arange(12)))
    for k in ("layer0.Wc_q", "layer0.Wc_k"):
        model.params[k].data = np.eye(128)
    Q, K = model.cluster_queries_keys(H, gi, 0)
    assert np.allclose(Q.data, H.data, rtol=0, atol=1e-12)
    # one cluster: a single key row equal to the projected mean
    model = default_model(seed=1)
    gi = prepare(g, make_partition(np.zeros(12, dtype=int)))
    _, K = model.cluster_queries_keys(H, gi, 0)
    assert K.shape == (1, 128)
    assert np.allclose(K.data[0], H.data.mean(axis=0) @ model.params["layer0.Wc_k"].data,
                       rtol=0, atol=1e-12)
    # explicit C^T H oracle on a real partition
    part = partition(g, 3, 0)
    gi = prepare(g, part)
    Q, K = model.cluster_queries_keys(H, gi, 0)
    C = np.zeros((12, part.m))
    for t, c in enumerate(part.assign):
        C[t, c] = 1.0 / part.sizes[c]
    assert np.max(np.abs(Q.data - (C.T @ H.data) @ model.params["layer0.Wc_q"].data)) < 1e-12
    assert np.max(np.abs(K.data - (C.T @ H.data) @ model.params["layer0.Wc_k"].data)) < 1e-12


def test_embedding_rows_and_width():
    g = CodeGraph(kind_ids=np.array([4, 4, 9]), value_buckets=np.array([17, 17, 3]),
                  lines=np.array([2, 2, 5]), columns=np.array([7, 7, 1]),
                  edges=np.zeros((0, 3), dtype=np.int64))
    gi = prepare(g, make_partition([0, 0, 0]))
    X = default_model().embed(gi)
    assert X.shape == (3, 128)
    assert np.array_equal(X.data[0], X.data[1])
    assert not np.array_equal(X.data[0], X.data[2])


def test_embedding_rejects_unknown_kind():
    g = toy_graph(5, 10)
    g.kind_ids[2] = 10_000
    with pytest.raises(IndexError):
        default_model().embed(prepare(g, make_partition([0] * 5)))


def test_type_table_gradient_only_on_looked_up_rows():
    g = toy_graph(5, 11, buckets=16384)
    gi = prepare(g, make_partition([0] * 5))
    model = default_model()
    table = model.params["type_table"]
    w = np.random.default_rng(4).normal(size=(5, 128))
    loss = lambda: T.sum(model.embed(gi) * w)  # noqa: E731
    assert check(loss, [table]) < 1e-5
    used = set(gi.kind_ids.tolist())
    for row in range(table.shape[0]):
        assert table.grad[row].any() == (row in used)


# -- whole model --------------------------------------------------------------------------

def permuted(g: CodeGraph, part: Partition, perm, relabel):
    n = g.n
    inv = np.empty(n, dtype=int)
    inv[perm] = np.arange(n)  # new position of old node i is perm[i]
    take = lambda a: np.asarray(a)[inv]  # noqa: E731
    edges = g.edges.copy()
    edges[:, 0] = perm[g.edges[:, 0]]
    edges[:, 1] = perm[g.edges[:, 1]]
    h = CodeGraph(take(g.kind_ids), take(g.value_buckets), take(g.lines), take(g.columns), edges)
    return h, make_partition(relabel[take(part.assign)], part.m)


@pytest.mark.parametrize("kernel", ["tensor_product", "linear_combination"])
def test_graph_embedding_permutation_invariant(kernel):
    rng = np.random.default_rng(12)
    g = toy_graph(35, 12, buckets=16384)
    part = partition(g, 4, 0)
    model = default_model(kernel, seed=8)
    base = model.encode(prepare(g, part)).data
    for _ in range(5):
        h, q = permuted(g, part, rng.permutation(g.n), rng.permutation(part.m))
        assert np.max(np.abs(model.encode(prepare(h, q)).data - base)) < 1e-9


def test_one_layer_one_cluster_identical_values():
    cfg = ClusterGTConfig(layers=1, dropout=0.0)
    model = ClusterGT(cfg, seed=9)
    g = toy_graph(10, 13, buckets=16384)
    gi = prepare(g, make_partition([0] * 10))
    # force every value vector to v by zeroing W_v and routing through the bias
    model.params["layer0.W_v"].data[:] = 0.0
    h = model.encode(gi).data
    assert np.allclose(h, model.params["layer0.b_o"].data, rtol=0, atol=1e-12)


def test_forward_is_deterministic():
    g = toy_graph(40, 14, buckets=16384)
    gi = prepare(g, partition(g, 8, 0))
    a = ClusterGT(ClusterGTConfig(), seed=0)
    b = ClusterGT(ClusterGTConfig(), seed=0)
    assert np.array_equal(a.forward(gi).data, b.forward(gi).data)
    r1 = a.forward(gi, train=True, rng=np.random.default_rng(5)).data
    r2 = a.forward(gi, train=True, rng=np.random.default_rng(5)).data
    assert np.array_equal(r1, r2)


def test_guard_adds_self_loops():
    Ap = guard_cluster_adjacency(np.array([[0.0, 0.2], [0.2, 0.0]]))
    assert np.allclose(Ap, [[0.2, 0.2], [0.2, 0.2]])
    assert np.array_equal(guard_cluster_adjacency(np.zeros((2, 2))), np.eye(2))


def test_checkpoint_round_trip(tmp_path):
    model = ClusterGT(tiny_config(kernel="linear_combination"), seed=3)
    path = tmp_path / "model.json"
    model.save(path, {"epoch": 4})
    loaded, extra = ClusterGT.load(path)
    assert extra["epoch"] == 4 and loaded.cfg == model.cfg
    for k, p in model.params.items():
        assert np.array_equal(loaded.params[k].data, p.data)
    g = toy_graph(12, 15, buckets=32)
    gi = prepare(g, partition(g, 4, 0), d_pos=2)
    assert np.array_equal(loaded.forward(gi).data, model.forward(gi).data)


@pytest.mark.parametrize("kernel", ["tensor_product", "linear_combination"])
def test_full_model_gradients(kernel):
    start = time.perf_counter()
    # every scalar of a narrow three-layer model
    g = toy_graph(30, 16, buckets=32)
    gi = prepare(g, partition(g, 4, 0), d_pos=2)
    tiny = ClusterGT(tiny_config(kernel=kernel), seed=1)
    for layer in range(3):
        tiny.params[f"layer{layer}.theta_mix"].data[:] = 0.3
    errs = model_gradcheck(tiny, gi, 1)
    assert max(errs.values()) < 1e-4, errs
    # default width: sampled entries of every tensor plus one all-parameter direction
    g = toy_graph(30, 17, buckets=16384)
    gi = prepare(g, partition(g, 4, 0))
    full = default_model(kernel, seed=2)
    errs = model_gradcheck(full, gi, 0, per_param=6)
    assert max(errs.values()) < 1e-4, errs
    assert directional_check(full, gi, 0) < 1e-4
    assert time.perf_counter() - start < 60
