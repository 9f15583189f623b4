"""Cluster-wise graph transformer over code graphs.

Each layer does one mean-aggregation message pass with a residual, then
node-to-cluster attention: every cluster i queries all nodes t, weighted by
the cluster adjacency Ap[i, j] and membership C[t, j].  Cluster outputs are
added back onto their member nodes so the next layer works at node level.
The graph embedding is the mean of the last layer's cluster outputs.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .frontend import NODE_KINDS
from .graph import D_POS, D_TYPE, D_VALUE, VALUE_BUCKETS, CodeGraph, position_table
from .partition import Partition, adjacency, assignment_matrix
from .tensor import ShapeError, Tensor

KERNELS = ("tensor_product", "linear_combination")
NORM_FLOOR = 1e-30
# Most hash buckets are never trained, so their rows should start near zero
# instead of injecting noise into unseen literals.
VALUE_INIT_STD = 0.02


@dataclass(frozen=True)
class ClusterGTConfig:
    layers: int = 3
    d: int = 128
    heads: int = 8
    dropout: float = 0.1
    m: int = 8
    kernel: str = "tensor_product"
    d_type: int = D_TYPE
    d_value: int = D_VALUE
    d_pos: int = D_POS
    value_buckets: int = VALUE_BUCKETS
    mlp: tuple[int, ...] = (128, 64, 1)

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError(f"d={self.d} is not divisible by heads={self.heads}")
        if self.d_type + self.d_value + self.d_pos != self.d:
            raise ValueError("embedding widths must add up to d")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.mlp[0] != self.d or self.mlp[-1] not in (1, 2):
            raise ValueError(f"mlp widths {self.mlp} must start at d and end in 1 or 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        object.__setattr__(self, "mlp", tuple(self.mlp))

    @property
    def d_head(self) -> int:
        return self.d // self.heads

    @property
    def temperature(self) -> float:
        return 1.0 / math.sqrt(self.d_head)

    def to_json(self) -> dict:
        out = asdict(self)
        out["mlp"] = list(self.mlp)
        return out


@dataclass
class GraphInput:
    """Constants derived from one (graph, partition) pair."""

    kind_ids: np.ndarray
    buckets: np.ndarray
    pos: np.ndarray            # n x d_pos
    a_hat: sp.csr_matrix       # D^-1 (A + I)
    C: np.ndarray              # n x m, 1/|cluster| at membership
    member: sp.csr_matrix      # n x m, 0/1 membership
    Ap: np.ndarray             # m x m, guarded
    label: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.kind_ids)

    @property
    def m(self) -> int:
        return self.C.shape[1]


def guard_cluster_adjacency(Ap: np.ndarray) -> np.ndarray:
    """Clip to nonnegative and add max(Ap) (or 1 when Ap is all zero) on the
    diagonal so every cluster attends at least to itself."""
    Ap = np.maximum(np.asarray(Ap, dtype=np.float64), 0.0)
    top = Ap.max() if Ap.size else 0.0
    return Ap + np.eye(len(Ap)) * (top if top > 0 else 1.0)


def mean_aggregator(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A) + sp.identity(A.shape[0], format="csr")
    deg = np.asarray(A.sum(axis=1)).ravel()
    return sp.diags(1.0 / deg) @ A


def prepare(graph: CodeGraph, part: Partition, d_pos: int = D_POS,
            dtype=np.float64, value_buckets: int | None = None) -> GraphInput:
    """Dense and sparse model inputs for one graph.  ``value_buckets`` folds the
    stored hash buckets into a smaller table (modulo)."""
    n = graph.n
    if len(part.assign) != n:
        raise ShapeError(f"partition covers {len(part.assign)} nodes, graph has {n}")
    A = adjacency(n, graph.undirected_pairs(), sparse=True)
    C = assignment_matrix(part)
    member = sp.csr_matrix((np.ones(n), (np.arange(n), part.assign)), shape=(n, part.m))
    Ap = guard_cluster_adjacency(C.T @ (A @ C))
    buckets = np.asarray(graph.value_buckets, dtype=np.int64)
    if value_buckets is not None:
        buckets = buckets % value_buckets
    return GraphInput(
        kind_ids=np.asarray(graph.kind_ids, dtype=np.int64),
        buckets=buckets,
        pos=position_table(graph.lines, graph.columns, d_pos).astype(dtype),
        a_hat=mean_aggregator(A).astype(dtype),
        C=C.astype(dtype), member=member.astype(dtype), Ap=Ap.astype(dtype),
        label=graph.label)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


LAYER_WEIGHTS = ("W_mp", "W_q", "W_k", "W_v", "Wc_q", "Wc_k", "W_o")


def init_params(cfg: ClusterGTConfig, seed: int = 0, dtype=np.float64) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    raw: dict[str, np.ndarray] = {
        "type_table": rng.normal(0.0, 0.5, (len(NODE_KINDS), cfg.d_type)),
        "value_table": rng.normal(0.0, VALUE_INIT_STD, (cfg.value_buckets, cfg.d_value)),
    }
    for l in range(cfg.layers):
        for w in LAYER_WEIGHTS:
            raw[f"layer{l}.{w}"] = _glorot(rng, cfg.d, cfg.d)
        raw[f"layer{l}.b_o"] = np.zeros((1, cfg.d))
        raw[f"layer{l}.theta_mix"] = np.zeros((1, 1))
    for i, (a, b) in enumerate(zip(cfg.mlp, cfg.mlp[1:])):
        raw[f"mlp.W{i}"] = _glorot(rng, a, b)
        raw[f"mlp.b{i}"] = np.zeros((1, b))
    return {k: Tensor(v.astype(dtype), requires_grad=True, name=k) for k, v in raw.items()}


class ClusterGT:
    def __init__(self, cfg: ClusterGTConfig | None = None, seed: int = 0,
                 params: dict[str, Tensor] | None = None, dtype=np.float64):
        self.cfg = cfg or ClusterGTConfig()
        self.dtype = dtype
        self.params = params if params is not None else init_params(self.cfg, seed, dtype)

    def p(self, name: str) -> Tensor:
        return self.params[name]

    # -- pieces ------------------------------------------------------------------

    def embed(self, g: GraphInput) -> Tensor:
        kinds = self.p("type_table").shape[0]
        if g.n and (g.kind_ids.min() < 0 or g.kind_ids.max() >= kinds):
            raise IndexError(f"node kind id out of range 0..{kinds - 1}")
        if g.n and (g.buckets.min() < 0 or g.buckets.max() >= self.cfg.value_buckets):
            raise IndexError("value bucket out of range")
        return T.concat([T.row_gather(self.p("type_table"), g.kind_ids),
                         T.row_gather(self.p("value_table"), g.buckets),
                         Tensor(g.pos)])

    def message_pass(self, H: Tensor, g: GraphInput, layer: int, train: bool = False,
                     rng: np.random.Generator | None = None,
                     activation: bool = True) -> Tensor:
        if H.shape[0] != g.a_hat.shape[0]:
            raise ShapeError(f"message_pass: H {H.shape} vs adjacency {g.a_hat.shape}")
        Z = T.spmm(g.a_hat, H) @ self.p(f"layer{layer}.W_mp")
        if activation:
            Z = T.relu(Z)
        return H + T.dropout(Z, self.cfg.dropout, train, rng)

    def cluster_means(self, H: Tensor, g: GraphInput) -> Tensor:
        if H.shape[0] != g.C.shape[0]:
            raise ShapeError(f"cluster_means: H {H.shape} vs C {g.C.shape}")
        return T.matmul(g.C.T, H)

    def cluster_queries_keys(self, H: Tensor, g: GraphInput, layer: int) -> tuple[Tensor, Tensor]:
        M = self.cluster_means(H, g)
        return M @ self.p(f"layer{layer}.Wc_q"), M @ self.p(f"layer{layer}.Wc_k")

    def mix(self, layer: int) -> tuple[Tensor, Tensor]:
        alpha = T.sigmoid(self.p(f"layer{layer}.theta_mix"))
        return alpha, 1.0 - alpha

    def attention(self, H: Tensor, g: GraphInput, layer: int, train: bool = False,
                  rng: np.random.Generator | None = None,
                  keep_weights: bool = False) -> tuple[Tensor, list[np.ndarray]]:
        """Node-to-cluster attention.  Returns (m x d output, per-head
        normalized weights when ``keep_weights``)."""
        cfg = self.cfg
        pre = f"layer{layer}."
        M = self.cluster_means(H, g)
        Qc, Kc = M @ self.p(pre + "Wc_q"), M @ self.p(pre + "Wc_k")
        qn = M @ self.p(pre + "W_q")
        kn, vn = H @ self.p(pre + "W_k"), H @ self.p(pre + "W_v")
        Ct = g.C.T
        ApCt = g.Ap @ Ct
        if cfg.kernel == "linear_combination":
            alpha, beta = self.mix(layer)
        heads, weights = [], []
        tau = cfg.temperature
        for h in range(cfg.heads):
            a, b = h * cfg.d_head, (h + 1) * cfg.d_head
            SC = T.matmul(T.cols(Qc, a, b), T.transpose(T.cols(Kc, a, b))) * tau
            SN = T.matmul(T.cols(qn, a, b), T.transpose(T.cols(kn, a, b))) * tau
            # row shifts are constants: every row's weights are rescaled uniformly
            sC = SC.data.max(axis=1, keepdims=True)
            sN = SN.data.max(axis=1, keepdims=True)
            if cfg.kernel == "tensor_product":
                kC, kN = T.exp(SC - sC), T.exp(SN - sN)
                W = T.matmul(kC * g.Ap, Ct) * kN
            else:
                s = np.maximum(sC, sN)
                kC, kN = T.exp(SC - s), T.exp(SN - s)
                W = alpha * T.matmul(kC * g.Ap, Ct) + beta * (kN * ApCt)
            P = T.row_normalize(W, floor=NORM_FLOOR)
            if keep_weights:
                weights.append(P.data.copy())
            P = T.dropout(P, cfg.dropout, train, rng)
            heads.append(T.matmul(P, T.cols(vn, a, b)))
        O = T.concat(heads) @ self.p(pre + "W_o") + self.p(pre + "b_o")
        if not np.all(np.isfinite(O.data)):
            raise FloatingPointError(
                f"non-finite attention output in layer {layer} (n={g.n}, m={g.m}, "
                f"max|H|={np.abs(H.data).max():.3g})")
        return O, weights

    # -- full passes ---------------------------------------------------------------

    def encode(self, g: GraphInput, train: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        """Graph embedding, shape (1, d)."""
        H = self.embed(g)
        O = None
        for layer in range(self.cfg.layers):
            H = self.message_pass(H, g, layer, train, rng)
            O, _ = self.attention(H, g, layer, train, rng)
            if layer + 1 < self.cfg.layers:
                H = H + T.spmm(g.member, O)
        return T.mean(O, axis=0, keepdims=True)

    def head(self, h: Tensor) -> Tensor:
        n_layers = len(self.cfg.mlp) - 1
        for i in range(n_layers):
            h = h @ self.p(f"mlp.W{i}") + self.p(f"mlp.b{i}")
            if i + 1 < n_layers:
                h = T.relu(h)
        return h

    def forward(self, g: GraphInput, train: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """Class scores: a (1, 1) logit, or (1, 2) logits for the softmax head."""
        return self.head(self.encode(g, train, rng))

    def predict_proba(self, g: GraphInput) -> float:
        z = self.forward(g).data.ravel()
        if len(z) == 1:
            return float(T.sigmoid(Tensor(z)).data[0])
        e = np.exp(z - z.max())
        return float(e[1] / e.sum())

    # -- persistence -----------------------------------------------------------------

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        T.save_params(self.params, path, {"config": self.cfg.to_json(), **(extra or {})})

    @classmethod
    def load(cls, path: str | Path) -> tuple["ClusterGT", dict]:
        arrays, extra = T.load_params(path)
        cfg_doc = dict(extra.get("config", {}))
        if "mlp" in cfg_doc:
            cfg_doc["mlp"] = tuple(cfg_doc["mlp"])
        cfg = ClusterGTConfig(**cfg_doc)
        params = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
        missing = set(init_params_names(cfg)) ^ set(params)
        if missing:
            raise ValueError(f"checkpoint parameters do not match config: {sorted(missing)}")
        return cls(cfg, params=params), extra


def init_params_names(cfg: ClusterGTConfig) -> list[str]:
    names = ["type_table", "value_table"]
    for l in range(cfg.layers):
        names += [f"layer{l}.{w}" for w in LAYER_WEIGHTS]
        names += [f"layer{l}.b_o", f"layer{l}.theta_mix"]
    for i in range(len(cfg.mlp) - 1):
        names += [f"mlp.W{i}", f"mlp.b{i}"]
    return names
