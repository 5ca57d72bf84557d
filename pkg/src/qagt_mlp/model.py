"""Dual-path graph attention network with an MLP head, and its ablation variants.

Each circuit graph is embedded once; a *local* path attends only within the
lightcone of the measured qubit and a *global* path attends over all nodes.
Both are mean-pooled, concatenated with the circuit descriptor, and mapped to
a mitigated expectation value in [-1, 1].
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .circuit import NATIVE_KINDS, GateKind
from .features import descriptor_length, sample_descriptors
from .graph import CircuitGraph, LightconeMask, all_lightcones, build_graph

VARIANTS = ("Full", "GCNBackbone", "NoGlobal", "NoLightcone")
NODE_FEATURES = 10


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 3
    d_ff: int = 128
    mlp_hidden: tuple[int, ...] = (128, 64)
    variant: str = "Full"
    max_nodes: int = 2000
    n_measured: int = 6

    def __post_init__(self):
        object.__setattr__(self, "mlp_hidden", tuple(int(h) for h in self.mlp_hidden))
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.n_layers < 1 or self.n_measured < 1:
            raise ValueError("n_layers and n_measured must be positive")

    @property
    def paths(self) -> tuple[str, ...]:
        return ("local",) if self.variant == "NoGlobal" else ("local", "global")

    @property
    def head_input(self) -> int:
        return len(self.paths) * self.d_model + descriptor_length(self.n_measured)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        return d


# ---------------------------------------------------------------- inputs

def node_features(g: CircuitGraph) -> np.ndarray:
    """Rows: gate-kind one-hot (5), terminal flag, sin/cos angle, time index, measured-wire flag."""
    if g.n_nodes == 0:
        raise ValueError("empty graph")
    kinds = {k: i for i, k in enumerate(NATIVE_KINDS)}
    measured = {q for q, _ in g.measured}
    x = np.zeros((g.n_nodes, NODE_FEATURES))
    L = g.n_gates
    for i, gate in enumerate(g.gates):
        x[i, kinds[gate.kind]] = 1.0
        theta = gate.angle if gate.kind is GateKind.RZ else 0.0
        x[i, 6] = math.sin(theta)
        x[i, 7] = math.cos(theta)
        x[i, 8] = i / (L - 1) if L > 1 else 0.0
        x[i, 9] = 1.0 if measured.intersection(gate.qubits) else 0.0
    for j in range(len(g.measured)):
        row = L + j
        x[row, 5] = 1.0
        x[row, 7] = 1.0
        x[row, 8] = 1.0
        x[row, 9] = 1.0
    return x


def normalized_adjacency(adj: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 for an undirected 0/1 adjacency matrix."""
    a = adj + np.eye(adj.shape[0])
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


@dataclass(frozen=True)
class SparseAdjacency:
    """Coordinate form of a normalized adjacency, cheap to cache per circuit."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    n: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def to_dense(self) -> np.ndarray:
        a = np.zeros(self.shape)
        np.add.at(a, (self.rows, self.cols), self.vals)
        return a


def normalized_edges(edges, n_nodes: int, rows=None) -> SparseAdjacency:
    """Sparse D^-1/2 (A + I) D^-1/2 over the subgraph induced by ``rows``."""
    e = np.asarray(edges, dtype=np.intp).reshape(-1, 2)
    if rows is None:
        n, u, v = n_nodes, e[:, 0], e[:, 1]
    else:
        local = np.full(n_nodes, -1, dtype=np.intp)
        n = len(rows)
        local[np.asarray(rows, dtype=np.intp)] = np.arange(n)
        u, v = local[e[:, 0]], local[e[:, 1]]
        keep = (u >= 0) & (v >= 0)
        u, v = u[keep], v[keep]
    loops = np.arange(n)
    r = np.concatenate([u, v, loops])
    c = np.concatenate([v, u, loops])
    inv = 1.0 / np.sqrt(np.bincount(r, minlength=n).astype(float))
    return SparseAdjacency(r, c, inv[r] * inv[c], n)


class GraphInputs:
    """Per-circuit tensors the network consumes, computed once and reused."""

    def __init__(self, graph: CircuitGraph, descriptors: np.ndarray,
                 masks: Optional[Sequence[LightconeMask]] = None):
        self.graph = graph
        self.features = node_features(graph)
        self.edges = np.asarray(graph.edges, dtype=np.intp).reshape(-1, 2)
        self.masks = list(masks) if masks is not None else all_lightcones(graph)
        self.qubits = [m.qubit for m in self.masks]
        self.cones = [np.array(m.sorted_nodes(), dtype=np.intp) for m in self.masks]
        self.descriptors = np.asarray(descriptors, dtype=float)
        if self.descriptors.shape[0] != len(self.masks):
            raise ValueError("need one descriptor row per measured qubit")
        self._norm_cache: dict = {}

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    def norm_adjacency(self, key, rows=None) -> SparseAdjacency:
        if key not in self._norm_cache:
            self._norm_cache[key] = normalized_edges(self.edges, self.n_nodes, rows)
        return self._norm_cache[key]

    @classmethod
    def from_sample(cls, sample) -> "GraphInputs":
        graph = build_graph(sample.circuit)
        desc = sample_descriptors(sample)
        rows = np.stack([desc[q] for q, _ in graph.measured])
        return cls(graph, rows)


# ---------------------------------------------------------------- parameters

def _block_shapes(cfg: ModelConfig) -> list[tuple[str, tuple]]:
    d, f = cfg.d_model, cfg.d_ff
    if cfg.variant == "GCNBackbone":
        mix = [("gcn.W", (d, d)), ("gcn.b", (d,))]
    else:
        mix = [(f"attn.{n}", s) for w in "qkvo" for n, s in ((f"W{w}", (d, d)), (f"b{w}", (d,)))]
    return mix + [
        ("ln1.g", (d,)), ("ln1.b", (d,)),
        ("ff.W1", (d, f)), ("ff.b1", (f,)), ("ff.W2", (f, d)), ("ff.b2", (d,)),
        ("ln2.g", (d,)), ("ln2.b", (d,)),
    ]


def param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple]]:
    shapes = [("embed.W", (NODE_FEATURES, cfg.d_model)), ("embed.b", (cfg.d_model,))]
    for layer in range(cfg.n_layers):
        for path in cfg.paths:
            shapes += [(f"layer{layer}.{path}.{n}", s) for n, s in _block_shapes(cfg)]
    widths = [cfg.head_input, *cfg.mlp_hidden, 1]
    for i in range(len(widths) - 1):
        shapes += [(f"head.{i}.W", (widths[i], widths[i + 1])), (f"head.{i}.b", (widths[i + 1],))]
    return shapes


def param_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count."""
    d, f = cfg.d_model, cfg.d_ff
    mix = d * d + d if cfg.variant == "GCNBackbone" else 4 * (d * d + d)
    block = mix + 2 * d + (d * f + f) + (f * d + d) + 2 * d
    head, prev = 0, cfg.head_input
    for w in (*cfg.mlp_hidden, 1):
        head += prev * w + w
        prev = w
    return NODE_FEATURES * d + d + cfg.n_layers * len(cfg.paths) * block + head


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Xavier-uniform weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg):
        leaf = name.rsplit(".", 1)[-1]
        if len(shape) == 2:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-limit, limit, size=shape)
        elif leaf == "g":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


# ---------------------------------------------------------------- layers

def gcn_layer(h, norm_adj, W, b=None) -> Tensor:
    """relu(A_hat h W + b); A_hat is a dense array or a SparseAdjacency."""
    h = h if isinstance(h, Tensor) else Tensor(h)
    if norm_adj.shape != (h.shape[0], h.shape[0]):
        raise ValueError(f"adjacency {norm_adj.shape} does not match {h.shape[0]} nodes")
    if isinstance(norm_adj, SparseAdjacency):
        agg = ad.sparse_matmul(norm_adj.rows, norm_adj.cols, norm_adj.vals, norm_adj.n, h)
    else:
        agg = ad.matmul(Tensor(norm_adj), h)
    z = ad.matmul(agg, W)
    if b is not None:
        z = z + b
    return ad.relu(z)


def attention(h: Tensor, p: dict, prefix: str, n_heads: int, mask=None) -> Tensor:
    n, d = h.shape
    dh = d // n_heads

    def heads(w):
        x = ad.matmul(h, p[f"{prefix}.attn.W{w}"]) + p[f"{prefix}.attn.b{w}"]
        return ad.transpose(ad.reshape(x, (n, n_heads, dh)), (1, 0, 2))

    q, k, v = heads("q"), heads("k"), heads("v")
    ctx = ad.attention_scores(q, k, v, None if mask is None else mask[None, :, :])
    ctx = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (n, d))
    return ad.matmul(ctx, p[f"{prefix}.attn.Wo"]) + p[f"{prefix}.attn.bo"]


def _block(h: Tensor, p: dict, prefix: str, cfg: ModelConfig, mask=None, norm_adj=None) -> Tensor:
    if cfg.variant == "GCNBackbone":
        mixed = gcn_layer(h, norm_adj, p[f"{prefix}.gcn.W"], p[f"{prefix}.gcn.b"])
    else:
        mixed = attention(h, p, prefix, cfg.n_heads, mask)
    h = ad.layer_norm(h + mixed, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    ff = ad.relu(ad.matmul(h, p[f"{prefix}.ff.W1"]) + p[f"{prefix}.ff.b1"])
    ff = ad.matmul(ff, p[f"{prefix}.ff.W2"]) + p[f"{prefix}.ff.b2"]
    return ad.layer_norm(h + ff, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])


def _path(h0: Tensor, p: dict, path: str, cfg: ModelConfig, inputs: GraphInputs,
          rows, dense_mask: bool) -> Tensor:
    """Run one path over a node subset and mean-pool it.

    ``rows`` None means every node.  With ``dense_mask`` the full node set is
    kept and excluded nodes are masked out of attention instead of dropped;
    both give the same pooled vector.
    """
    n = inputs.n_nodes
    if rows is None or not dense_mask:
        h = h0 if rows is None else ad.gather_rows(h0, rows)
        mask = None
        key = "all" if rows is None else ("rows", path, tuple(rows.tolist()))
        norm_adj = inputs.norm_adjacency(key, rows) if cfg.variant == "GCNBackbone" else None
        for layer in range(cfg.n_layers):
            h = _block(h, p, f"layer{layer}.{path}", cfg, mask, norm_adj)
        return ad.mean_pool_rows(h)
    member = np.zeros(n, dtype=bool)
    member[rows] = True
    mask = member[:, None] & member[None, :]
    norm_adj = None
    if cfg.variant == "GCNBackbone":
        adj = inputs.graph.adjacency() * mask
        norm_adj = normalized_adjacency(adj) * mask
    h = h0
    for layer in range(cfg.n_layers):
        h = _block(h, p, f"layer{layer}.{path}", cfg, mask, norm_adj)
    return ad.mean_pool_rows(h, rows)


def forward_circuit(p: dict, cfg: ModelConfig, inputs: GraphInputs, dense_mask: bool = False,
                    qubit_index: Optional[Sequence[int]] = None,
                    scaler: Optional[tuple[np.ndarray, np.ndarray]] = None) -> Tensor:
    """Predictions for the circuit's measured qubits, shape (M,).

    ``scaler`` is an optional (mean, scale) pair applied to descriptor rows.
    """
    if inputs.n_nodes > cfg.max_nodes:
        raise ValueError(f"graph has {inputs.n_nodes} nodes, above max_nodes={cfg.max_nodes}")
    if inputs.features.shape[1] != NODE_FEATURES:
        raise ValueError("node feature width mismatch")
    if inputs.descriptors.shape[1] != descriptor_length(cfg.n_measured):
        raise ValueError(
            f"descriptor width {inputs.descriptors.shape[1]} does not match "
            f"{descriptor_length(cfg.n_measured)} for n_measured={cfg.n_measured}")
    which = list(range(len(inputs.masks))) if qubit_index is None else list(qubit_index)
    h0 = ad.matmul(Tensor(inputs.features), p["embed.W"]) + p["embed.b"]
    local_rows = None if cfg.variant == "NoLightcone" else inputs.cones
    pooled_local = []
    shared_local = None
    for i in which:
        if local_rows is None:
            if shared_local is None:
                shared_local = _path(h0, p, "local", cfg, inputs, None, dense_mask)
            pooled_local.append(ad.reshape(shared_local, (1, cfg.d_model)))
        else:
            pooled = _path(h0, p, "local", cfg, inputs, local_rows[i], dense_mask)
            pooled_local.append(ad.reshape(pooled, (1, cfg.d_model)))
    parts = [ad.concat_rows(pooled_local)]
    if "global" in cfg.paths:
        g = ad.reshape(_path(h0, p, "global", cfg, inputs, None, dense_mask), (1, cfg.d_model))
        parts.append(ad.gather_rows(g, np.zeros(len(which), dtype=np.intp)))
    desc = inputs.descriptors[which]
    if scaler is not None:
        desc = (desc - scaler[0]) / scaler[1]
    parts.append(Tensor(desc))
    z = ad.concat_cols(parts)
    n_layers = len(cfg.mlp_hidden) + 1
    for i in range(n_layers):
        z = ad.matmul(z, p[f"head.{i}.W"]) + p[f"head.{i}.b"]
        if i < n_layers - 1:
            z = ad.relu(z)
    return ad.reshape(ad.tanh(z), (len(which),))


def forward(p: dict, cfg: ModelConfig, graph: CircuitGraph, masks: Sequence[LightconeMask],
            descriptor: np.ndarray, qubit: int, dense_mask: bool = False,
            scaler: Optional[tuple[np.ndarray, np.ndarray]] = None) -> Tensor:
    """Prediction for one measured qubit (scalar tensor)."""
    idx = [m.qubit for m in masks].index(qubit)
    rows = np.zeros((len(masks), len(descriptor)))
    rows[idx] = descriptor
    inputs = GraphInputs(graph, rows, masks)
    out = forward_circuit(p, cfg, inputs, dense_mask, qubit_index=[idx], scaler=scaler)
    return ad.reshape(out, ())
