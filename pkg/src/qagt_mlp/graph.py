"""Gate-instance DAG, per-measurement causal lightcones, and locality metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import Circuit, CircuitError, GateInstance


@dataclass(frozen=True)
class CircuitGraph:
    """Directed acyclic graph with one node per gate plus one terminal per measured qubit.

    Nodes ``0..n_gates-1`` are gates in circuit order; terminal nodes follow in
    measured order.  ``edges`` are (u, v) pairs in time order.
    """

    n_qubits: int
    gates: tuple[GateInstance, ...]
    measured: tuple[tuple[int, str], ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def n_gates(self) -> int:
        return len(self.gates)

    @property
    def n_nodes(self) -> int:
        return len(self.gates) + len(self.measured)

    def terminal(self, qubit: int) -> int:
        for i, (q, _) in enumerate(self.measured):
            if q == qubit:
                return self.n_gates + i
        raise KeyError(f"qubit {qubit} is not measured")

    def is_terminal(self, node: int) -> bool:
        return node >= self.n_gates

    def predecessors(self) -> list[list[int]]:
        preds = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            preds[v].append(u)
        return preds

    def adjacency(self) -> np.ndarray:
        """Undirected 0/1 adjacency matrix without self loops."""
        a = np.zeros((self.n_nodes, self.n_nodes))
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1.0
        return a


def build_graph(c: Circuit) -> CircuitGraph:
    if c.stage != "native":
        raise CircuitError("build_graph expects a native circuit")
    if not c.measured:
        raise CircuitError("circuit has no measured qubits")
    last: dict[int, int] = {}
    edges: list[tuple[int, int]] = []
    seen = set()
    for node, g in enumerate(c.gates):
        for q in g.qubits:
            if q in last and (last[q], node) not in seen:
                seen.add((last[q], node))
                edges.append((last[q], node))
            last[q] = node
    base = len(c.gates)
    for i, (q, _) in enumerate(c.measured):
        if q in last:
            edges.append((last[q], base + i))
    return CircuitGraph(c.n_qubits, c.gates, c.measured, tuple(edges))


@dataclass(frozen=True)
class LightconeMask:
    qubit: int
    nodes: frozenset[int]

    def sorted_nodes(self) -> list[int]:
        return sorted(self.nodes)


def lightcone(g: CircuitGraph, qubit: int) -> LightconeMask:
    """Every node from which the qubit's measurement terminal is reachable, terminal included."""
    try:
        root = g.terminal(qubit)
    except KeyError:
        raise ValueError(f"qubit {qubit} is not measured") from None
    preds = g.predecessors()
    seen = {root}
    stack = [root]
    while stack:
        v = stack.pop()
        for u in preds[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return LightconeMask(qubit, frozenset(seen))


def all_lightcones(g: CircuitGraph) -> list[LightconeMask]:
    return [lightcone(g, q) for q, _ in g.measured]


@dataclass
class LocalityReport:
    qubits: list[int]
    coverage: list[float]
    internal_frac: list[float]
    boundary: list[float]
    jaccard: np.ndarray
    n_nodes: int
    n_measured: int

    def mean_pairwise_jaccard(self) -> float:
        m = self.n_measured
        if m < 2:
            return 1.0
        iu = np.triu_indices(m, k=1)
        return float(np.mean(self.jaccard[iu]))


def locality_metrics(g: CircuitGraph, masks: Sequence[LightconeMask]) -> LocalityReport:
    n = g.n_nodes
    for m in masks:
        if any(v < 0 or v >= n for v in m.nodes):
            raise ValueError(f"mask for qubit {m.qubit} references unknown nodes")
    # undirected, deduplicated edge set
    edges = {(min(u, v), max(u, v)) for u, v in g.edges}
    cov, internal, boundary = [], [], []
    for m in masks:
        s = m.nodes
        inside = crossing = 0
        for u, v in edges:
            a, b = u in s, v in s
            if a and b:
                inside += 1
            elif a or b:
                crossing += 1
        touching = inside + crossing
        cov.append(len(s) / n)
        internal.append(inside / touching if touching else 0.0)
        boundary.append(crossing / touching if touching else 0.0)
    k = len(masks)
    jac = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            a, b = masks[i].nodes, masks[j].nodes
            union = len(a | b)
            jac[i, j] = jac[j, i] = len(a & b) / union if union else 1.0
    return LocalityReport([m.qubit for m in masks], cov, internal, boundary, jac, n, k)
