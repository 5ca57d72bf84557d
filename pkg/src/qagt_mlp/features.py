"""Circuit-level descriptor vectors: gate counts, angle histogram, noisy value, basis and qubit flags."""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .circuit import NATIVE_KINDS, Circuit, GateKind

N_BINS = 80
BIN_WIDTH = 0.025 * math.pi
BASIS_ORDER = ("X", "Y", "Z")
FIXED_WIDTH = len(NATIVE_KINDS) + N_BINS + 1 + len(BASIS_ORDER)  # 89


def descriptor_length(n_measured: int) -> int:
    return FIXED_WIDTH + n_measured


def gate_count_features(c: Circuit) -> np.ndarray:
    counts = np.zeros(len(NATIVE_KINDS))
    index = {k: i for i, k in enumerate(NATIVE_KINDS)}
    for g in c.gates:
        if g.kind not in index:
            raise ValueError(f"gate counts are defined over native gates, found {g.kind.value}")
        counts[index[g.kind]] += 1
    total = counts.sum()
    return counts / total if total else counts


def angle_bin(theta: float) -> int:
    if not math.isfinite(theta):
        raise ValueError(f"non-finite angle {theta!r}")
    return min(N_BINS - 1, max(0, int(math.floor(theta / BIN_WIDTH))))


def angle_histogram(c: Circuit) -> np.ndarray:
    hist = np.zeros(N_BINS)
    for g in c.gates:
        if g.kind is GateKind.RZ:
            hist[angle_bin(g.angle)] += 1
    total = hist.sum()
    return hist / total if total else hist


def assemble_descriptor(
    c: Circuit,
    qubit: int,
    noisy: Mapping[int, float],
    measured_list: Sequence[int],
) -> np.ndarray:
    measured_list = list(measured_list)
    if qubit not in measured_list:
        raise ValueError(f"qubit {qubit} is not in the measured list")
    if qubit not in noisy:
        raise KeyError(f"missing noisy value for qubit {qubit}")
    basis = np.zeros(len(BASIS_ORDER))
    basis[BASIS_ORDER.index(c.basis_of(qubit))] = 1.0
    onehot = np.zeros(len(measured_list))
    onehot[measured_list.index(qubit)] = 1.0
    return np.concatenate([
        gate_count_features(c),
        angle_histogram(c),
        [float(noisy[qubit])],
        basis,
        onehot,
    ])


def sample_descriptors(sample) -> dict[int, np.ndarray]:
    """Descriptor for every measured qubit of a dataset sample."""
    c = sample.circuit
    qs = c.measured_qubits
    counts, hist = gate_count_features(c), angle_histogram(c)
    out = {}
    for i, q in enumerate(qs):
        basis = np.zeros(3)
        basis[BASIS_ORDER.index(c.basis_of(q))] = 1.0
        onehot = np.zeros(len(qs))
        onehot[i] = 1.0
        out[q] = np.concatenate([counts, hist, [float(sample.noisy[q])], basis, onehot])
    return out
