"""Gate matrices and the dense unitary oracle (little-endian qubit order)."""
from __future__ import annotations

import numpy as np

from .ir import Circuit, GateInstance, GateKind

MAX_UNITARY_QUBITS = 10

_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
# Index convention for two-qubit matrices: row = 2*b + a for gate qubits (a, b),
# i.e. the first listed qubit is the least significant.
_ECR = (np.kron(_I, _X) - np.kron(_X, _Y)) / np.sqrt(2.0)

PAULI = {"X": _X, "Y": _Y, "Z": _Z}


def rz_matrix(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rx_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def rzz_matrix(theta: float) -> np.ndarray:
    a, b = np.exp(-0.5j * theta), np.exp(0.5j * theta)
    return np.diag([a, b, b, a])


def gate_matrix(g: GateInstance) -> np.ndarray:
    k = g.kind
    if k is GateKind.ECR:
        return _ECR.copy()
    if k is GateKind.SX:
        return _SX.copy()
    if k is GateKind.X:
        return _X.copy()
    if k is GateKind.ID:
        return _I.copy()
    if k is GateKind.RZ:
        return rz_matrix(g.angle)
    if k is GateKind.RX:
        return rx_matrix(g.angle)
    if k is GateKind.RZZ:
        return rzz_matrix(g.angle)
    raise ValueError(f"no matrix for {k}")


def apply_to_axes(tensor: np.ndarray, mat: np.ndarray, qubits, n_qubits: int, offset: int = 0) -> np.ndarray:
    """Left-multiply the qubit axes of a state tensor by a k-qubit matrix.

    ``tensor`` has axes ordered most-significant qubit first, starting at
    ``offset``.  Qubit q lives on axis ``offset + n_qubits - 1 - q``.
    """
    k = len(qubits)
    # gate index bits: qubits[0] least significant -> reversed for tensor axes
    m = mat.reshape((2,) * (2 * k))
    axes = [offset + n_qubits - 1 - q for q in reversed(qubits)]
    out = np.tensordot(m, tensor, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def circuit_unitary(c: Circuit) -> np.ndarray:
    n = c.n_qubits
    if n > MAX_UNITARY_QUBITS:
        raise ValueError(f"circuit_unitary supports at most {MAX_UNITARY_QUBITS} qubits, got {n}")
    dim = 2**n
    u = np.eye(dim, dtype=complex).reshape((2,) * n + (dim,))
    for g in c.gates:
        u = apply_to_axes(u, gate_matrix(g), g.qubits, n)
    return u.reshape(dim, dim)


def phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max entrywise |a - e^{i phi} b| with phi chosen optimally (least squares)."""
    inner = np.vdot(b, a)
    phase = inner / abs(inner) if abs(inner) > 0 else 1.0
    return float(np.max(np.abs(a - phase * b)))
