"""Lowering of logical rx/rzz gates into the ecr/sx/x/id/rz native set."""
from __future__ import annotations

import math

from .ir import Circuit, CircuitError, GateInstance, GateKind, normalize_angle, renumber

HALF_PI = 0.5 * math.pi


def _g(kind, qubits, angle=None):
    if angle is not None:
        angle = normalize_angle(angle)
    return GateInstance(0, kind, tuple(qubits), angle, 0)


def lower_rx(theta: float, q: int) -> list[GateInstance]:
    # rx(t) = rz(pi/2) . sx . rz(t + pi) . sx . rz(pi/2), up to global phase
    return [
        _g(GateKind.RZ, (q,), HALF_PI),
        _g(GateKind.SX, (q,)),
        _g(GateKind.RZ, (q,), theta + math.pi),
        _g(GateKind.SX, (q,)),
        _g(GateKind.RZ, (q,), HALF_PI),
    ]


def lower_cx(control: int, target: int) -> list[GateInstance]:
    return [
        _g(GateKind.X, (control,)),
        _g(GateKind.RZ, (control,), -HALF_PI),
        _g(GateKind.SX, (target,)),
        _g(GateKind.ECR, (control, target)),
    ]


def lower_rzz(theta: float, a: int, b: int) -> list[GateInstance]:
    return lower_cx(a, b) + [_g(GateKind.RZ, (b,), theta)] + lower_cx(a, b)


def transpile(c: Circuit) -> Circuit:
    if c.stage == "native":
        return c
    out: list[GateInstance] = []
    for g in c.gates:
        if g.kind.native:
            out.append(g)
        elif g.kind is GateKind.RX:
            out.extend(lower_rx(g.angle, g.qubits[0]))
        elif g.kind is GateKind.RZZ:
            out.extend(lower_rzz(g.angle, *g.qubits))
        else:
            raise CircuitError(f"cannot lower gate kind {g.kind.value}")
    return Circuit(c.n_qubits, tuple(renumber(out)), c.measured, "native")
