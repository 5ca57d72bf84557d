"""Circuit intermediate representation and its canonical JSON form."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

TWO_PI = 2.0 * math.pi


class GateKind(str, Enum):
    ECR = "ecr"
    SX = "sx"
    X = "x"
    ID = "id"
    RZ = "rz"
    RX = "rx"
    RZZ = "rzz"

    @property
    def arity(self) -> int:
        return 2 if self in (GateKind.ECR, GateKind.RZZ) else 1

    @property
    def parameterized(self) -> bool:
        return self in (GateKind.RZ, GateKind.RX, GateKind.RZZ)

    @property
    def native(self) -> bool:
        return self in NATIVE_KINDS


# Order matters: it fixes the gate-count feature layout.
NATIVE_KINDS = (GateKind.ECR, GateKind.SX, GateKind.X, GateKind.ID, GateKind.RZ)
LOGICAL_KINDS = (GateKind.RX, GateKind.RZZ)
BASES = ("X", "Y", "Z")


class CircuitError(ValueError):
    """Raised when a circuit or gate violates its structural invariants."""


def normalize_angle(theta: float) -> float:
    """Reduce an angle into [0, 2*pi)."""
    if not math.isfinite(theta):
        raise CircuitError(f"non-finite angle {theta!r}")
    out = math.fmod(theta, TWO_PI)
    if out < 0.0:
        out += TWO_PI
    if out >= TWO_PI:  # fmod of values just below a multiple can round up
        out = 0.0
    return out


@dataclass(frozen=True)
class GateInstance:
    id: int
    kind: GateKind
    qubits: tuple[int, ...]
    angle: Optional[float] = None
    time_index: int = 0

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(self.qubits) != kind.arity:
            raise CircuitError(f"{kind.value} expects {kind.arity} qubit(s), got {len(self.qubits)}")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"repeated qubit in {kind.value}{list(self.qubits)}")
        if kind.parameterized:
            if self.angle is None or not math.isfinite(self.angle):
                raise CircuitError(f"{kind.value} needs a finite angle")
        elif self.angle is not None:
            raise CircuitError(f"{kind.value} takes no angle")


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[GateInstance, ...] = ()
    measured: tuple[tuple[int, str], ...] = ()
    stage: str = field(default="")

    def __post_init__(self):
        if self.n_qubits < 1:
            raise CircuitError("n_qubits must be positive")
        gates = tuple(self.gates)
        measured = tuple((int(q), str(b)) for q, b in self.measured)
        object.__setattr__(self, "gates", gates)
        object.__setattr__(self, "measured", measured)
        ids = set()
        last_t = None
        for g in gates:
            if any(q < 0 or q >= self.n_qubits for q in g.qubits):
                raise CircuitError(f"gate {g.id} touches a qubit outside 0..{self.n_qubits - 1}")
            if g.id in ids:
                raise CircuitError(f"duplicate gate id {g.id}")
            ids.add(g.id)
            if last_t is not None and g.time_index <= last_t:
                raise CircuitError("time_index must be strictly increasing")
            last_t = g.time_index
        seen = set()
        for q, b in measured:
            if b not in BASES:
                raise CircuitError(f"unknown measurement basis {b!r}")
            if q < 0 or q >= self.n_qubits:
                raise CircuitError(f"measured qubit {q} out of range")
            if q in seen:
                raise CircuitError(f"qubit {q} measured twice")
            seen.add(q)
        logical = any(not g.kind.native for g in gates)
        stage = self.stage or ("logical" if logical else "native")
        if stage not in ("logical", "native"):
            raise CircuitError(f"unknown stage {stage!r}")
        if stage == "native" and logical:
            raise CircuitError("native circuit contains logical gates")
        object.__setattr__(self, "stage", stage)

    @property
    def measured_qubits(self) -> list[int]:
        return [q for q, _ in self.measured]

    def basis_of(self, qubit: int) -> str:
        for q, b in self.measured:
            if q == qubit:
                return b
        raise KeyError(qubit)

    def with_gates(self, gates: Iterable[GateInstance], stage: Optional[str] = None) -> "Circuit":
        return replace(self, gates=tuple(gates), stage=stage or "")


def make_gates(specs: Sequence[tuple]) -> list[GateInstance]:
    """Build a contiguous gate list from ``(kind, qubits[, angle])`` tuples."""
    out = []
    for i, spec in enumerate(specs):
        kind, qubits = spec[0], spec[1]
        angle = spec[2] if len(spec) > 2 else None
        if angle is not None:
            angle = normalize_angle(angle)
        out.append(GateInstance(i, GateKind(kind), tuple(qubits), angle, i))
    return out


def renumber(gates: Iterable[GateInstance]) -> list[GateInstance]:
    """Reassign ids and time indices to 0..L-1 in list order."""
    return [replace(g, id=i, time_index=i) for i, g in enumerate(gates)]


def to_dict(c: Circuit) -> dict:
    gates = []
    for g in c.gates:
        d = {"id": g.id, "kind": g.kind.value, "qubits": list(g.qubits)}
        if g.angle is not None:
            d["angle"] = float(g.angle)
        gates.append(d)
    return {
        "version": 1,
        "n_qubits": c.n_qubits,
        "stage": c.stage,
        "gates": gates,
        "measured": [{"qubit": q, "basis": b} for q, b in c.measured],
    }


def from_dict(d: dict) -> Circuit:
    if d.get("version") != 1:
        raise CircuitError(f"unsupported circuit version {d.get('version')!r}")
    gates = [
        GateInstance(int(g["id"]), GateKind(g["kind"]), tuple(g["qubits"]), g.get("angle"), t)
        for t, g in enumerate(d["gates"])
    ]
    measured = tuple((int(m["qubit"]), m["basis"]) for m in d["measured"])
    return Circuit(int(d["n_qubits"]), tuple(gates), measured, d["stage"])


def to_json(c: Circuit) -> str:
    return json.dumps(to_dict(c))


def from_json(text: str) -> Circuit:
    return from_dict(json.loads(text))
