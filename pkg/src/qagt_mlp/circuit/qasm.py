"""Reader and writer for the OpenQASM 2 subset used by the dataset circuits.

Accepted statements::

    OPENQASM 2.0;
    include "qelib1.inc";
    qreg q[N];            // exactly one quantum register
    creg c[N];            // optional, ignored
    barrier q[0],q[1];    // ignored
    rz(<angle>) q[i];     // also ecr, sx, x, id, rx, rzz
    measure q[i];         // Z basis; `measure q[i] -> c[j];` is equivalent
    measure(X) q[i];      // X or Y basis extension

Angles are decimal literals, ``pi``, ``pi/k``, ``k*pi/m`` and ``k*pi``, with an
optional leading minus sign.
"""
from __future__ import annotations

import math
import re

from .ir import Circuit, CircuitError, GateInstance, GateKind, normalize_angle

_KNOWN = {k.value: k for k in GateKind}
_NUM = r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
_ANGLE_FORMS = [
    (re.compile(rf"^({_NUM})$"), lambda m: float(m.group(1))),
    (re.compile(r"^pi$"), lambda m: math.pi),
    (re.compile(rf"^pi\s*/\s*({_NUM})$"), lambda m: math.pi / float(m.group(1))),
    (re.compile(rf"^({_NUM})\s*\*\s*pi$"), lambda m: float(m.group(1)) * math.pi),
    (re.compile(rf"^({_NUM})\s*\*\s*pi\s*/\s*({_NUM})$"),
     lambda m: float(m.group(1)) * math.pi / float(m.group(2))),
]
_QARG = re.compile(r"^([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]$")


class QasmSyntaxError(CircuitError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


def parse_angle(expr: str) -> float:
    s = expr.strip()
    sign = 1.0
    if s.startswith("-"):
        sign, s = -1.0, s[1:].strip()
    elif s.startswith("+"):
        s = s[1:].strip()
    for pattern, fn in _ANGLE_FORMS:
        m = pattern.match(s)
        if m:
            value = sign * fn(m)
            if not math.isfinite(value):
                break
            return value
    raise ValueError(f"malformed angle expression {expr!r}")


def _statements(text: str):
    """Yield (statement, line, col) with comments stripped."""
    buf, start = [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("//", 1)[0]
        for col, ch in enumerate(line, 1):
            if ch == ";":
                stmt = "".join(buf).strip()
                yield stmt, start or (lineno, col)
                buf, start = [], None
            else:
                if start is None and not ch.isspace():
                    start = (lineno, col)
                buf.append(ch)
        buf.append(" ")
    rest = "".join(buf).strip()
    if rest:
        raise QasmSyntaxError(f"missing ';' after {rest[:30]!r}", *start)


def parse_circuit(text: str) -> Circuit:
    n_qubits = None
    reg = None
    gates: list[GateInstance] = []
    measured: list[tuple[int, str]] = []

    def qubit(arg, line, col):
        m = _QARG.match(arg.strip())
        if not m:
            raise QasmSyntaxError(f"bad qubit argument {arg.strip()!r}", line, col)
        if reg is None:
            raise QasmSyntaxError("qubit used before qreg declaration", line, col)
        if m.group(1) != reg:
            raise QasmSyntaxError(f"unknown register {m.group(1)!r}", line, col)
        idx = int(m.group(2))
        if idx >= n_qubits:
            raise QasmSyntaxError(f"qubit index {idx} out of range for {reg}[{n_qubits}]", line, col)
        return idx

    for stmt, (line, col) in _statements(text):
        if not stmt:
            continue
        head = re.match(r"^([A-Za-z_]\w*)", stmt)
        if head is None:
            raise QasmSyntaxError(f"unexpected token {stmt[:20]!r}", line, col)
        word = head.group(1)
        rest = stmt[head.end():].strip()
        if word == "OPENQASM":
            continue
        if word == "include":
            if not re.match(r'^"[^"]*"$', rest):
                raise QasmSyntaxError("include expects a quoted file name", line, col)
            continue
        if word == "qreg":
            m = _QARG.match(rest)
            if not m:
                raise QasmSyntaxError("malformed qreg declaration", line, col)
            if reg is not None:
                raise QasmSyntaxError("only one quantum register is supported", line, col)
            reg, n_qubits = m.group(1), int(m.group(2))
            if n_qubits < 1:
                raise QasmSyntaxError("register size must be positive", line, col)
            continue
        if word == "creg":
            if not _QARG.match(rest):
                raise QasmSyntaxError("malformed creg declaration", line, col)
            continue
        if word == "barrier":
            continue
        if word == "measure":
            basis = "Z"
            m = re.match(r"^\(\s*([XYZ])\s*\)\s*(.*)$", rest)
            if m:
                basis, rest = m.group(1), m.group(2)
            target = rest.split("->", 1)[0]
            measured.append((qubit(target, line, col), basis))
            continue
        if word not in _KNOWN:
            raise QasmSyntaxError(f"unknown gate {word!r}", line, col)
        kind = _KNOWN[word]
        angle = None
        if rest.startswith("("):
            close = rest.find(")")
            if close < 0:
                raise QasmSyntaxError("unclosed parameter list", line, col)
            try:
                angle = normalize_angle(parse_angle(rest[1:close]))
            except ValueError as exc:
                raise QasmSyntaxError(str(exc), line, col) from None
            rest = rest[close + 1:].strip()
        if kind.parameterized and angle is None:
            raise QasmSyntaxError(f"{word} requires an angle", line, col)
        if not kind.parameterized and angle is not None:
            raise QasmSyntaxError(f"{word} takes no angle", line, col)
        args = [a for a in rest.split(",")] if rest else []
        if len(args) != kind.arity:
            raise QasmSyntaxError(f"{word} expects {kind.arity} qubit argument(s)", line, col)
        qubits = tuple(qubit(a, line, col) for a in args)
        if len(set(qubits)) != len(qubits):
            raise QasmSyntaxError(f"{word} repeats a qubit", line, col)
        i = len(gates)
        gates.append(GateInstance(i, kind, qubits, angle, i))

    if reg is None:
        raise QasmSyntaxError("no qreg declaration", 1, 1)
    try:
        return Circuit(n_qubits, tuple(gates), tuple(measured))
    except CircuitError as exc:
        raise QasmSyntaxError(str(exc), 1, 1) from None


def serialize_circuit(c: Circuit, reg: str = "q") -> str:
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg {reg}[{c.n_qubits}];"]
    for g in c.gates:
        args = ",".join(f"{reg}[{q}]" for q in g.qubits)
        if g.angle is not None:
            lines.append(f"{g.kind.value}({g.angle!r}) {args};")
        else:
            lines.append(f"{g.kind.value} {args};")
    for q, b in c.measured:
        lines.append(f"measure {reg}[{q}];" if b == "Z" else f"measure({b}) {reg}[{q}];")
    return "\n".join(lines) + "\n"
