import math

import numpy as np
import pytest

from conftest import CORPUS, random_logical_circuit
from qagt_mlp.circuit import (
    Circuit,
    CircuitError,
    GateKind,
    QasmSyntaxError,
    TfimConfig,
    circuit_unitary,
    from_json,
    generate_tfim,
    make_gates,
    normalize_angle,
    parse_angle,
    parse_circuit,
    phase_distance,
    serialize_circuit,
    to_json,
    transpile,
)
from qagt_mlp.circuit.transpile import lower_cx
from qagt_mlp.circuit.unitary import rzz_matrix

X = np.array([[0, 1], [1, 0]])


def test_parse_empty_body():
    c = parse_circuit("OPENQASM 2.0;\nqreg q[3];\n")
    assert c.n_qubits == 3 and c.gates == () and c.measured == ()


def test_parse_rz_and_measure():
    c = parse_circuit("qreg q[1];\nrz(pi/4) q[0]; measure q[0];")
    assert len(c.gates) == 1
    g = c.gates[0]
    assert g.kind is GateKind.RZ and g.angle == pytest.approx(math.pi / 4, abs=1e-15)
    assert c.measured == ((0, "Z"),)
    assert c.stage == "native"


def test_parse_unknown_gate():
    with pytest.raises(QasmSyntaxError, match="unknown gate"):
        parse_circuit("qreg q[2];\ncx q[0],q[1];")


def test_parse_errors_carry_position():
    with pytest.raises(QasmSyntaxError) as err:
        parse_circuit("qreg q[2];\n\n   x q[5];")
    assert err.value.line == 3 and err.value.col == 4
    assert "out of range" in str(err.value)


@pytest.mark.parametrize("src", [
    "qreg q[1]; rz(pi/) q[0];",
    "qreg q[1]; rz(2pi) q[0];",
    "qreg q[1]; rz(foo) q[0];",
    "qreg q[1]; rz q[0];",
    "qreg q[1]; x(0.1) q[0];",
    "qreg q[1]; x q[0]",
    "qreg q[2]; ecr q[0];",
    "qreg q[2]; ecr q[1],q[1];",
    "qreg q[1]; qreg r[1];",
    "x q[0];",
])
def test_parse_rejects(src):
    with pytest.raises(QasmSyntaxError):
        parse_circuit(src)


@pytest.mark.parametrize("expr,value", [
    ("0.5", 0.5), ("pi", math.pi), ("pi/2", math.pi / 2), ("3*pi/4", 3 * math.pi / 4),
    ("-pi/2", -math.pi / 2), ("2*pi", 2 * math.pi), ("1e-3", 1e-3),
])
def test_angle_forms(expr, value):
    assert parse_angle(expr) == pytest.approx(value, rel=1e-15)


def test_angles_normalized_on_parse():
    c = parse_circuit("qreg q[1]; rz(-pi/2) q[0]; rz(5*pi/2) q[0];")
    assert c.gates[0].angle == pytest.approx(1.5 * math.pi)
    assert c.gates[1].angle == pytest.approx(0.5 * math.pi)
    assert all(0 <= g.angle < 2 * math.pi for g in c.gates)


def test_normalize_angle_range():
    for t in [0.0, -1e-18, 2 * math.pi, -2 * math.pi, 1e6, -7.3]:
        a = normalize_angle(t)
        assert 0.0 <= a < 2 * math.pi


def test_logical_stage_detected():
    c = parse_circuit((CORPUS / "tfim_2q.qasm").read_text())
    assert c.stage == "logical"
    assert [g.kind.value for g in c.gates] == ["rzz", "rx", "rx"]


def test_native_stage_rejects_logical_gates():
    with pytest.raises(CircuitError):
        Circuit(2, tuple(make_gates([("rx", (0,), 0.1)])), (), "native")


@pytest.mark.parametrize("path", sorted(CORPUS.glob("*.qasm")), ids=lambda p: p.name)
def test_round_trip_corpus(path):
    c = parse_circuit(path.read_text())
    again = parse_circuit(serialize_circuit(c))
    assert again == c
    assert from_json(to_json(c)) == c


def test_json_field_order():
    c = parse_circuit("qreg q[1]; rz(pi) q[0]; measure q[0];")
    text = to_json(c)
    assert text.index('"version"') < text.index('"n_qubits"') < text.index('"stage"') \
        < text.index('"gates"') < text.index('"measured"')


def test_tfim_small():
    c = generate_tfim(TfimConfig(2, 1, J=1.0, h=0.5, dt=0.1))
    assert [(g.kind.value, g.qubits) for g in c.gates] == [("rzz", (0, 1)), ("rx", (0,)), ("rx", (1,))]
    assert c.gates[0].angle == pytest.approx(0.2)
    assert c.gates[1].angle == pytest.approx(0.1)
    assert c.measured == ((0, "Z"), (1, "Z"))
    assert c.stage == "logical"


@pytest.mark.parametrize("n,steps", [(2, 1), (5, 4), (6, 10), (3, 7)])
def test_tfim_gate_count(n, steps):
    c = generate_tfim(TfimConfig(n, steps))
    assert len(c.gates) == steps * (2 * n - 1)


def test_tfim_rejects_zero_steps():
    with pytest.raises(ValueError):
        TfimConfig(3, 0)


def test_tfim_deterministic():
    cfg = TfimConfig(4, 3, 0.7, 0.3, 0.05)
    assert generate_tfim(cfg, 1) == generate_tfim(cfg, 2)
    assert generate_tfim(cfg, 1, jitter=0.1) == generate_tfim(cfg, 1, jitter=0.1)
    assert generate_tfim(cfg, 1, jitter=0.1) != generate_tfim(cfg, 2, jitter=0.1)


def test_unitary_basics():
    assert np.allclose(circuit_unitary(Circuit(1)), np.eye(2))
    x = Circuit(1, tuple(make_gates([("x", (0,))])))
    assert np.allclose(circuit_unitary(x), X)
    sx2 = Circuit(1, tuple(make_gates([("sx", (0,)), ("sx", (0,))])))
    assert phase_distance(circuit_unitary(sx2), X) < 1e-12


def test_unitary_little_endian():
    # x on qubit 1 of 2 flips the most significant index bit: |00> -> |10> (index 2)
    u = circuit_unitary(Circuit(2, tuple(make_gates([("x", (1,))]))))
    assert u[2, 0] == 1


def test_unitary_too_many_qubits():
    with pytest.raises(ValueError):
        circuit_unitary(Circuit(11))


def test_lower_cx_matches_cnot():
    # control 0, target 1 in little-endian order
    cx = np.eye(4)[[0, 3, 2, 1]]
    c = Circuit(2, tuple(make_gates([(g.kind, g.qubits, g.angle) for g in lower_cx(0, 1)])))
    assert phase_distance(circuit_unitary(c), cx) < 1e-12
    assert sum(g.kind is GateKind.ECR for g in c.gates) == 1


def _transpiled_distance(c):
    native = transpile(c)
    assert native.stage == "native"
    assert all(g.kind.native for g in native.gates)
    assert [g.time_index for g in native.gates] == list(range(len(native.gates)))
    return phase_distance(circuit_unitary(native), circuit_unitary(c))


def test_transpile_rx_zero_is_identity():
    c = Circuit(1, tuple(make_gates([("rx", (0,), 0.0)])))
    native = transpile(c)
    assert [g.kind.value for g in native.gates] == ["rz", "sx", "rz", "sx", "rz"]
    assert phase_distance(circuit_unitary(native), np.eye(2)) < 1e-10


def test_transpile_rx_pi_is_x():
    c = Circuit(1, tuple(make_gates([("rx", (0,), math.pi)])))
    assert phase_distance(circuit_unitary(transpile(c)), X) < 1e-10


@pytest.mark.parametrize("theta", [0.3, 1.7])
def test_transpile_rzz(theta):
    c = Circuit(2, tuple(make_gates([("rzz", (0, 1), theta)])))
    assert phase_distance(circuit_unitary(transpile(c)), rzz_matrix(theta)) < 1e-10


def test_transpile_native_passthrough():
    c = parse_circuit((CORPUS / "native_3q.qasm").read_text())
    assert transpile(c) is c


def test_transpile_soundness_random(rng):
    worst = 0.0
    for _ in range(100):
        c = random_logical_circuit(rng, int(rng.integers(1, 4)), int(rng.integers(1, 21)))
        worst = max(worst, _transpiled_distance(c))
    assert worst < 1e-9


def test_unitarity_of_generated_circuits():
    for n, steps in [(2, 3), (3, 2)]:
        for c in (generate_tfim(TfimConfig(n, steps, 0.8, 0.6, 0.2)),):
            for circ in (c, transpile(c)):
                u = circuit_unitary(circ)
                assert np.max(np.abs(u @ u.conj().T - np.eye(2**n))) < 1e-10
