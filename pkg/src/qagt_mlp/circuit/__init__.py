from .ir import (
    BASES,
    LOGICAL_KINDS,
    NATIVE_KINDS,
    Circuit,
    CircuitError,
    GateInstance,
    GateKind,
    from_dict,
    from_json,
    make_gates,
    normalize_angle,
    renumber,
    to_dict,
    to_json,
)
from .qasm import QasmSyntaxError, parse_angle, parse_circuit, serialize_circuit
from .tfim import TfimConfig, generate_tfim
from .transpile import transpile
from .unitary import MAX_UNITARY_QUBITS, circuit_unitary, gate_matrix, phase_distance

__all__ = [
    "BASES", "LOGICAL_KINDS", "NATIVE_KINDS", "MAX_UNITARY_QUBITS",
    "Circuit", "CircuitError", "GateInstance", "GateKind", "QasmSyntaxError", "TfimConfig",
    "circuit_unitary", "from_dict", "from_json", "gate_matrix", "generate_tfim", "make_gates",
    "normalize_angle", "parse_angle", "parse_circuit", "phase_distance", "renumber",
    "serialize_circuit", "to_dict", "to_json", "transpile",
]
