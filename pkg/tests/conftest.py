import os

# Single-threaded BLAS keeps floating-point reductions reproducible run to run.
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import math
from pathlib import Path

import numpy as np
import pytest

from qagt_mlp.circuit import Circuit, make_gates

CORPUS = Path(__file__).parent / "corpus"


def random_native_circuit(rng, n_qubits, n_gates, measured=None):
    specs = []
    kinds = ["ecr", "sx", "x", "id", "rz"]
    for _ in range(n_gates):
        kind = kinds[rng.integers(len(kinds))] if n_qubits > 1 else kinds[1 + rng.integers(4)]
        if kind == "ecr":
            a, b = rng.choice(n_qubits, size=2, replace=False)
            specs.append((kind, (int(a), int(b))))
        elif kind == "rz":
            specs.append((kind, (int(rng.integers(n_qubits)),), float(rng.uniform(0, 2 * math.pi))))
        else:
            specs.append((kind, (int(rng.integers(n_qubits)),)))
    if measured is None:
        k = int(rng.integers(1, n_qubits + 1))
        measured = sorted(rng.choice(n_qubits, size=k, replace=False).tolist())
    return Circuit(n_qubits, tuple(make_gates(specs)), tuple((q, "Z") for q in measured))


def random_logical_circuit(rng, n_qubits, depth):
    specs = []
    for _ in range(depth):
        choice = rng.integers(3 if n_qubits > 1 else 2)
        if choice == 0:
            specs.append(("rx", (int(rng.integers(n_qubits)),), float(rng.uniform(-4, 4))))
        elif choice == 1:
            specs.append(("rz", (int(rng.integers(n_qubits)),), float(rng.uniform(-4, 4))))
        else:
            a, b = rng.choice(n_qubits, size=2, replace=False)
            specs.append(("rzz", (int(a), int(b)), float(rng.uniform(-4, 4))))
    return Circuit(n_qubits, tuple(make_gates(specs)), ((0, "Z"),))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_lines(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
