from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ir import Circuit, make_gates


@dataclass(frozen=True)
class TfimConfig:
    n_qubits: int
    trotter_steps: int
    J: float = 1.0
    h: float = 1.0
    dt: float = 0.1

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        if self.trotter_steps < 1:
            raise ValueError("trotter_steps must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def generate_tfim(cfg: TfimConfig, seed: int = 0, jitter: float = 0.0) -> Circuit:
    """First-order Trotter circuit for the 1D transverse-field Ising chain.

    Each step applies rzz(2*J*dt) on every nearest-neighbour pair and then
    rx(2*h*dt) on every qubit; all qubits are measured in Z.  ``jitter`` adds
    uniform noise of that half-width to every angle, drawn from ``seed``.
    """
    rng = np.random.default_rng(seed)
    zz, x = 2.0 * cfg.J * cfg.dt, 2.0 * cfg.h * cfg.dt
    n = cfg.n_qubits
    specs = []
    for _ in range(cfg.trotter_steps):
        for i in range(n - 1):
            specs.append(("rzz", (i, i + 1), zz + (rng.uniform(-jitter, jitter) if jitter else 0.0)))
        for i in range(n):
            specs.append(("rx", (i,), x + (rng.uniform(-jitter, jitter) if jitter else 0.0)))
    return Circuit(n, tuple(make_gates(specs)), tuple((q, "Z") for q in range(n)), "logical")
