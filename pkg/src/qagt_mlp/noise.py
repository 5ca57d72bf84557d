"""Density-matrix simulation with depolarizing noise, ZNE, and dataset construction."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .circuit import Circuit, GateInstance, GateKind, TfimConfig, generate_tfim, transpile
from .circuit.ir import from_dict, renumber, to_dict
from .circuit.unitary import MAX_UNITARY_QUBITS, PAULI, apply_to_axes, gate_matrix

MAX_SIM_QUBITS = MAX_UNITARY_QUBITS


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    p1: float = 0.0
    p2: float = 0.0
    readout_flip: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 <= self.readout_flip <= 0.5:
            raise ValueError(f"readout_flip must lie in [0, 0.5], got {self.readout_flip}")


def _apply_rows(rho: np.ndarray, u: np.ndarray, qubits, n: int) -> np.ndarray:
    """Return U @ rho for a gate acting on ``qubits`` (rho as a 2^n x 2^n matrix)."""
    dim = rho.shape[0]
    if len(qubits) == 1:
        q = qubits[0]
        a, b = 2 ** (n - 1 - q), 2**q
        return np.matmul(u, rho.reshape(a, 2, b * dim)).reshape(dim, dim)
    t = rho.reshape((2,) * n + (dim,))
    return apply_to_axes(t, u, qubits, n).reshape(dim, dim)


def _conjugate(rho: np.ndarray, u: np.ndarray, qubits, n: int) -> np.ndarray:
    # U rho U^dagger == U (U rho)^dagger for Hermitian rho
    half = _apply_rows(rho, u, qubits, n)
    return _apply_rows(half.conj().T, u, qubits, n)


def _mix_qubit(rho: np.ndarray, q: int, n: int) -> np.ndarray:
    """Replace qubit q by the maximally mixed state (Tr_q rho tensor I/2)."""
    dim = rho.shape[0]
    a, b = 2 ** (n - 1 - q), 2**q
    t = rho.reshape(a, 2, b, a, 2, b)
    reduced = 0.5 * (t[:, 0, :, :, 0, :] + t[:, 1, :, :, 1, :])
    out = np.zeros_like(t)
    out[:, 0, :, :, 0, :] = reduced
    out[:, 1, :, :, 1, :] = reduced
    return out.reshape(dim, dim)


def _reduced_single(rho: np.ndarray, q: int, n: int) -> np.ndarray:
    a, b = 2 ** (n - 1 - q), 2**q
    t = rho.reshape(a, 2, b, a, 2, b)
    return np.einsum("xiyxjy->ij", t)


def simulate(
    c: Circuit,
    noise: NoiseModel = NoiseModel(),
    scale: float = 1.0,
    observables: Optional[Iterable[int]] = None,
    monitor: Optional[Callable[[np.ndarray], None]] = None,
) -> dict[int, float]:
    """Exact expectation values of each measured qubit's basis Pauli.

    Every gate is followed by a depolarizing channel on its support with
    probability ``scale * p1`` (one qubit) or ``scale * p2`` (two qubits).
    ``monitor`` receives the density matrix after each gate-plus-channel step.
    """
    if c.stage != "native":
        raise SimulationError("simulate expects a native circuit")
    n = c.n_qubits
    if n > MAX_SIM_QUBITS:
        raise SimulationError(f"at most {MAX_SIM_QUBITS} qubits can be simulated, got {n}")
    if scale < 1.0:
        raise SimulationError(f"noise scale must be >= 1, got {scale}")
    q1, q2 = min(1.0, scale * noise.p1), scale * noise.p2
    if q2 > 1.0:
        raise SimulationError(f"scaled two-qubit depolarizing probability {q2} exceeds 1")
    dim = 2**n
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    for g in c.gates:
        rho = _conjugate(rho, gate_matrix(g), g.qubits, n)
        p = q2 if len(g.qubits) == 2 else q1
        if p > 0.0:
            mixed = rho
            for q in g.qubits:
                mixed = _mix_qubit(mixed, q, n)
            rho = (1.0 - p) * rho + p * mixed
        if monitor is not None:
            monitor(rho)
    qubits = list(observables) if observables is not None else c.measured_qubits
    bases = dict(c.measured)
    damp = 1.0 - 2.0 * noise.readout_flip
    out = {}
    for q in qubits:
        red = _reduced_single(rho, q, n)
        val = float(np.real(np.trace(red @ PAULI[bases.get(q, "Z")])))
        out[q] = float(np.clip(damp * val, -1.0, 1.0))
    return out


def sample_shots(expectations: dict[int, float], shots: int, seed: int) -> dict[int, float]:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    out = {}
    for q in sorted(expectations):
        p_plus = min(1.0, max(0.0, 0.5 * (1.0 + expectations[q])))
        k = rng.binomial(shots, p_plus)
        out[q] = 2.0 * k / shots - 1.0
    return out


def _inverse(g: GateInstance) -> list[GateInstance]:
    k = g.kind
    if k in (GateKind.ECR, GateKind.X, GateKind.ID):
        return [g]
    if k is GateKind.RZ:
        return [GateInstance(0, k, g.qubits, (-g.angle) % (2 * math.pi), 0)]
    if k is GateKind.SX:
        # sx^dagger = Z sx Z up to phase; no single native gate exists
        pi = GateInstance(0, GateKind.RZ, g.qubits, math.pi, 0)
        return [pi, g, pi]
    raise SimulationError(f"cannot fold non-native gate {k.value}")


def fold_circuit(c: Circuit, factor: int) -> Circuit:
    """Digital folding G -> G (G^dagger G)^k for factor = 2k + 1."""
    if c.stage != "native":
        raise SimulationError("fold_circuit expects a native circuit")
    if factor < 1 or factor % 2 == 0:
        raise ValueError(f"folding factor must be an odd positive integer, got {factor}")
    if factor == 1:
        return c
    k = (factor - 1) // 2
    out = []
    for g in c.gates:
        out.append(g)
        inv = _inverse(g)
        for _ in range(k):
            out.extend(inv)
            out.append(g)
    return Circuit(c.n_qubits, tuple(renumber(out)), c.measured, "native")


def zne_extrapolate(points: Sequence[tuple[float, float]], method: str = "linear") -> float:
    if len(points) < 2:
        raise ValueError("zero-noise extrapolation needs at least two points")
    lam = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if len(set(lam.tolist())) != len(lam):
        raise ValueError("duplicate noise factors")
    if np.any(lam < 1.0):
        raise ValueError("noise factors must be >= 1")
    if method == "linear":
        lm, ym = lam.mean(), y.mean()
        slope = np.sum((lam - lm) * (y - ym)) / np.sum((lam - lm) ** 2)
        value = ym - slope * lm
    elif method == "richardson":
        value = 0.0
        for i in range(len(lam)):
            w = 1.0
            for j in range(len(lam)):
                if j != i:
                    w *= lam[j] / (lam[j] - lam[i])
            value += w * y[i]
    else:
        raise ValueError(f"unknown extrapolation method {method!r}")
    return float(min(1.0, max(-1.0, value)))


@dataclass
class Sample:
    circuit_id: int
    circuit: Circuit
    noisy: dict[int, float]
    label_zne: dict[int, float]
    label_exact: dict[int, float]
    trotter_steps: int
    descriptor: Optional[dict[int, list[float]]] = None

    def labels(self, source: str) -> dict[int, float]:
        if source == "exact":
            return self.label_exact
        if source == "zne":
            return self.label_zne
        raise ValueError(f"unknown label source {source!r}")


@dataclass
class DatasetConfig:
    n_qubits: int = 6
    circuits_total: int = 500
    trotter_step_range: tuple[int, int] = (1, 10)
    J_range: tuple[float, float] = (0.5, 1.0)
    h_range: tuple[float, float] = (0.2, 0.8)
    dt_range: tuple[float, float] = (0.05, 0.15)
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(0.001, 0.01, 0.0))
    zne_factors: tuple[float, ...] = (1.0, 2.0, 3.0)
    extrapolation: str = "linear"
    scaling: str = "analog"
    shots: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_SIM_QUBITS:
            raise ValueError(f"n_qubits must be in 1..{MAX_SIM_QUBITS}")
        if self.circuits_total < 1:
            raise ValueError("circuits_total must be >= 1")
        lo, hi = self.trotter_step_range
        if not 1 <= lo <= hi:
            raise ValueError("trotter_step_range must satisfy 1 <= lo <= hi")
        f = list(self.zne_factors)
        if len(f) < 2 or f[0] != 1.0 or f != sorted(f):
            raise ValueError("zne_factors must be sorted ascending and start at 1")
        if self.scaling not in ("analog", "digital"):
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.scaling == "digital" and any(x != int(x) or int(x) % 2 == 0 for x in f):
            raise ValueError("digital folding needs odd integer factors")
        if isinstance(self.noise, dict):
            self.noise = NoiseModel(**self.noise)


def _expectations(c: Circuit, cfg: DatasetConfig, factor: float, rng) -> dict[int, float]:
    if cfg.scaling == "digital":
        vals = simulate(fold_circuit(c, int(factor)), cfg.noise, 1.0)
    else:
        vals = simulate(c, cfg.noise, factor)
    if cfg.shots:
        vals = sample_shots(vals, cfg.shots, int(rng.integers(2**31)))
    return vals


def draw_circuit(cfg: DatasetConfig, circuit_id: int, rng=None) -> tuple[Circuit, int]:
    """The native circuit and Trotter step count of dataset entry ``circuit_id``."""
    if rng is None:
        rng = np.random.default_rng([cfg.seed, circuit_id])
    lo, hi = cfg.trotter_step_range
    steps = int(rng.integers(lo, hi + 1))
    tfim = TfimConfig(
        cfg.n_qubits, steps,
        J=float(rng.uniform(*cfg.J_range)),
        h=float(rng.uniform(*cfg.h_range)),
        dt=float(rng.uniform(*cfg.dt_range)),
    )
    return transpile(generate_tfim(tfim, seed=circuit_id)), steps


def make_sample(cfg: DatasetConfig, circuit_id: int) -> Sample:
    """Build one labelled sample; the RNG stream depends only on (seed, circuit_id)."""
    rng = np.random.default_rng([cfg.seed, circuit_id])
    native, steps = draw_circuit(cfg, circuit_id, rng)
    by_factor = {f: _expectations(native, cfg, f, rng) for f in cfg.zne_factors}
    qubits = native.measured_qubits
    zne = {q: zne_extrapolate([(f, by_factor[f][q]) for f in cfg.zne_factors], cfg.extrapolation)
           for q in qubits}
    exact = simulate(native, NoiseModel(), 1.0)
    return Sample(circuit_id, native, by_factor[cfg.zne_factors[0]], zne, exact, steps)


def build_dataset(cfg: DatasetConfig, n_jobs: int = 1) -> list[Sample]:
    ids = range(cfg.circuits_total)
    if n_jobs <= 1:
        return [make_sample(cfg, i) for i in ids]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(make_sample, [cfg] * cfg.circuits_total, ids, chunksize=8))


def _qmap(d: dict[int, float]) -> dict[str, float]:
    return {f"q{q}": float(v) for q, v in d.items()}


def _unqmap(d: dict[str, float]) -> dict[int, float]:
    return {int(k[1:]): float(v) for k, v in d.items()}


def sample_to_dict(s: Sample) -> dict:
    d = {
        "circuit_id": s.circuit_id,
        "trotter_steps": s.trotter_steps,
        "circuit": to_dict(s.circuit),
        "noisy": _qmap(s.noisy),
        "label_zne": _qmap(s.label_zne),
        "label_exact": _qmap(s.label_exact),
    }
    if s.descriptor is not None:
        d["descriptor"] = {f"q{q}": [float(x) for x in v] for q, v in s.descriptor.items()}
    return d


def sample_from_dict(d: dict) -> Sample:
    desc = d.get("descriptor")
    return Sample(
        int(d["circuit_id"]),
        from_dict(d["circuit"]),
        _unqmap(d["noisy"]),
        _unqmap(d["label_zne"]),
        _unqmap(d["label_exact"]),
        int(d["trotter_steps"]),
        {int(k[1:]): list(v) for k, v in desc.items()} if desc else None,
    )


def save_dataset(samples: Iterable[Sample], path) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(sample_to_dict(s)) + "\n")


def load_dataset(path) -> list[Sample]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(sample_from_dict(json.loads(line)))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad sample record ({exc})") from exc
    return out


def dataset_config_dict(cfg: DatasetConfig) -> dict:
    return asdict(cfg)
