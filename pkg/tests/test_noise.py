import math

import numpy as np
import pytest

from conftest import random_native_circuit
from qagt_mlp.circuit import Circuit, TfimConfig, circuit_unitary, generate_tfim, make_gates, phase_distance, transpile
from qagt_mlp.noise import (
    DatasetConfig,
    NoiseModel,
    SimulationError,
    build_dataset,
    fold_circuit,
    load_dataset,
    make_sample,
    sample_shots,
    save_dataset,
    simulate,
    zne_extrapolate,
)

NOISELESS = NoiseModel(0.0, 0.0, 0.0)


def one(specs, n=1, measured=((0, "Z"),)):
    return Circuit(n, tuple(make_gates(specs)), measured)


@pytest.mark.parametrize("scale", [1.0, 2.5])
def test_x_flips_z(scale):
    assert simulate(one([("x", (0,))]), NOISELESS, scale) == {0: -1.0}


def test_empty_circuit():
    assert simulate(one([]), NOISELESS) == {0: 1.0}


def test_depolarized_x():
    out = simulate(one([("x", (0,))]), NoiseModel(p1=0.1), 1.0)
    assert out[0] == pytest.approx(-0.9, abs=1e-12)


def test_two_qubit_depolarizing_by_hand():
    # x on q0 then ecr; the ecr channel fully mixes both qubits with probability p2
    c = one([("x", (0,)), ("ecr", (0, 1))], n=2, measured=((0, "Z"), (1, "Z")))
    clean = simulate(c, NOISELESS)
    noisy = simulate(c, NoiseModel(p2=0.2))
    for q in (0, 1):
        assert noisy[q] == pytest.approx(0.8 * clean[q], abs=1e-12)


def test_readout_flip_damps():
    out = simulate(one([]), NoiseModel(readout_flip=0.1))
    assert out[0] == pytest.approx(0.8)


def test_bases():
    # sx|0> lies on the -Y axis of the Bloch sphere
    c = one([("sx", (0,))], measured=((0, "Y"),))
    assert simulate(c, NOISELESS)[0] == pytest.approx(-1.0)
    c = one([("rz", (0,), math.pi / 2), ("sx", (0,)), ("rz", (0,), math.pi / 2)], measured=((0, "X"),))
    # this is a Hadamard up to phase: |0> -> |+>
    assert simulate(c, NOISELESS)[0] == pytest.approx(1.0)


def test_matches_statevector_when_noiseless(rng):
    for _ in range(10):
        c = random_native_circuit(rng, 3, 25, measured=[0, 1, 2])
        psi = circuit_unitary(c)[:, 0]
        probs = np.abs(psi) ** 2
        got = simulate(c, NOISELESS)
        for q in range(3):
            bit = (np.arange(8) >> q) & 1
            assert got[q] == pytest.approx(float(np.sum(probs * (1 - 2 * bit))), abs=1e-12)


def test_simulate_rejects():
    logical = generate_tfim(TfimConfig(2, 1))
    with pytest.raises(SimulationError):
        simulate(logical, NOISELESS)
    with pytest.raises(SimulationError):
        simulate(one([("x", (0,))]), NoiseModel(p2=0.6), 2.0)
    with pytest.raises(SimulationError):
        simulate(Circuit(11), NOISELESS)
    with pytest.raises(ValueError):
        NoiseModel(readout_flip=0.6)


def test_single_qubit_probability_saturates():
    # lambda * p1 = 1.2 clamps to full depolarization: (1 - 1) * (-1) + 1 * 0
    assert simulate(one([("x", (0,))]), NoiseModel(p1=0.6), 2.0)[0] == pytest.approx(0.0, abs=1e-15)


def test_density_matrix_stays_physical(rng):
    seen = []

    def check(rho):
        seen.append(1)
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-12
        assert abs(np.trace(rho).real - 1.0) < 1e-9
        assert np.linalg.eigvalsh(rho).min() > -1e-9

    c = random_native_circuit(rng, 3, 40)
    simulate(c, NoiseModel(0.05, 0.1, 0.0), 1.5, monitor=check)
    assert len(seen) == 40


def test_expectations_bounded(rng):
    for _ in range(5):
        c = random_native_circuit(rng, 4, 30)
        for v in simulate(c, NoiseModel(0.01, 0.05, 0.02), 2.0).values():
            assert -1.0 <= v <= 1.0


def test_monotone_noise_response():
    for steps in (2, 5):
        c = transpile(generate_tfim(TfimConfig(4, steps, 0.8, 0.5, 0.1)))
        prev = None
        for lam in (1.0, 1.5, 2.0, 3.0):
            vals = simulate(c, NoiseModel(0.002, 0.02), lam)
            if prev is not None:
                for q in vals:
                    assert abs(prev[q]) >= abs(vals[q]) - 1e-9
            prev = vals


def test_shot_sampling():
    assert sample_shots({0: 1.0}, 17, 3) == {0: 1.0}
    assert sample_shots({0: -1.0}, 17, 3) == {0: -1.0}
    est = sample_shots({0: 0.0}, 10**6, 7)[0]
    assert abs(est) < 0.01
    assert sample_shots({0: 0.3, 1: -0.2}, 100, 5) == sample_shots({0: 0.3, 1: -0.2}, 100, 5)
    with pytest.raises(ValueError):
        sample_shots({0: 0.0}, 0, 1)


def test_fold_factor_one_is_identity():
    c = one([("x", (0,)), ("sx", (0,))])
    assert fold_circuit(c, 1) is c


def test_fold_factor_three():
    c = one([("x", (0,)), ("rz", (0,), 0.4), ("ecr", (0, 1)), ("id", (1,)), ("rz", (1,), 2.0)], n=2)
    folded = fold_circuit(c, 3)
    assert len(folded.gates) == 15
    assert phase_distance(circuit_unitary(folded), circuit_unitary(c)) < 1e-10


def test_fold_even_rejected():
    with pytest.raises(ValueError):
        fold_circuit(one([("x", (0,))]), 2)


def test_fold_preserves_unitary_random(rng):
    for _ in range(20):
        c = random_native_circuit(rng, 3, 12)
        for factor in (3, 5):
            folded = fold_circuit(c, factor)
            assert phase_distance(circuit_unitary(folded), circuit_unitary(c)) < 1e-9


def test_fold_amplifies_noise():
    c = transpile(generate_tfim(TfimConfig(3, 2, 0.8, 0.5, 0.1)))
    noise = NoiseModel(0.002, 0.02)
    z1 = simulate(c, noise)[0]
    z3 = simulate(fold_circuit(c, 3), noise)[0]
    assert abs(z3) < abs(z1)


def test_zne_examples():
    assert zne_extrapolate([(1, 0.8), (3, 0.4)], "linear") == pytest.approx(1.0)
    for method in ("linear", "richardson"):
        assert zne_extrapolate([(1, 0.37), (3, 0.37)], method) == pytest.approx(0.37)
    assert zne_extrapolate([(1, 0.9), (2, 0.8), (3, 0.7)], "richardson") == pytest.approx(1.0)


def test_zne_clamps():
    assert zne_extrapolate([(1, 0.9), (2, 0.5)], "linear") == 1.0
    assert zne_extrapolate([(1, -0.9), (2, -0.5)], "linear") == -1.0


def test_zne_errors():
    with pytest.raises(ValueError):
        zne_extrapolate([(1, 0.5)])
    with pytest.raises(ValueError):
        zne_extrapolate([(1, 0.5), (1, 0.4)])
    with pytest.raises(ValueError):
        zne_extrapolate([(1, 0.5), (2, 0.4)], "cubic")


def test_richardson_exact_on_polynomials(rng):
    for degree in range(4):
        coeffs = rng.uniform(-0.1, 0.1, size=degree + 1)
        coeffs[0] = rng.uniform(-0.5, 0.5)
        lams = [1.0, 1.5, 2.0, 2.5, 3.0][: degree + 1 + int(rng.integers(1, 3))]
        pts = [(lam, float(np.polyval(coeffs[::-1], lam))) for lam in lams]
        assert zne_extrapolate(pts, "richardson") == pytest.approx(coeffs[0], abs=1e-10)


def test_linear_matches_least_squares(rng):
    lams = np.array([1.0, 2.0, 3.0])
    ys = rng.uniform(-0.3, 0.3, size=3)
    fit = np.polyfit(lams, ys, 1)
    assert zne_extrapolate(list(zip(lams, ys)), "linear") == pytest.approx(fit[1], abs=1e-12)


def test_dataset_config_validation():
    with pytest.raises(ValueError):
        DatasetConfig(zne_factors=(2.0, 3.0))
    with pytest.raises(ValueError):
        DatasetConfig(zne_factors=(1.0, 3.0, 2.0))
    with pytest.raises(ValueError):
        DatasetConfig(circuits_total=0)
    with pytest.raises(ValueError):
        DatasetConfig(scaling="digital", zne_factors=(1.0, 2.0))


def test_noiseless_dataset_labels_agree():
    cfg = DatasetConfig(n_qubits=3, circuits_total=4, trotter_step_range=(1, 3), noise=NoiseModel(0, 0, 0))
    for s in build_dataset(cfg):
        assert set(s.noisy) == set(s.label_zne) == set(s.label_exact) == {0, 1, 2}
        for q in s.noisy:
            assert s.noisy[q] == pytest.approx(s.label_exact[q], abs=1e-9)
            assert s.label_zne[q] == pytest.approx(s.label_exact[q], abs=1e-9)


def test_dataset_cardinality_and_determinism():
    cfg = DatasetConfig(n_qubits=3, circuits_total=5, trotter_step_range=(1, 4), seed=11)
    a = build_dataset(cfg)
    assert len(a) == 5
    assert [s.circuit_id for s in a] == list(range(5))
    b = build_dataset(cfg)
    assert [s.noisy for s in a] == [s.noisy for s in b]
    # per-circuit streams: a sample does not depend on its neighbours
    assert make_sample(cfg, 3).noisy == a[3].noisy
    for s in a:
        assert 1 <= s.trotter_steps <= 4
        assert s.circuit.stage == "native"
        assert all(abs(v) <= 1 for v in s.noisy.values())


def test_digital_scaling_dataset():
    cfg = DatasetConfig(n_qubits=2, circuits_total=2, trotter_step_range=(1, 2),
                        scaling="digital", zne_factors=(1.0, 3.0))
    for s in build_dataset(cfg):
        assert all(abs(v) <= 1 for v in s.label_zne.values())


def test_dataset_round_trip(tmp_path):
    cfg = DatasetConfig(n_qubits=3, circuits_total=3, trotter_step_range=(1, 2))
    ds = build_dataset(cfg)
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    back = load_dataset(path)
    for a, b in zip(ds, back):
        assert a.circuit == b.circuit
        assert a.noisy == b.noisy and a.label_zne == b.label_zne and a.label_exact == b.label_exact
    first = path.read_text().splitlines()[0]
    assert '"noisy": {"q0"' in first
