"""Experiment plumbing: configs, splits, training sweeps, checkpoints and CSV reports."""
from __future__ import annotations

import csv
import json
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .circuit import Circuit, parse_circuit, transpile
from .estimators import QAGTRegressor, RidgeBaseline, flatten_labels, flatten_noisy, pair_index
from .graph import all_lightcones, build_graph, locality_metrics
from .model import VARIANTS, ModelConfig, param_count
from .noise import DatasetConfig, NoiseModel, load_dataset

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

CHECKPOINT_MANIFEST = "checkpoint.json"
CHECKPOINT_BLOB = "checkpoint.bin"


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass
class TrainConfig:
    n_train: int = 100
    n_val: int = 400
    label_source: str = "exact"
    lr_grid: tuple[float, ...] = (1e-2, 3e-3, 1e-3)
    max_epochs: int = 500
    patience: int = 20
    batch_size: int = 4
    standardize: bool = True
    seed: int = 0
    ridge_alpha: float = 1e-3

    def __post_init__(self):
        self.lr_grid = tuple(float(x) for x in self.lr_grid)
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.n_train < 1 or self.n_val < 1:
            raise ConfigError("n_train and n_val must be positive")
        if not self.lr_grid or any(x <= 0 for x in self.lr_grid):
            raise ConfigError("lr_grid must hold positive learning rates")
        if self.label_source not in ("exact", "zne"):
            raise ConfigError(f"unknown label source {self.label_source!r}")


@dataclass
class RunConfig:
    data: DatasetConfig = field(default_factory=DatasetConfig)
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)

    def model_config(self, n_measured: int, variant: Optional[str] = None) -> ModelConfig:
        kw = dict(self.model)
        if variant is not None:
            kw["variant"] = variant
        return ModelConfig(**kw, n_measured=n_measured)


def _section(raw: dict, name: str, allowed) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    return sec


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def build_config(raw: dict, seed: Optional[int] = None) -> RunConfig:
    unknown = set(raw) - {"data", "noise", "model", "train"}
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    data_keys = [f.name for f in fields(DatasetConfig) if f.name != "noise"]
    model_keys = [f.name for f in fields(ModelConfig) if f.name != "n_measured"]
    train_keys = [f.name for f in fields(TrainConfig)]
    data = _tuples(_section(raw, "data", data_keys))
    noise = _section(raw, "noise", [f.name for f in fields(NoiseModel)])
    model = _tuples(_section(raw, "model", model_keys))
    train = _tuples(_section(raw, "train", train_keys))
    if seed is not None:
        data["seed"] = seed
        train["seed"] = seed
    try:
        noise = replace(DatasetConfig().noise, **noise)
        cfg = RunConfig(DatasetConfig(**data, noise=noise), model, TrainConfig(**train))
        cfg.model_config(cfg.data.n_qubits)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path=None, seed: Optional[int] = None) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return build_config(raw, seed)


# ---------------------------------------------------------------- data

def read_dataset(path) -> list:
    try:
        samples = load_dataset(path)
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if not samples:
        raise DataError(f"dataset {path} is empty")
    return samples


def split(samples: Sequence, n_train: int, n_val: int) -> tuple[list, list]:
    """First ``n_train`` circuits train, the next ``n_val`` validate."""
    if n_train + n_val > len(samples):
        raise DataError(f"dataset has {len(samples)} circuits, split needs {n_train + n_val}")
    ids = [s.circuit_id for s in samples[:n_train + n_val]]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate circuit ids in dataset")
    return list(samples[:n_train]), list(samples[n_train:n_train + n_val])


# ---------------------------------------------------------------- training

def make_estimator(cfg: RunConfig, lr: float, seed: Optional[int] = None,
                   variant: Optional[str] = None) -> QAGTRegressor:
    mc = cfg.model_config(cfg.data.n_qubits, variant)
    t = cfg.train
    return QAGTRegressor(
        d_model=mc.d_model, n_heads=mc.n_heads, n_layers=mc.n_layers, d_ff=mc.d_ff,
        mlp_hidden=mc.mlp_hidden, variant=mc.variant, max_nodes=mc.max_nodes,
        lr=lr, max_epochs=t.max_epochs, patience=t.patience, batch_size=t.batch_size,
        standardize=t.standardize, label_source=t.label_source,
        random_state=t.seed if seed is None else seed,
    )


@dataclass
class TrainResult:
    estimator: QAGTRegressor
    log_rows: list[dict]
    best_lr: float


def train(samples: Sequence, cfg: RunConfig, seed: Optional[int] = None,
          variant: Optional[str] = None) -> TrainResult:
    """Sweep the learning-rate grid and keep the run with the lowest validation MSE."""
    tr, va = split(samples, cfg.train.n_train, cfg.train.n_val)
    best, rows, failures = None, [], []
    for lr in cfg.train.lr_grid:
        est = make_estimator(cfg, lr, seed, variant)
        try:
            est.fit(tr, X_val=va)
        except ad.NumericError as exc:
            log.warning("lr=%g abandoned: %s", lr, exc)
            failures.append(str(exc))
            continue
        rows.extend(est.history_)
        if best is None or est.best_val_mse_ < best.best_val_mse_:
            best = est
    if best is None:
        raise ad.NumericError("every learning rate diverged: " + "; ".join(failures))
    return TrainResult(best, rows, best.lr)


# ---------------------------------------------------------------- csv

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_train_log(rows: Sequence[dict], path) -> Path:
    header = ["epoch", "lr", "train_mse", "val_mse"]
    return write_csv(path, header, [[r[k] for k in header] for r in rows])


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(est: QAGTRegressor, out_dir, seed: Optional[int] = None) -> Path:
    """Write a JSON manifest plus a little-endian float64 blob of all arrays."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(est.params_)
    arrays = [est.params_[k].data for k in names]
    buffers = {}
    if est.scaler_ is not None:
        buffers = {"scaler.mean": est.scaler_[0], "scaler.scale": est.scaler_[1]}
    manifest = {
        "format": 1,
        "config": est.config_.to_dict(),
        "estimator": {k: list(v) if isinstance(v, tuple) else v
                      for k, v in est.get_params().items()},
        "param_names": names,
        "shapes": [list(a.shape) for a in arrays],
        "buffer_names": list(buffers),
        "buffer_shapes": [list(b.shape) for b in buffers.values()],
        "dtype": "<f8",
        "seed": est.random_state if seed is None else seed,
        "step": int(est.n_steps_),
        "best_epoch": int(est.best_epoch_),
        "best_val_mse": float(est.best_val_mse_),
    }
    (out / CHECKPOINT_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                    for a in arrays + list(buffers.values()))
    (out / CHECKPOINT_BLOB).write_bytes(blob)
    return out


def load_checkpoint(path) -> QAGTRegressor:
    path = Path(path)
    try:
        manifest = json.loads((path / CHECKPOINT_MANIFEST).read_text())
        blob = (path / CHECKPOINT_BLOB).read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint in {path}: {exc}") from exc
    flat = np.frombuffer(blob, dtype="<f8")
    names = manifest["param_names"] + manifest["buffer_names"]
    shapes = manifest["shapes"] + manifest["buffer_shapes"]
    need = sum(int(np.prod(s)) for s in shapes)
    if need != flat.size:
        raise DataError(f"checkpoint blob holds {flat.size} values, manifest needs {need}")
    arrays, pos = {}, 0
    for name, shape in zip(names, shapes):
        n = int(np.prod(shape))
        arrays[name] = flat[pos:pos + n].reshape(shape).astype(float)
        pos += n
    params = {k: v for k, v in manifest["estimator"].items()}
    params["mlp_hidden"] = tuple(params["mlp_hidden"])
    est = QAGTRegressor(**params)
    est.config_ = ModelConfig(**manifest["config"])
    est.params_ = {k: ad.Tensor(arrays[k], requires_grad=True, name=k)
                   for k in manifest["param_names"]}
    est.scaler_ = ((arrays["scaler.mean"], arrays["scaler.scale"])
                   if "scaler.mean" in arrays else None)
    est.n_params_ = param_count(est.config_)
    est.n_steps_ = manifest["step"]
    est.best_epoch_ = manifest["best_epoch"]
    est.best_val_mse_ = manifest["best_val_mse"]
    return est


# ---------------------------------------------------------------- evaluation

@dataclass
class EvalReport:
    per_qubit: list[list]
    per_step: list[list]

    PER_QUBIT_HEADER = ("method", "qubit", "mae", "sd", "n_samples")
    PER_STEP_HEADER = ("method", "trotter_steps", "mean_signed_error", "n_samples")

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(r[0] for r in self.per_qubit))

    def mae(self, method: str) -> dict:
        return {r[1]: r[2] for r in self.per_qubit if r[0] == method}

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        return (write_csv(out / "per_qubit.csv", self.PER_QUBIT_HEADER, self.per_qubit),
                write_csv(out / "per_step.csv", self.PER_STEP_HEADER, self.per_step))


def prediction_table(samples: Sequence, predictions: dict[str, np.ndarray],
                     label_source: str = "exact") -> EvalReport:
    """Per-qubit MAE (population SD of absolute errors) and per-step signed error.

    ``predictions`` maps a method name to one value per (circuit, qubit)
    pair; the row ``total`` in the per-qubit table pools all pairs.
    """
    pairs = pair_index(samples)
    qubits = np.array([q for _, q in pairs])
    steps_of = {s.circuit_id: s.trotter_steps for s in samples}
    steps = np.array([steps_of[c] for c, _ in pairs])
    y = flatten_labels(samples, label_source)
    per_qubit, per_step = [], []
    for method, pred in predictions.items():
        err = np.asarray(pred, dtype=float) - y
        for q in sorted(set(qubits.tolist())):
            a = np.abs(err[qubits == q])
            per_qubit.append([method, q, float(a.mean()), float(a.std()), int(a.size)])
        per_qubit.append([method, "total", float(np.abs(err).mean()),
                          float(np.abs(err).std()), int(err.size)])
        for k in sorted(set(steps.tolist())):
            e = err[steps == k]
            per_step.append([method, k, float(e.mean()), int(e.size)])
    return EvalReport(per_qubit, per_step)


def evaluate(est: QAGTRegressor, samples: Sequence, cfg: RunConfig) -> EvalReport:
    """Score the model, the ridge baseline and the unmitigated values on the validation split."""
    tr, va = split(samples, cfg.train.n_train, cfg.train.n_val)
    src = cfg.train.label_source
    ridge = RidgeBaseline(alpha=cfg.train.ridge_alpha, label_source=src).fit(tr)
    preds = {
        "qagt": est.predict(va),
        "baseline": ridge.predict(va),
        "unmitigated": flatten_noisy(va),
    }
    if src == "exact":
        preds["zne"] = flatten_labels(va, "zne")
    return prediction_table(va, preds, src)


def ridge_baseline(samples: Sequence, cfg: RunConfig) -> list[list]:
    """Validation predictions of the ridge baseline fitted on the train split."""
    tr, va = split(samples, cfg.train.n_train, cfg.train.n_val)
    src = cfg.train.label_source
    ridge = RidgeBaseline(alpha=cfg.train.ridge_alpha, label_source=src).fit(tr)
    pred = ridge.predict(va)
    y = flatten_labels(va, src)
    noisy = flatten_noisy(va)
    return [[c, q, float(p), float(t), float(n)]
            for (c, q), p, t, n in zip(pair_index(va), pred, y, noisy)]


BASELINE_HEADER = ("circuit_id", "qubit", "prediction", "label", "noisy")


def ablate(samples: Sequence, cfg: RunConfig, seeds: Sequence[int],
           variants: Sequence[str] = VARIANTS) -> list[list]:
    """Train every variant for every seed on the same split; one row per (variant, seed)."""
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown variants: {bad}")
    _, va = split(samples, cfg.train.n_train, cfg.train.n_val)
    y = flatten_labels(va, cfg.train.label_source)
    qubits = np.array([q for _, q in pair_index(va)])
    rows = []
    for seed in seeds:
        for v in variants:
            res = train(samples, cfg, seed=seed, variant=v)
            err = np.abs(res.estimator.predict(va) - y)
            per_q = [float(err[qubits == q].mean()) for q in sorted(set(qubits.tolist()))]
            rows.append([v, seed, float(err.mean())] + per_q)
            log.info("ablate variant=%s seed=%d total_mae=%.6g", v, seed, err.mean())
    return rows


def ablation_header(n_qubits_measured: Sequence[int]) -> list[str]:
    return ["variant", "seed", "total_mae"] + [f"q{q}" for q in n_qubits_measured]


# ---------------------------------------------------------------- cost model

COST_HEADER = ("method", "m", "total_executions", "relative_cost")


def cost_model(m: int, n_train: int, n_test: int) -> tuple[list[list], float]:
    """Execution counts for full ZNE versus training a mimic on ZNE labels."""
    if m < 2 or n_train < 1 or n_test < 1:
        raise ConfigError("cost model needs m >= 2 and positive circuit counts")
    zne = m * n_test
    mimic = m * n_train + n_test
    rows = [["zne", m, zne, 1.0], ["qagt", m, mimic, mimic / zne]]
    return rows, (m - 1) / m


def mimic_is_cheaper(m: int, n_train: int, n_test: int) -> bool:
    # integer form of n_train/n_test < (m-1)/m
    return m * n_train < (m - 1) * n_test


# ---------------------------------------------------------------- lightcones

LIGHTCONE_HEADER = ("circuit", "qubit", "coverage", "internal_frac", "boundary",
                    "n_nodes", "mean_jaccard")


def read_circuits(path) -> list[tuple[str, Circuit]]:
    """Circuits from a ``.qasm`` file, a directory of them, or a dataset JSONL."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.qasm"))
        if not files:
            raise DataError(f"no .qasm files in {path}")
    elif path.suffix == ".qasm":
        files = [path]
    else:
        return [(f"circuit_{s.circuit_id}", s.circuit) for s in read_dataset(path)]
    try:
        return [(f.stem, parse_circuit(f.read_text())) for f in files]
    except OSError as exc:
        raise DataError(str(exc)) from exc


def lightcone_stats(circuits: Sequence[tuple[str, Circuit]]) -> list[list]:
    """Per-circuit, per-qubit locality rows followed by per-qubit corpus means."""
    rows, by_qubit, jac = [], {}, []
    for name, c in circuits:
        if c.stage == "logical":
            c = transpile(c)
        if not c.measured:
            log.warning("%s: no measured qubits, skipped", name)
            continue
        g = build_graph(c)
        rep = locality_metrics(g, all_lightcones(g))
        mj = rep.mean_pairwise_jaccard()
        jac.append(mj)
        for i, q in enumerate(rep.qubits):
            vals = (rep.coverage[i], rep.internal_frac[i], rep.boundary[i])
            rows.append([name, q, *vals, rep.n_nodes, mj])
            by_qubit.setdefault(q, []).append(vals)
    for q in sorted(by_qubit):
        cov, inn, bnd = np.mean(by_qubit[q], axis=0)
        rows.append(["mean", q, float(cov), float(inn), float(bnd), "", ""])
    if jac:
        rows.append(["mean", "all", "", "", "", "", float(np.mean(jac))])
    return rows
