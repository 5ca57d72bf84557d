"""scikit-learn style estimators over lists of dataset samples.

Every estimator consumes ``X`` as a sequence of :class:`~qagt_mlp.noise.Sample`
and works on one row per (circuit, measured qubit) pair, in sample order and
then measured order.  Targets come from the sample labels selected by
``label_source`` unless ``y`` is given explicitly.
"""
from __future__ import annotations

import copy
import logging

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import autodiff as ad
from .features import descriptor_length, sample_descriptors
from .model import GraphInputs, ModelConfig, forward_circuit, init_params, param_count

log = logging.getLogger(__name__)


def pair_index(samples) -> list[tuple[int, int]]:
    return [(s.circuit_id, q) for s in samples for q in s.circuit.measured_qubits]


def flatten_labels(samples, source: str = "exact") -> np.ndarray:
    return np.array([s.labels(source)[q] for s in samples for q in s.circuit.measured_qubits])


def flatten_noisy(samples) -> np.ndarray:
    return np.array([s.noisy[q] for s in samples for q in s.circuit.measured_qubits])


def graph_inputs(sample) -> GraphInputs:
    """Model inputs for a sample, memoised on the sample object."""
    cached = sample.__dict__.get("_graph_inputs")
    if cached is None:
        cached = GraphInputs.from_sample(sample)
        sample.__dict__["_graph_inputs"] = cached
    return cached


def predict_batch(params: dict, cfg: ModelConfig, samples, scaler=None) -> dict[tuple[int, int], float]:
    """Map every (circuit_id, measured qubit) pair to the model's prediction."""
    out = {}
    for s in samples:
        pred = forward_circuit(params, cfg, graph_inputs(s), scaler=scaler).data
        for (_, q), v in zip(pair_index([s]), pred):
            out[(s.circuit_id, q)] = float(v)
    return out


def _is_samples(X) -> bool:
    return len(X) > 0 and hasattr(X[0], "circuit")


class DescriptorEncoder(BaseEstimator, TransformerMixin):
    """Map samples to the descriptor matrix, one row per measured qubit."""

    def fit(self, X, y=None):
        if not X:
            raise ValueError("cannot fit on an empty sample list")
        self.n_measured_ = len(X[0].circuit.measured)
        self.n_features_out_ = descriptor_length(self.n_measured_)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_measured_")
        rows = []
        for s in X:
            if len(s.circuit.measured) != self.n_measured_:
                raise ValueError(
                    f"circuit {s.circuit_id} measures {len(s.circuit.measured)} qubits, "
                    f"encoder was fitted for {self.n_measured_}")
            desc = sample_descriptors(s)
            rows.extend(desc[q] for q in s.circuit.measured_qubits)
        return np.array(rows).reshape(len(rows), self.n_features_out_)


class RidgeBaseline(BaseEstimator, RegressorMixin):
    """Closed-form ridge regression from descriptors to labels.

    The intercept is not penalized, so a very large ``alpha`` predicts the
    weighted mean of the training labels.
    """

    def __init__(self, alpha: float = 1e-3, label_source: str = "exact"):
        self.alpha = alpha
        self.label_source = label_source

    def _design(self, X, fitting=False):
        if _is_samples(X):
            if fitting:
                self.encoder_ = DescriptorEncoder().fit(X)
            return self.encoder_.transform(X)
        return check_array(X)

    def fit(self, X, y=None, sample_weight=None):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if y is None:
            if not _is_samples(X):
                raise ValueError("y is required when X is a feature matrix")
            y = flatten_labels(X, self.label_source)
        A = self._design(X, fitting=True)
        y = np.asarray(y, dtype=float)
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if A.shape[0] != len(y) or len(w) != len(y):
            raise ValueError("X, y and sample_weight lengths differ")
        x_mean = w @ A / w.sum()
        y_mean = w @ y / w.sum()
        Ac = A - x_mean
        yc = y - y_mean
        gram = Ac.T @ (Ac * w[:, None]) + self.alpha * np.eye(A.shape[1])
        self.coef_ = np.linalg.solve(gram, Ac.T @ (w * yc))
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self._design(X) @ self.coef_ + self.intercept_


class QAGTRegressor(BaseEstimator, RegressorMixin):
    """Dual-path graph attention regressor trained with Adam on per-qubit MSE.

    ``fit`` runs mini-batches of ``batch_size`` circuits and, when ``X_val`` is
    given, early-stops on validation MSE with the given patience, restoring
    the best epoch's weights.
    """

    def __init__(self, d_model=64, n_heads=4, n_layers=3, d_ff=128, mlp_hidden=(128, 64),
                 variant="Full", max_nodes=2000, lr=1e-3, max_epochs=500, patience=20,
                 batch_size=4, standardize=True, label_source="exact", random_state=0):
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.d_ff = d_ff
        self.mlp_hidden = mlp_hidden
        self.variant = variant
        self.max_nodes = max_nodes
        self.lr = lr
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.standardize = standardize
        self.label_source = label_source
        self.random_state = random_state

    def model_config(self, n_measured: int) -> ModelConfig:
        return ModelConfig(self.d_model, self.n_heads, self.n_layers, self.d_ff,
                           tuple(self.mlp_hidden), self.variant, self.max_nodes, n_measured)

    def _targets(self, X, y):
        if y is not None:
            y = np.asarray(y, dtype=float)
            if len(y) != len(pair_index(X)):
                raise ValueError("y must hold one value per (circuit, measured qubit) pair")
            return y
        return flatten_labels(X, self.label_source)

    def _predict_array(self, params, X) -> np.ndarray:
        if not X:
            return np.zeros(0)
        return np.concatenate([self._forward(params, s).data for s in X])

    def _forward(self, params, sample):
        return forward_circuit(params, self.config_, graph_inputs(sample), scaler=self.scaler_)

    def _fit_scaler(self, X):
        if not self.standardize:
            return None
        rows = np.concatenate([graph_inputs(s).descriptors for s in X])
        mean = rows.mean(axis=0)
        scale = rows.std(axis=0)
        scale[scale < 1e-12] = 1.0
        return mean, scale

    def fit(self, X, y=None, X_val=None, y_val=None):
        if not _is_samples(X):
            raise ValueError("QAGTRegressor.fit expects a nonempty list of samples")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        n_measured = len(X[0].circuit.measured)
        self.config_ = self.model_config(n_measured)
        self.n_params_ = param_count(self.config_)
        self.scaler_ = self._fit_scaler(X)
        targets = self._targets(X, y)
        offsets = np.cumsum([0] + [len(s.circuit.measured) for s in X])
        val_targets = self._targets(X_val, y_val) if X_val else None

        rng = np.random.default_rng(self.random_state)
        params = init_params(self.config_, seed=self.random_state)
        names = list(params)
        opt = ad.Adam([params[k] for k in names], lr=self.lr)
        best, best_val, wait = None, np.inf, 0
        self.history_ = []
        self.stop_reason_ = "max_epochs"
        for epoch in range(1, self.max_epochs + 1):
            perm = rng.permutation(len(X))
            total, count = 0.0, 0
            try:
                for start in range(0, len(X), self.batch_size):
                    batch = perm[start:start + self.batch_size]
                    target = np.concatenate([targets[offsets[i]:offsets[i + 1]] for i in batch])
                    with ad.Tape() as tape:
                        preds = ad.concat([self._forward(params, X[i]) for i in batch], axis=0)
                        loss = ad.mse(preds, target)
                    tape.backward(loss)
                    opt.step()
                    opt.zero_grad()
                    total += loss.item() * len(target)
                    count += len(target)
                train_mse = total / count
                val_mse = (float(np.mean((self._predict_array(params, X_val) - val_targets) ** 2))
                           if X_val else train_mse)
            except ad.NumericError as exc:
                self.stop_reason_ = f"non-finite values at epoch {epoch}: {exc}"
                log.warning("lr=%g: %s", self.lr, self.stop_reason_)
                if best is None:
                    raise ad.NumericError(
                        f"training diverged in the first epoch (lr={self.lr}): {exc}") from exc
                break
            self.history_.append({"epoch": epoch, "lr": self.lr,
                                  "train_mse": train_mse, "val_mse": val_mse})
            log.info("epoch %d lr=%g train_mse=%.6g val_mse=%.6g", epoch, self.lr, train_mse, val_mse)
            if val_mse < best_val:
                best_val, wait = val_mse, 0
                best = {k: params[k].data.copy() for k in names}
                self.best_epoch_ = epoch
            elif X_val:
                wait += 1
                if wait >= self.patience:
                    self.stop_reason_ = "early_stop"
                    break
            if not X_val:
                best = {k: params[k].data.copy() for k in names}
                self.best_epoch_ = epoch
        for k in names:
            params[k].data = best[k]
            params[k].grad = None
        self.params_ = params
        self.best_val_mse_ = best_val
        self.n_steps_ = opt.state.step
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return self._predict_array(self.params_, list(X))

    def predict_map(self, X) -> dict[tuple[int, int], float]:
        return dict(zip(pair_index(X), self.predict(X).tolist()))

    def clone_fitted(self) -> "QAGTRegressor":
        return copy.deepcopy(self)
