"""Source-task training, transfer fine-tuning and grid search.

Training is mini-batch MSE with Adam, a validation metric tracked every
epoch, patience-based early stopping and best-snapshot restoration. All
randomness (shuffles, dropout masks, parameter init) flows from a single
counter-based stream per run, so a (config, seed) pair fixes the entire
history.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import model as mdl
from .autodiff import Tensor
from .errors import ConfigError, TrainingError
from .metrics import rmspe

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters."""
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 5000
    patience: int = 50
    seed: int = 0
    loss: str = "mse"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.loss != "mse":
            raise ConfigError(f"unsupported loss {self.loss!r}")


@dataclass
class TrainHistory:
    """Per-epoch curves plus where and why training stopped."""
    train_loss: list[float] = field(default_factory=list)
    val_rmspe: list[float] = field(default_factory=list)
    best_epoch: int = 0          # 1-based
    stop_reason: str = ""

    @property
    def best_val(self) -> float:
        return min(self.val_rmspe) if self.val_rmspe else float("nan")

    def to_csv(self, path: str | Path) -> None:
        lines = ["epoch,train_loss,val_rmspe"]
        for i, (tl, vr) in enumerate(zip(self.train_loss, self.val_rmspe), 1):
            lines.append(f"{i},{tl!r},{vr!r}")
        Path(path).write_text("\n".join(lines) + "\n")


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared difference between predictions and targets."""
    target = np.asarray(target, dtype=np.float64)
    if pred.data.size == 0:
        raise ConfigError("mse_loss needs at least one element")
    if pred.shape != target.shape:
        raise ConfigError(
            f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - Tensor(target)
    return (diff * diff).mean()


class Adam:
    """Standard Adam with bias correction; frozen tensors never enter."""

    def __init__(self, lr: float, beta1: float = ADAM_BETA1,
                 beta2: float = ADAM_BETA2, eps: float = ADAM_EPS):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, named_params: list[tuple[str, Tensor]]) -> None:
        self.steps += 1
        bc1 = 1.0 - self.beta1 ** self.steps
        bc2 = 1.0 - self.beta2 ** self.steps
        for name, tensor in named_params:
            if tensor.grad is None:
                continue
            if tensor.grad.shape != tensor.data.shape:
                raise ConfigError(
                    f"gradient shape mismatch for {name}: "
                    f"{tensor.grad.shape} vs {tensor.data.shape}")
            m = self.m.get(name)
            v = self.v.get(name)
            if m is None:
                m = np.zeros_like(tensor.data)
                v = np.zeros_like(tensor.data)
            m = self.beta1 * m + (1.0 - self.beta1) * tensor.grad
            v = self.beta2 * v + (1.0 - self.beta2) * tensor.grad ** 2
            self.m[name] = m
            self.v[name] = v
            tensor.data = tensor.data - self.lr * (m / bc1) / (
                np.sqrt(v / bc2) + self.eps)


class EarlyStopper:
    """Patience counter over a minimized validation metric."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best: float | None = None
        self.best_epoch = 0
        self.counter = 0

    def update(self, value: float, epoch: int) -> bool:
        """Record an epoch's metric; returns True when training should stop."""
        if self.best is None or value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.counter = 0
            return False
        self.counter += 1
        return self.counter >= self.patience


def _batches(n: int, batch_size: int,
             rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled mini-batch index lists; a trailing singleton is dropped
    because train-mode batch norm needs at least two rows."""
    perm = rng.permutation(n)
    out = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(out) > 1 and out[-1].size == 1:
        out = out[:-1]
    return out


def _run_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 7])))


def train_model(params: mdl.ModelParameters, x_train: np.ndarray,
                y_train: np.ndarray, x_val: np.ndarray, y_val: np.ndarray,
                cfg: TrainConfig) -> TrainHistory:
    """Fit with early stopping; leaves the best-validation snapshot loaded."""
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise ConfigError("train and validation sets must be non-empty")
    rng = _run_rng(cfg.seed)
    optimizer = Adam(cfg.learning_rate)
    stopper = EarlyStopper(cfg.patience)
    history = TrainHistory()
    best_state = params.state_dict()
    trainable = params.trainable()

    for epoch in range(1, cfg.max_epochs + 1):
        losses = []
        for batch in _batches(x_train.shape[0], cfg.batch_size, rng):
            params.zero_grads()
            pred = mdl.forward(params, x_train[batch], training=True, rng=rng)
            loss = mse_loss(pred, y_train[batch])
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite training loss at epoch {epoch}")
            loss.backward()
            optimizer.step(trainable)
            losses.append(value)
        val_pred = mdl.predict(params, x_val)
        val_metric = rmspe(y_val, val_pred)
        history.train_loss.append(float(np.mean(losses)))
        history.val_rmspe.append(val_metric)
        improved = stopper.best is None or val_metric < stopper.best
        should_stop = stopper.update(val_metric, epoch)
        if improved:
            best_state = params.state_dict()
        if should_stop:
            history.stop_reason = "patience"
            break
    else:
        history.stop_reason = "max_epochs"
    history.best_epoch = stopper.best_epoch
    params.load_state(best_state)
    return history


def fine_tune(params: mdl.ModelParameters, x_target: np.ndarray,
              y_target: np.ndarray, epochs: int, cfg: TrainConfig) -> TrainHistory:
    """Freeze the feature extractor and fit the head on target cycles.

    Runs exactly `epochs` epochs (full batch when the target set fits in
    one) and keeps the final parameters; batch-norm running statistics
    keep updating since they are head state.
    """
    if x_target.shape[0] == 0:
        raise ConfigError("target training set is empty")
    if epochs < 0:
        raise ConfigError("epochs must be >= 0")
    params.apply_freeze("vit", True)
    rng = _run_rng(cfg.seed)
    optimizer = Adam(cfg.learning_rate)
    history = TrainHistory(stop_reason="epochs_exhausted")
    trainable = params.trainable()
    n = x_target.shape[0]
    for epoch in range(1, epochs + 1):
        losses = []
        if n > cfg.batch_size:
            batches = _batches(n, cfg.batch_size, rng)
        else:
            batches = [np.arange(n)]
        for batch in batches:
            params.zero_grads()
            pred = mdl.forward(params, x_target[batch], training=True, rng=rng)
            loss = mse_loss(pred, y_target[batch])
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"non-finite fine-tune loss at epoch {epoch}")
            loss.backward()
            optimizer.step(trainable)
            losses.append(value)
        history.train_loss.append(float(np.mean(losses)))
        history.val_rmspe.append(float("nan"))
    history.best_epoch = epochs
    return history


def random_split_run(x: np.ndarray, y: np.ndarray, model_cfg: mdl.ViTConfig,
                     train_cfg: TrainConfig, train_ratio: float,
                     split_seed: int) -> tuple[float, float]:
    """One randomly divided train/val/test fit; returns (val, test) RMSPE."""
    rng = np.random.Generator(np.random.Philox(split_seed))
    n = x.shape[0]
    perm = rng.permutation(n)
    n_train = int(np.floor(train_ratio * n))
    n_val = int(np.floor(0.2 * n_train))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:n_train]
    test_idx = perm[n_train:]
    if val_idx.size == 0 or train_idx.size == 0 or test_idx.size == 0:
        raise ConfigError(
            f"{n} samples at ratio {train_ratio} leave an empty division")
    params = mdl.ModelParameters.initialize(model_cfg, seed=split_seed)
    history = train_model(params, x[train_idx], y[train_idx],
                          x[val_idx], y[val_idx], train_cfg)
    test_metric = rmspe(y[test_idx], mdl.predict(params, x[test_idx]))
    return history.best_val, test_metric


def grid_search(grid: dict[str, list], x: np.ndarray, y: np.ndarray,
                base_model_cfg: mdl.ViTConfig, base_train_cfg: TrainConfig,
                repeats: int, seed: int,
                train_ratio: float = 0.7) -> tuple[dict, list[dict]]:
    """Exhaustive search over model/train hyperparameters.

    Every grid point is trained `repeats` times on freshly re-split data
    (the same split sequence is reused across points so configurations
    see identical data). Selection is the lowest mean validation RMSPE;
    ties resolve to the first point in iteration order. Returns
    (best point, per-run result rows).
    """
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("grid must be non-empty")
    keys = list(grid.keys())
    model_fields = set(mdl.ViTConfig.__dataclass_fields__)
    train_fields = set(TrainConfig.__dataclass_fields__)
    for key in keys:
        if key not in model_fields and key not in train_fields:
            raise ConfigError(f"unknown grid parameter {key!r}")

    results: list[dict] = []
    summary: dict[tuple, list[float]] = {}
    for combo in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, combo))
        summary[combo] = []
        for r in range(repeats):
            split_seed = int(np.random.SeedSequence([seed, r]).generate_state(1)[0])
            m_cfg = replace(base_model_cfg,
                            **{k: v for k, v in point.items() if k in model_fields})
            t_cfg = replace(base_train_cfg, seed=split_seed,
                            **{k: v for k, v in point.items() if k in train_fields})
            val_metric, test_metric = random_split_run(
                x, y, m_cfg, t_cfg, train_ratio, split_seed)
            summary[combo].append(val_metric)
            results.append({**point, "repeat": r, "seed": split_seed,
                            "val_rmspe": val_metric,
                            "test_rmspe": test_metric})
    best_combo = min(summary, key=lambda c: float(np.mean(summary[c])))
    return dict(zip(keys, best_combo)), results
