"""Linear SVM with hinge or squared-hinge loss, trained by momentum SGD.

The primal objective over samples ``x_n`` with targets ``t_n`` in {-1, +1} is

    L(w) = 1/2 w'w + C * sum_n l(1 - w'x_n t_n)

with ``l(u) = max(u, 0)`` (``hinge_l1``) or ``max(u, 0)**2`` (``hinge_l2``).
A constant-1 feature is appended to every sample so the last weight acts as
a bias; it is regularized like any other weight.

Multiclass problems are solved one-vs-rest and predicted by argmax.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container
from .errors import DegenerateError, DimensionError, IoError, LabelError, NumericError, ParseError

SVMM_MAGIC = b"SVMM1\x00"
LOSSES = ("hinge_l1", "hinge_l2")


@dataclass(frozen=True)
class SvmConfig:
    c_penalty: float = 1.0
    loss: str = "hinge_l2"
    batch_size: int = 64
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_initial: float = 1e-2
    lr_decay_factor: float = 0.1
    max_lr_decays: int = 2
    patience_epochs: int = 5
    max_epochs: int = 100
    seed: int = 0
    plateau_tol: float = 1e-4

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.c_penalty < 0:
            raise ValueError("c_penalty must be >= 0")
        if self.batch_size < 1 or self.patience_epochs < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, patience_epochs and max_epochs must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0 or self.lr_initial <= 0:
            raise ValueError("weight_decay must be >= 0 and lr_initial > 0")
        if not 0 < self.lr_decay_factor < 1:
            raise ValueError("lr_decay_factor must lie in (0, 1)")
        if self.max_lr_decays < 0 or self.seed < 0:
            raise ValueError("max_lr_decays and seed must be nonnegative")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    objective: float
    best: float
    lr: float


@dataclass(frozen=True)
class BinaryFit:
    weights: np.ndarray
    history: tuple[EpochRecord, ...]


@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray  # classes x (d + 1), last column is the bias
    loss: str
    training_history: tuple[tuple[EpochRecord, ...], ...] = field(default=())

    @property
    def classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1] - 1

    def to_bytes(self) -> bytes:
        return container.pack(
            SVMM_MAGIC,
            [
                ("classes", container.mat([[float(self.classes)]])),
                ("loss", container.text(self.loss)),
                ("weights", container.mat(self.weights)),
            ],
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> "SvmModel":
        f = container.unpack(SVMM_MAGIC, buf)
        try:
            weights = container.unmat(f["weights"])
            classes = int(container.unmat(f["classes"])[0, 0])
            loss = container.untext(f["loss"])
        except KeyError as exc:
            raise ParseError(f"SVM model missing field {exc}") from None
        if classes != weights.shape[0]:
            raise DimensionError("class count does not match weight rows")
        return cls(weights, loss)

    def save(self, path) -> None:
        try:
            Path(path).write_bytes(self.to_bytes())
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from None

    @classmethod
    def load(cls, path) -> "SvmModel":
        try:
            return cls.from_bytes(Path(path).read_bytes())
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from None

    def history_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "epoch", "objective", "lr"])
        for c, hist in enumerate(self.training_history):
            for rec in hist:
                writer.writerow([c, rec.epoch, f"{rec.objective:.17g}", f"{rec.lr:.17g}"])
        return buf.getvalue()


def augment(data: np.ndarray) -> np.ndarray:
    """Append the constant-1 bias feature as an extra row."""
    data = np.asarray(data, dtype=np.float64)
    return np.vstack([data, np.ones((1, data.shape[1]))])


def _check(w, data, t):
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if data.shape[0] != w.shape[0]:
        raise DimensionError(f"weights have length {w.shape[0]}, data has {data.shape[0]} rows")
    if data.shape[1] != t.shape[0]:
        raise DimensionError(f"{t.shape[0]} targets for {data.shape[1]} samples")
    if np.any((t != 1) & (t != -1)):
        raise LabelError("binary targets must be -1 or +1")
    return w, data, t


def objective(w, data, t, cfg: SvmConfig) -> float:
    w, data, t = _check(w, data, t)
    slack = np.maximum(1.0 - (w @ data) * t, 0.0)
    penalty = slack.sum() if cfg.loss == "hinge_l1" else (slack * slack).sum()
    return float(0.5 * w @ w + cfg.c_penalty * penalty)


def _loss_slope(w, data, t, cfg):
    """Per-sample derivative of C*l(1 - w'x t) with respect to the score w'x."""
    u = 1.0 - (w @ data) * t
    if cfg.loss == "hinge_l1":
        return -cfg.c_penalty * t * (u > 0)
    return -2.0 * cfg.c_penalty * t * np.maximum(u, 0.0)


def grad_wrt_input(w, m, t_n: float, cfg: SvmConfig) -> np.ndarray:
    """Gradient of the per-sample loss term with respect to the input vector ``m``."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    m = np.asarray(m, dtype=np.float64).reshape(-1)
    if m.shape != w.shape:
        raise DimensionError(f"input has length {m.shape[0]}, weights {w.shape[0]}")
    margin = float(w @ m) * t_n
    if cfg.loss == "hinge_l1":
        return -cfg.c_penalty * t_n * w * float(1.0 > margin)
    return -2.0 * cfg.c_penalty * t_n * w * max(1.0 - margin, 0.0)


def grad_wrt_weights(w, batch, t, cfg: SvmConfig) -> np.ndarray:
    """Gradient of ``objective + weight_decay/2 * w'w`` over ``batch`` (d x n)."""
    w, batch, t = _check(w, batch, t)
    return w * (1.0 + cfg.weight_decay) + batch @ _loss_slope(w, batch, t, cfg)


def _accuracy(w, data, t) -> float:
    return float(np.mean(np.where(w @ data >= 0, 1.0, -1.0) == t))


def train_binary(features, t, cfg: SvmConfig, validation=None, rng=None) -> BinaryFit:
    """Mini-batch momentum descent on the primal objective.

    Steps follow ``grad / (1 + C n)``, a fixed positive rescaling of the
    objective that keeps the step size meaningful for any sample count.
    The learning rate drops by ``lr_decay_factor`` whenever the monitored
    quantity stalls for ``patience_epochs`` epochs; once ``max_lr_decays``
    drops are spent the next stall ends training. The monitored quantity is
    the training objective, or accuracy on ``validation=(features, t)``.
    The weights with the lowest training objective are returned.
    """
    data = augment(features)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    w = np.zeros(data.shape[0])
    _check(w, data, t)
    n = data.shape[1]
    if n < 2 or not (np.any(t > 0) and np.any(t < 0)):
        raise DegenerateError("binary training needs at least one sample of each target")
    if validation is not None:
        val_data, val_t = augment(validation[0]), np.asarray(validation[1], dtype=np.float64)

    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    bsz = min(cfg.batch_size, n)
    norm = 1.0 + cfg.c_penalty * n
    velocity = np.zeros_like(w)
    lr = cfg.lr_initial
    decays = 0

    best_obj = objective(w, data, t, cfg)
    best_w = w.copy()
    best_monitor = -_accuracy(w, val_data, val_t) if validation is not None else best_obj
    stall = 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, bsz):
            idx = order[start : start + bsz]
            xb, tb = data[:, idx], t[idx]
            scale = n / idx.size
            grad = w + scale * (xb @ _loss_slope(w, xb, tb, cfg))
            grad = grad / norm + cfg.weight_decay * w
            velocity = cfg.momentum * velocity - lr * grad
            w = w + velocity
        if not np.all(np.isfinite(w)):
            raise NumericError(f"SVM weights diverged at epoch {epoch} (lr={lr:g})")

        obj = objective(w, data, t, cfg)
        if obj < best_obj:
            best_obj, best_w = obj, w.copy()
        monitor = -_accuracy(w, val_data, val_t) if validation is not None else obj
        history.append(EpochRecord(epoch, obj, best_obj, lr))

        if monitor < best_monitor - cfg.plateau_tol * max(abs(best_monitor), 1e-12):
            best_monitor, stall = monitor, 0
        else:
            stall += 1
        if stall >= cfg.patience_epochs:
            if decays >= cfg.max_lr_decays:
                break
            lr *= cfg.lr_decay_factor
            decays += 1
            stall = 0
    return BinaryFit(best_w, tuple(history))


def train_multiclass(data, labels, cfg: SvmConfig, class_count: int | None = None) -> SvmModel:
    """One-vs-rest: class ``c`` against all others, each with its own seeded stream."""
    data = np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    if data.ndim != 2 or data.shape[1] != labels.shape[0]:
        raise DimensionError(f"{labels.shape[0]} labels for data of shape {data.shape}")
    if class_count is None:
        class_count = int(labels.max()) + 1
    if class_count < 2:
        raise DegenerateError("need at least two classes")
    if labels.min() < 0 or labels.max() >= class_count:
        raise LabelError(f"labels must lie in 0..{class_count - 1}")
    counts = np.bincount(labels, minlength=class_count)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise DegenerateError(f"classes without training samples: {missing}")
    rows, histories = [], []
    for c in range(class_count):
        t = np.where(labels == c, 1.0, -1.0)
        fit = train_binary(data, t, cfg, rng=np.random.default_rng([cfg.seed, c]))
        rows.append(fit.weights)
        histories.append(fit.history)
    return SvmModel(np.vstack(rows), cfg.loss, tuple(histories))


def decision_values(model: SvmModel, data) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] != model.dim:
        raise DimensionError(f"model expects {model.dim} features, got data of shape {data.shape}")
    return model.weights @ augment(data)


def predict(model: SvmModel, data) -> tuple[np.ndarray, np.ndarray]:
    """Return (labels, decision values C x m); ties go to the smallest class index."""
    scores = decision_values(model, data)
    return np.argmax(scores, axis=0), scores

