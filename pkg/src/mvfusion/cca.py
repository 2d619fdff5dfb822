"""Two-view canonical correlation analysis and feature-level fusion.

The canonical directions solve the coupled eigenproblems

    Vxx^-1 Vxy Vyy^-1 Vyx a = L^2 a,    Vyy^-1 Vyx Vxx^-1 Vxy b = L^2 b.

Rather than forming those non-symmetric products, both blocks are whitened
with their symmetric inverse square roots and the whitened cross-covariance
``T = Vxx^-1/2 Vxy Vyy^-1/2`` is decomposed by SVD: the singular values are
the canonical correlations and ``a = Vxx^-1/2 U``, ``b = Vyy^-1/2 W``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container
from .errors import DegenerateError, DimensionError, IoError, SingularError
from .matrixio import FeatureSet, as_matrix, center_samples

CCAT_MAGIC = b"CCAT1\x00"
DEFAULT_RIDGE = 1e-4
_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class CovarianceBlocks:
    vxx: np.ndarray
    vyy: np.ndarray
    vxy: np.ndarray
    vyx: np.ndarray
    n: int

    @property
    def joint(self) -> np.ndarray:
        return np.block([[self.vxx, self.vxy], [self.vyx, self.vyy]])


@dataclass(frozen=True)
class CcaTransform:
    """Fitted pair transform. Columns of ``a``/``b`` give unit-variance training variates."""

    a: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray
    ridge: float

    @property
    def r(self) -> int:
        return self.gamma.shape[0]

    @property
    def p(self) -> int:
        return self.a.shape[0]

    @property
    def q(self) -> int:
        return self.b.shape[0]

    def to_bytes(self) -> bytes:
        return container.pack(
            CCAT_MAGIC,
            [
                ("a", container.mat(self.a)),
                ("b", container.mat(self.b)),
                ("gamma", container.mat(self.gamma)),
                ("x_mean", container.mat(self.x_mean)),
                ("y_mean", container.mat(self.y_mean)),
                ("ridge", container.mat([[self.ridge]])),
                ("r", container.mat([[float(self.r)]])),
            ],
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CcaTransform":
        f = container.unpack(CCAT_MAGIC, buf)
        t = cls(
            a=container.unmat(f["a"]),
            b=container.unmat(f["b"]),
            gamma=container.unmat(f["gamma"]).reshape(-1),
            x_mean=container.unmat(f["x_mean"]).reshape(-1),
            y_mean=container.unmat(f["y_mean"]).reshape(-1),
            ridge=float(container.unmat(f["ridge"])[0, 0]),
        )
        if int(container.unmat(f["r"])[0, 0]) != t.r:
            raise DimensionError("stored rank does not match gamma length")
        return t

    def save(self, path) -> None:
        try:
            Path(path).write_bytes(self.to_bytes())
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from None

    @classmethod
    def load(cls, path) -> "CcaTransform":
        try:
            return cls.from_bytes(Path(path).read_bytes())
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from None


@dataclass(frozen=True)
class CanonicalVariates:
    xstar: np.ndarray
    ystar: np.ndarray


@dataclass(frozen=True)
class FusedFeatures:
    data: np.ndarray
    mode: str


def _as_set(v, name: str) -> FeatureSet:
    return v if isinstance(v, FeatureSet) else FeatureSet(as_matrix(v, name=name), name=name)


def _centered(fs: FeatureSet) -> FeatureSet:
    return fs if fs.centered else center_samples(fs)


def covariance_blocks(x, y) -> CovarianceBlocks:
    """Unbiased (1/(n-1)) covariance blocks of two views sharing n samples."""
    x, y = _as_set(x, "x"), _as_set(y, "y")
    if x.n != y.n:
        raise DimensionError(f"views disagree on sample count: {x.n} vs {y.n}")
    if x.n < 2:
        raise DegenerateError(f"need at least 2 samples for covariances, got {x.n}")
    xc, yc = _centered(x).matrix, _centered(y).matrix
    denom = x.n - 1
    vxx = xc @ xc.T / denom
    vyy = yc @ yc.T / denom
    vxy = xc @ yc.T / denom
    # symmetrize against rounding in the products
    vxx = 0.5 * (vxx + vxx.T)
    vyy = 0.5 * (vyy + vyy.T)
    return CovarianceBlocks(vxx, vyy, vxy, vxy.T.copy(), x.n)


def _regularize(v: np.ndarray, ridge_rel: float) -> np.ndarray:
    if ridge_rel == 0:
        return v
    scale = ridge_rel * float(np.mean(np.diag(v)))
    return v + scale * np.eye(v.shape[0])


def inv_sqrt_psd(v: np.ndarray, *, strict: bool, name: str = "block") -> np.ndarray:
    """Symmetric inverse square root of a PSD matrix via eigendecomposition."""
    w, vecs = np.linalg.eigh(v)
    top = w[-1] if w.size else 0.0
    floor = v.shape[0] * _EPS * max(top, 0.0)
    if top <= 0 or w[0] <= 0 or (strict and w[0] <= floor):
        raise SingularError(f"{name} covariance block is singular (min eigenvalue {w[0]:.3g})")
    return (vecs / np.sqrt(w)) @ vecs.T


def fit_cca(x, y, ridge_rel: float = DEFAULT_RIDGE) -> CcaTransform:
    x, y = _as_set(x, "x"), _as_set(y, "y")
    if ridge_rel < 0:
        raise ValueError("ridge_rel must be nonnegative")
    if x.n != y.n:
        raise DimensionError(f"views disagree on sample count: {x.n} vs {y.n}")
    if x.n < 3:
        raise DegenerateError(f"CCA needs at least 3 samples, got {x.n}")
    xs, ys = _centered(x), _centered(y)
    n, p, q = x.n, x.p, y.p
    blocks = covariance_blocks(xs, ys)

    strict = ridge_rel == 0
    wx = inv_sqrt_psd(_regularize(blocks.vxx, ridge_rel), strict=strict, name="x")
    wy = inv_sqrt_psd(_regularize(blocks.vyy, ridge_rel), strict=strict, name="y")
    u, s, wt = np.linalg.svd(wx @ blocks.vxy @ wy, full_matrices=False)

    tol = max(p, q) * _EPS * max(s[0], 1.0)
    r = min(int(np.count_nonzero(s > tol)), n - 1)
    if r == 0:
        raise DegenerateError("views share no correlated direction")
    a = wx @ u[:, :r]
    b = wy @ wt[:r].T

    # sign: largest-magnitude entry of each a column positive; b follows
    pivot = a[np.argmax(np.abs(a), axis=0), np.arange(r)]
    flip = np.where(pivot < 0, -1.0, 1.0)
    a, b = a * flip, b * flip

    xv, yv = a.T @ xs.matrix, b.T @ ys.matrix
    sx = np.sqrt(np.sum(xv * xv, axis=1) / (n - 1))
    sy = np.sqrt(np.sum(yv * yv, axis=1) / (n - 1))
    if np.any(sx <= 0) or np.any(sy <= 0):
        raise DegenerateError("a canonical variate has zero training variance")
    a, b = a / sx, b / sy
    corr = np.sum((xv / sx[:, None]) * (yv / sy[:, None]), axis=1)
    b = b * np.where(corr < 0, -1.0, 1.0)

    return CcaTransform(
        a=a,
        b=b,
        gamma=np.clip(s[:r], 0.0, 1.0),
        x_mean=xs.mean.copy(),
        y_mean=ys.mean.copy(),
        ridge=float(ridge_rel),
    )


def _raw(m, name: str) -> np.ndarray:
    if isinstance(m, FeatureSet):
        if m.centered:
            return m.matrix + m.mean[:, None]
        return m.matrix
    return as_matrix(m, name=name)


def project(t: CcaTransform, x, y) -> CanonicalVariates:
    """Map raw (uncentered) view matrices to canonical variates using training means."""
    x, y = _raw(x, "x"), _raw(y, "y")
    if x.shape[0] != t.p or y.shape[0] != t.q:
        raise DimensionError(
            f"transform expects {t.p} and {t.q} features, got {x.shape[0]} and {y.shape[0]}"
        )
    if x.shape[1] != y.shape[1]:
        raise DimensionError(f"views disagree on sample count: {x.shape[1]} vs {y.shape[1]}")
    xstar = t.a.T @ (x - t.x_mean[:, None])
    ystar = t.b.T @ (y - t.y_mean[:, None])
    return CanonicalVariates(xstar, ystar)


def fuse_sum(v: CanonicalVariates) -> FusedFeatures:
    if v.xstar.shape != v.ystar.shape:
        raise DimensionError(f"cannot sum variates of shapes {v.xstar.shape} and {v.ystar.shape}")
    return FusedFeatures(v.xstar + v.ystar, "sum")


def fuse_concat(v: CanonicalVariates) -> FusedFeatures:
    if v.xstar.shape[1] != v.ystar.shape[1]:
        raise DimensionError(
            f"cannot stack variates with {v.xstar.shape[1]} and {v.ystar.shape[1]} columns"
        )
    return FusedFeatures(np.vstack([v.xstar, v.ystar]), "concat")


FUSERS = {"sum": fuse_sum, "concat": fuse_concat}


def fuse(v: CanonicalVariates, mode: str) -> FusedFeatures:
    try:
        return FUSERS[mode](v)
    except KeyError:
        raise ValueError(f"unknown fuse mode {mode!r}") from None
