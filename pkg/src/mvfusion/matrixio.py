"""Feature matrices, feature sets, labelled datasets and their file formats.

Matrices are stored features x samples (``p x n``): one row per feature
dimension, one column per sample.

Two on-disk matrix formats are supported:

* ``csv``: comma separated, one matrix row per line, no header.
* ``fmat``: little-endian binary, ``b"FMAT1\\0"`` then ``u64 p``, ``u64 n``
  and ``p*n`` float64 values in row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, DimensionError, IoError, LabelError, ParseError

FMAT_MAGIC = b"FMAT1\x00"
_HEADER = struct.Struct("<QQ")
FORMATS = ("csv", "fmat")


def as_matrix(data, *, name: str = "matrix") -> np.ndarray:
    """Validate ``data`` as a finite 2-D float64 matrix with p, n >= 1."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name}: expected a 2-D matrix, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"{name}: empty matrix of shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{name}: contains NaN or Inf entries")
    return m


@dataclass(frozen=True)
class FeatureSet:
    """One view: a ``p x n`` feature matrix plus its training means."""

    matrix: np.ndarray
    name: str = "view"
    mean: np.ndarray | None = None
    centered: bool = False

    def __post_init__(self):
        m = as_matrix(self.matrix, name=self.name)
        object.__setattr__(self, "matrix", m)
        if self.mean is None:
            object.__setattr__(self, "mean", np.zeros(m.shape[0]))
        else:
            mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
            if mean.shape[0] != m.shape[0]:
                raise DimensionError(
                    f"{self.name}: mean has length {mean.shape[0]}, expected {m.shape[0]}"
                )
            object.__setattr__(self, "mean", mean)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class LabeledDataset:
    views: tuple[FeatureSet, ...]
    labels: np.ndarray
    class_count: int
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise DimensionError("dataset needs at least one view")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
            raise LabelError("labels must be a 1-D integer vector")
        n = views[0].n
        for v in views:
            if v.n != n:
                raise DimensionError(f"view {v.name!r} has {v.n} samples, expected {n}")
        if labels.shape[0] != n:
            raise DimensionError(f"{labels.shape[0]} labels for {n} samples")
        if self.class_count < 1:
            raise LabelError("class_count must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise LabelError(f"labels must lie in 0..{self.class_count - 1}")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "labels", labels.astype(np.int64))
        if not self.names:
            object.__setattr__(self, "names", tuple(v.name for v in views))

    @property
    def n(self) -> int:
        return self.views[0].n


# ---------------------------------------------------------------------------
# fmat encoding


def encode_fmat(m: np.ndarray) -> bytes:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"fmat needs a 2-D matrix, got shape {m.shape}")
    p, n = m.shape
    return FMAT_MAGIC + _HEADER.pack(p, n) + np.ascontiguousarray(m, dtype="<f8").tobytes()


def decode_fmat(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one fmat blob starting at ``offset``; return (matrix, end offset)."""
    end_magic = offset + len(FMAT_MAGIC)
    if buf[offset:end_magic] != FMAT_MAGIC:
        raise ParseError("bad fmat magic")
    if len(buf) < end_magic + _HEADER.size:
        raise ParseError("truncated fmat header")
    p, n = _HEADER.unpack_from(buf, end_magic)
    start = end_magic + _HEADER.size
    stop = start + 8 * p * n
    if len(buf) < stop:
        raise ParseError(f"truncated fmat payload: need {8 * p * n} bytes")
    data = np.frombuffer(buf[start:stop], dtype="<f8").astype(np.float64).reshape(p, n)
    return data, stop


# ---------------------------------------------------------------------------
# file IO


def _check_format(fmt: str) -> str:
    if fmt not in FORMATS:
        raise ParseError(f"unknown matrix format {fmt!r}; expected one of {FORMATS}")
    return fmt


def _parse_csv(text: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    if not rows:
        raise ParseError("empty csv matrix")
    width = len(rows[0])
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DimensionError(f"row {i} has {len(row)} values, expected {width}")
    return np.array(rows, dtype=np.float64)


def load_matrix(path, format: str = "fmat") -> np.ndarray:
    _check_format(format)
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    if format == "fmat":
        m, end = decode_fmat(raw)
        if end != len(raw):
            raise ParseError(f"{path}: {len(raw) - end} trailing bytes after fmat payload")
    else:
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError(f"{path}: not a text file") from None
        m = _parse_csv(text)
    return as_matrix(m, name=str(path))


def save_matrix(m, path, format: str = "fmat") -> None:
    _check_format(format)
    if path is None or str(path) == "":
        raise IoError("empty output path")
    m = as_matrix(m)
    path = Path(path)
    if format == "fmat":
        payload = encode_fmat(m)
    else:
        lines = [",".join(f"{v:.17g}" for v in row) for row in m]
        payload = ("\n".join(lines) + "\n").encode("utf-8")
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def save_labels(labels, path) -> None:
    text = "".join(f"{int(v)}\n" for v in np.asarray(labels).reshape(-1))
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def load_labels(path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(int(line.strip()))
        except ValueError:
            raise ParseError(f"{path} line {lineno}: not an integer label: {line!r}") from None
    return np.array(out, dtype=np.int64)


def save_dataset(ds: LabeledDataset, directory, stem: str, format: str = "fmat") -> Path:
    """Write every view, the labels and a key=value manifest; return the manifest path."""
    directory = Path(directory)
    ext = "fmat" if format == "fmat" else "csv"
    lines = [f"class_count={ds.class_count}", f"format={format}"]
    for i, view in enumerate(ds.views):
        fname = f"{stem}.view{i}.{ext}"
        save_matrix(view.matrix, directory / fname, format)
        lines.append(f"view.{i}={fname}")
        lines.append(f"name.{i}={view.name}")
    label_name = f"{stem}.labels"
    save_labels(ds.labels, directory / label_name)
    lines.append(f"labels={label_name}")
    manifest = directory / f"{stem}.manifest"
    try:
        manifest.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {manifest}: {exc}") from None
    return manifest


def read_keyvalue(path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path} line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_dataset(manifest) -> LabeledDataset:
    manifest = Path(manifest)
    kv = read_keyvalue(manifest)
    base = manifest.parent
    try:
        class_count = int(kv["class_count"])
        label_path = kv["labels"]
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{manifest}: missing or bad entry {exc}") from None
    fmt = kv.get("format", "fmat")
    views = []
    i = 0
    while f"view.{i}" in kv:
        m = load_matrix(base / kv[f"view.{i}"], fmt)
        views.append(FeatureSet(m, name=kv.get(f"name.{i}", f"view{i}")))
        i += 1
    if not views:
        raise ParseError(f"{manifest}: no view entries")
    return LabeledDataset(tuple(views), load_labels(base / label_path), class_count)


# ---------------------------------------------------------------------------
# numerics


def center_samples(fs: FeatureSet) -> FeatureSet:
    """Subtract per-feature means; the returned set records them in ``mean``.

    Centering an already centered set is a no-op on the data and keeps the
    originally recorded means.
    """
    mu = fs.matrix.mean(axis=1)
    data = fs.matrix - mu[:, None]
    mean = fs.mean + mu if fs.centered else mu
    return replace(fs, matrix=data, mean=mean, centered=True)


def numerical_rank(m, tol: float | None = None) -> int:
    """Number of singular values above ``tol``.

    With ``tol=None`` the threshold is ``max(p, n) * eps * sigma_max``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if tol is None:
        tol = max(m.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    elif tol < 0:
        raise ValueError("tol must be nonnegative")
    return int(np.count_nonzero(s > tol))


def stack_views(views: Sequence[FeatureSet]) -> np.ndarray:
    return np.vstack([v.matrix for v in views])
