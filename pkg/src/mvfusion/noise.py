"""Random-pixel corruption and seeded synthetic data generators.

``inject_noise`` replaces an exact fraction of pixel positions (drawn without
replacement) by uniform draws over the patch's value range.

``gen_multiview`` produces views sharing a Gaussian latent with known
population canonical correlations; ``gen_classification`` produces a
class-template image task with several deterministic feature extractors,
keeping raw test patches so they can be corrupted before extraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, IoError, ParseError, RangeError
from .matrixio import FeatureSet, LabeledDataset

DATASPEC_MAGIC = "DATASPEC1"

# independent generator streams derived from one seed
_STREAM_TEMPLATES, _STREAM_TRAIN, _STREAM_TEST, _STREAM_NUISANCE = 1, 2, 3, 4


@dataclass(frozen=True)
class ImagePatch:
    pixels: np.ndarray
    value_range: tuple[float, float] | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise ValueError(f"patch must be a non-empty 2-D array, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)
        if self.value_range is None:
            object.__setattr__(self, "value_range", (float(px.min()), float(px.max())))
        lo, hi = self.value_range
        if lo > hi:
            raise ValueError(f"value range ({lo}, {hi}) is inverted")


def corrupted_count(level: float, size: int) -> int:
    # round first so that e.g. 0.29 * 100 gives 29, not 28
    return int(math.floor(round(level * size, 9)))


def inject_noise(img: ImagePatch, level: float, rng_seed) -> ImagePatch:
    """Replace ``floor(level * H * W)`` distinct pixels with Uniform(lo, hi) draws."""
    if not 0.0 <= level <= 1.0:
        raise RangeError(f"noise level must lie in [0, 1], got {level}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    px = img.pixels.copy()
    k = corrupted_count(level, px.size)
    if k:
        lo, hi = img.value_range
        pos = rng.choice(px.size, size=k, replace=False)
        px.reshape(-1)[pos] = rng.uniform(lo, hi, size=k)
    return ImagePatch(px, img.value_range)


# ---------------------------------------------------------------------------
# multi-view latent model


@dataclass(frozen=True)
class MultiViewSpec:
    latent_dim: int
    view_dims: tuple[int, ...]
    noise_sigmas: tuple[float, ...]
    n: int
    loading_seed: int = 0
    sample_seed: int = 1
    latent_scales: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.latent_dim < 1 or self.n < 1:
            raise ConfigError("latent_dim and n must be positive")
        if len(self.view_dims) < 1 or len(self.noise_sigmas) != len(self.view_dims):
            raise ConfigError("need one noise sigma per view")
        if self.latent_dim > min(self.view_dims):
            raise ConfigError(f"latent_dim {self.latent_dim} exceeds smallest view dim")
        if any(s < 0 for s in self.noise_sigmas):
            raise ConfigError("noise sigmas must be nonnegative")
        if self.latent_scales is not None and (
            len(self.latent_scales) != self.latent_dim or any(s <= 0 for s in self.latent_scales)
        ):
            raise ConfigError("latent_scales needs latent_dim positive entries")

    @property
    def scales(self) -> np.ndarray:
        if self.latent_scales is None:
            return np.ones(self.latent_dim)
        return np.asarray(self.latent_scales, dtype=np.float64)


def population_correlations(spec: MultiViewSpec, a: int, b: int) -> np.ndarray:
    """Closed-form canonical correlations between views ``a`` and ``b``, descending.

    Along latent coordinate j with variance s_j^2 the two views carry
    variances s_j^2 + sigma^2 and cross-covariance s_j^2.
    """
    s2 = spec.scales**2
    sa2, sb2 = spec.noise_sigmas[a] ** 2, spec.noise_sigmas[b] ** 2
    return np.sort(s2 / np.sqrt((s2 + sa2) * (s2 + sb2)))[::-1]


def gen_multiview(spec: MultiViewSpec) -> tuple[list[FeatureSet], dict[tuple[int, int], np.ndarray]]:
    load_rng = np.random.default_rng(spec.loading_seed)
    loadings = []
    for p in spec.view_dims:
        q, _ = np.linalg.qr(load_rng.standard_normal((p, spec.latent_dim)))
        loadings.append(q[:, : spec.latent_dim])
    rng = np.random.default_rng(spec.sample_seed)
    z = spec.scales[:, None] * rng.standard_normal((spec.latent_dim, spec.n))
    views = []
    for i, (L, sigma) in enumerate(zip(loadings, spec.noise_sigmas)):
        noise = rng.standard_normal((L.shape[0], spec.n))
        views.append(FeatureSet(L @ z + sigma * noise, name=f"view{i}"))
    m = len(views)
    truth = {(a, b): population_correlations(spec, a, b) for a in range(m) for b in range(a + 1, m)}
    return views, truth


# ---------------------------------------------------------------------------
# class-template image task


def _raw(patches):
    return patches.reshape(patches.shape[0], -1)


def _row_means(patches):
    return patches.mean(axis=2)


def _col_means(patches):
    return patches.mean(axis=1)


def _block_means(patches):
    n, h, w = patches.shape
    return patches.reshape(n, h // 2, 2, w // 2, 2).mean(axis=(2, 4)).reshape(n, -1)


EXTRACTORS = {
    "raw-flatten": _raw,
    "row-means": _row_means,
    "column-means": _col_means,
    "block-means": _block_means,
}


def extract(name: str, patches: np.ndarray) -> np.ndarray:
    """Apply extractor ``name`` to patches (n x H x W); returns features x samples."""
    try:
        fn = EXTRACTORS[name]
    except KeyError:
        raise ConfigError(f"unknown extractor {name!r}; choose from {sorted(EXTRACTORS)}") from None
    return np.ascontiguousarray(fn(np.asarray(patches, dtype=np.float64)).T)


@dataclass(frozen=True)
class ClassTaskSpec:
    class_count: int = 4
    patch_shape: tuple[int, int] = (8, 8)
    within_sigma: float = 1.0
    views: tuple[str, ...] = ("raw-flatten", "row-means", "column-means")
    n_train: int = 50
    n_test: int = 50
    seed: int = 0
    template_scale: float = 1.0
    view_noise: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "patch_shape", tuple(int(v) for v in self.patch_shape))
        object.__setattr__(self, "views", tuple(self.views))
        object.__setattr__(self, "view_noise", tuple(float(v) for v in self.view_noise))
        h, w = self.patch_shape
        if self.class_count < 2:
            raise ConfigError("class_count must be at least 2")
        if h < 1 or w < 1:
            raise ConfigError(f"bad patch shape {self.patch_shape}")
        if not self.views:
            raise ConfigError("at least one view extractor is required")
        for v in self.views:
            if v not in EXTRACTORS:
                raise ConfigError(f"unknown extractor {v!r}; choose from {sorted(EXTRACTORS)}")
        if "block-means" in self.views and (h % 2 or w % 2):
            raise ConfigError("block-means needs even patch height and width")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train and n_test must be positive")
        if self.within_sigma < 0 or self.template_scale <= 0:
            raise ConfigError("within_sigma must be >= 0 and template_scale > 0")
        if self.view_noise and len(self.view_noise) != len(self.views):
            raise ConfigError("view_noise needs one entry per view")
        if any(s < 0 for s in self.view_noise):
            raise ConfigError("view_noise entries must be nonnegative")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")

    def templates(self) -> np.ndarray:
        rng = np.random.default_rng([self.seed, _STREAM_TEMPLATES])
        return self.template_scale * rng.standard_normal((self.class_count, *self.patch_shape))

    @property
    def nuisance(self) -> tuple[float, ...]:
        return self.view_noise or (0.0,) * len(self.views)

    # DATASPEC1 text record

    def to_text(self) -> str:
        lines = [DATASPEC_MAGIC, "kind=classification"]
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ClassTaskSpec":
        lines = text.splitlines()
        if not lines or lines[0].strip() != DATASPEC_MAGIC:
            raise ParseError("missing DATASPEC1 header")
        kv = {}
        for line in lines[1:]:
            if line.strip() and not line.startswith("#"):
                key, sep, value = line.partition("=")
                if not sep:
                    raise ParseError(f"expected key=value, got {line!r}")
                kv[key.strip()] = value.strip()
        if kv.pop("kind", "classification") != "classification":
            raise ParseError("only classification data specs are supported")
        return class_spec_from_mapping(kv)

    def save(self, path) -> None:
        try:
            Path(path).write_text(self.to_text())
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from None

    @classmethod
    def load(cls, path) -> "ClassTaskSpec":
        try:
            return cls.from_text(Path(path).read_text())
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from None


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def class_spec_from_mapping(kv: dict[str, str]) -> ClassTaskSpec:
    """Build a spec from string key=value pairs; unknown keys are rejected."""
    known = {f.name for f in fields(ClassTaskSpec)}
    extra = set(kv) - known
    if extra:
        raise ConfigError(f"unknown dataset keys: {sorted(extra)}")
    conv = {
        "class_count": int,
        "patch_shape": lambda v: tuple(int(x) for x in _split(v.replace("x", ","))),
        "within_sigma": float,
        "views": lambda v: tuple(_split(v)),
        "n_train": int,
        "n_test": int,
        "seed": int,
        "template_scale": float,
        "view_noise": lambda v: tuple(float(x) for x in _split(v)),
    }
    try:
        return ClassTaskSpec(**{k: conv[k](v) for k, v in kv.items()})
    except ValueError as exc:
        raise ConfigError(f"bad dataset value: {exc}") from None


@dataclass(frozen=True)
class ClassTask:
    spec: ClassTaskSpec
    train: LabeledDataset
    test: LabeledDataset
    test_patches: np.ndarray  # n_test_total x H x W
    test_nuisance: tuple[np.ndarray, ...]

    def test_views_from(self, patches: np.ndarray) -> list[np.ndarray]:
        """Re-extract test features from (possibly corrupted) patches, same nuisance draws."""
        patches = np.asarray(patches, dtype=np.float64)
        if patches.shape != self.test_patches.shape:
            raise ConfigError(
                f"patches of shape {patches.shape} do not match test patches {self.test_patches.shape}"
            )
        return [extract(v, patches) + e for v, e in zip(self.spec.views, self.test_nuisance)]


def _draw(spec: ClassTaskSpec, templates, per_class: int, stream: int):
    rng = np.random.default_rng([spec.seed, stream])
    labels = np.repeat(np.arange(spec.class_count), per_class)
    noise = rng.standard_normal((labels.size, *spec.patch_shape))
    patches = templates[labels] + spec.within_sigma * noise
    nrng = np.random.default_rng([spec.seed, _STREAM_NUISANCE, stream])
    nuisance = tuple(
        s * nrng.standard_normal((extract(v, patches[:1]).shape[0], labels.size))
        for v, s in zip(spec.views, spec.nuisance)
    )
    return patches, labels, nuisance


def gen_classification(spec: ClassTaskSpec) -> ClassTask:
    """Train/test split with ``n_train`` / ``n_test`` samples per class."""
    templates = spec.templates()
    tr_patches, tr_labels, tr_nuis = _draw(spec, templates, spec.n_train, _STREAM_TRAIN)
    te_patches, te_labels, te_nuis = _draw(spec, templates, spec.n_test, _STREAM_TEST)

    def dataset(patches, labels, nuisance):
        views = tuple(
            FeatureSet(extract(v, patches) + e, name=v) for v, e in zip(spec.views, nuisance)
        )
        return LabeledDataset(views, labels, spec.class_count)

    return ClassTask(
        spec,
        dataset(tr_patches, tr_labels, tr_nuis),
        dataset(te_patches, te_labels, te_nuis),
        te_patches,
        te_nuis,
    )


def corrupt_patches(patches: np.ndarray, level: float, seed) -> np.ndarray:
    """Corrupt every patch independently; each uses its own value range."""
    rng = np.random.default_rng(seed)
    out = np.empty_like(patches, dtype=np.float64)
    for i, px in enumerate(patches):
        out[i] = inject_noise(ImagePatch(px), level, rng).pixels
    return out


def nearest_template_accuracy(task: ClassTask, patches: np.ndarray | None = None) -> float:
    """Accuracy of assigning each test patch to the closest class template."""
    patches = task.test_patches if patches is None else patches
    templates = task.spec.templates()
    flat = patches.reshape(patches.shape[0], -1)
    d = ((flat[:, None, :] - templates.reshape(templates.shape[0], -1)[None]) ** 2).sum(-1)
    return float(np.mean(np.argmin(d, axis=1) == task.test.labels))


def view_dims(spec: ClassTaskSpec) -> list[int]:
    dummy = np.zeros((1, *spec.patch_shape))
    return [extract(v, dummy).shape[0] for v in spec.views]

