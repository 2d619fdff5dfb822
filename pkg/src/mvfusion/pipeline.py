"""End-to-end runs: data -> fusion -> SVM -> metrics, plus noise sweeps.

Configuration is an INI-style file of ``[section]`` headers and ``key = value``
lines::

    [run]
    seed = 7
    out = results

    [dataset]            # generator parameters, or dataspec / train_manifest + test_manifest
    class_count = 4
    patch_shape = 8x8
    views = block-means,block-means,block-means
    view_noise = 0.7,0.7,0.7

    [fusion]
    method = mcca        # mcca | cca | none
    fuse_mode = sum      # sum | concat
    ridge_rel = 1e-4

    [svm]
    c_penalty = 1.0

    [noise]
    levels = 0.01,0.05,0.10,0.15

Every random draw is seeded from the global seed through
``derive_seed(seed, stage_name)`` so stages never share a stream.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .cca import DEFAULT_RIDGE
from .errors import ConfigError, IoError, MvFusionError, annotate
from .matrixio import LabeledDataset, load_dataset, save_dataset, save_matrix
from .mcca import MccaPlan, apply_mcca, fit_mcca, greedy_schedule, input_id, view_rank
from .metrics import MetricsReport, confusion_matrix, report
from .noise import ClassTask, ClassTaskSpec, class_spec_from_mapping, corrupt_patches, gen_classification
from .svm import SvmConfig, SvmModel, predict, train_multiclass

FUSION_METHODS = ("mcca", "cca", "none")
FUSE_MODES = ("sum", "concat")
DEFAULT_LEVELS = (0.01, 0.05, 0.10, 0.15)


def derive_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{seed}/{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


@contextmanager
def stage(name: str, module: str):
    """Prefix any library error raised inside with the stage and module names."""
    try:
        yield
    except MvFusionError as exc:
        raise annotate(exc, f"[stage {name} / module {module}]") from exc


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    out_dir: str = "results"
    dataset: dict = field(default_factory=dict)  # raw [dataset] keys
    fusion: str = "mcca"
    fuse_mode: str = "sum"
    ridge_rel: float = DEFAULT_RIDGE
    svm: SvmConfig = field(default_factory=SvmConfig)
    noise_levels: tuple[float, ...] = DEFAULT_LEVELS

    def __post_init__(self):
        if self.fusion not in FUSION_METHODS:
            raise ConfigError(f"fusion method must be one of {FUSION_METHODS}, got {self.fusion!r}")
        if self.fuse_mode not in FUSE_MODES:
            raise ConfigError(f"fuse_mode must be one of {FUSE_MODES}, got {self.fuse_mode!r}")
        if self.ridge_rel < 0:
            raise ConfigError("ridge_rel must be nonnegative")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")

    @property
    def uses_generator(self) -> bool:
        return not ({"dataspec", "train_manifest", "test_manifest"} & set(self.dataset))

    def class_spec(self) -> ClassTaskSpec:
        """Generator spec with the data seed resolved from the global seed if unset."""
        if "dataspec" in self.dataset:
            return ClassTaskSpec.load(self.dataset["dataspec"])
        if not self.uses_generator:
            raise ConfigError("dataset comes from manifests; there is no generator spec")
        kv = dict(self.dataset)
        kv.setdefault("seed", str(derive_seed(self.seed, "synth")))
        return class_spec_from_mapping(kv)

    def svm_config(self) -> SvmConfig:
        return replace(self.svm, seed=derive_seed(self.seed, "svm"))

    def effective(self) -> dict:
        """Fully resolved configuration for echoing in run summaries."""
        out = {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "fusion": self.fusion,
            "fuse_mode": self.fuse_mode,
            "ridge_rel": self.ridge_rel,
            "noise_levels": list(self.noise_levels),
            "svm": asdict(self.svm_config()),
        }
        if self.uses_generator or "dataspec" in self.dataset:
            spec = self.class_spec()
            out["dataset"] = {
                f.name: list(v) if isinstance(v := getattr(spec, f.name), tuple) else v
                for f in fields(spec)
            }
        else:
            out["dataset"] = dict(self.dataset)
        return out


_SVM_TYPES = {f.name: f.type for f in fields(SvmConfig)}


def _svm_from(section) -> SvmConfig:
    kwargs = {}
    for key, value in section.items():
        if key not in _SVM_TYPES:
            raise ConfigError(f"unknown [svm] key {key!r}")
        kind = _SVM_TYPES[key]
        kwargs[key] = value if kind == "str" else (int(value) if kind == "int" else float(value))
    return SvmConfig(**kwargs)


def parse_levels(text: str) -> tuple[float, ...]:
    levels = tuple(float(v) for v in text.split(",") if v.strip())
    if not levels:
        raise ConfigError("noise level list is empty")
    for lv in levels:
        if not 0 <= lv <= 1:
            raise ConfigError(f"noise level {lv} outside [0, 1]")
    return levels


def load_config(path=None, *, seed: int | None = None, out_dir: str | None = None) -> PipelineConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
    allowed = {"run", "dataset", "fusion", "svm", "noise"}
    unknown = set(parser.sections()) - allowed
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    get = lambda sec: dict(parser[sec]) if parser.has_section(sec) else {}  # noqa: E731
    run, fusion, noise = get("run"), get("fusion"), get("noise")
    dataset = get("dataset")
    base = Path(path).parent if path is not None else Path(".")
    for key in ("dataspec", "train_manifest", "test_manifest"):
        if key in dataset:
            dataset[key] = str(base / dataset[key])
    try:
        cfg = PipelineConfig(
            seed=int(run.get("seed", 0)) if seed is None else seed,
            out_dir=out_dir or run.get("out", "results"),
            dataset=dataset,
            fusion=fusion.get("method", "mcca"),
            fuse_mode=fusion.get("fuse_mode", "sum"),
            ridge_rel=float(fusion.get("ridge_rel", DEFAULT_RIDGE)),
            svm=_svm_from(get("svm")),
            noise_levels=parse_levels(noise["levels"]) if "levels" in noise else DEFAULT_LEVELS,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not cfg.uses_generator and "dataspec" not in dataset:
        if not {"train_manifest", "test_manifest"} <= set(dataset):
            raise ConfigError("manifest datasets need both train_manifest and test_manifest")
    return cfg


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class Data:
    train: LabeledDataset
    test: LabeledDataset
    task: ClassTask | None = None


def load_data(cfg: PipelineConfig) -> Data:
    with stage("data", "noise_sim" if cfg.uses_generator else "matrixio"):
        if cfg.uses_generator or "dataspec" in cfg.dataset:
            task = gen_classification(cfg.class_spec())
            return Data(task.train, task.test, task)
        train = load_dataset(cfg.dataset["train_manifest"])
        test = load_dataset(cfg.dataset["test_manifest"])
    return Data(train, test)


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {path}: {exc}") from None
    return path


def synthesize(cfg: PipelineConfig) -> dict[str, Path]:
    """Write train/test manifests, raw test patches and the DATASPEC1 record."""
    spec = cfg.class_spec()
    out = ensure_dir(cfg.out_dir)
    with stage("synth", "noise_sim"):
        task = gen_classification(spec)
    with stage("synth", "matrixio"):
        paths = {
            "train": save_dataset(task.train, out, "train"),
            "test": save_dataset(task.test, out, "test"),
        }
        patches = task.test_patches.reshape(task.test_patches.shape[0], -1)
        save_matrix(patches, out / "test_patches.fmat")
        paths["patches"] = out / "test_patches.fmat"
        spec.save(out / "dataset.dataspec")
        paths["dataspec"] = out / "dataset.dataspec"
    return paths


# ---------------------------------------------------------------------------
# fusion arms


def top_two_views(views) -> list[int]:
    """Indices of the two views the greedy scheduler would fuse first."""
    ranks = [view_rank(v) for v in views]
    first = greedy_schedule(ranks, lambda *_: 0)[0]
    ids = [input_id(i) for i in range(len(views))]
    return [ids.index(first[0]), ids.index(first[1])]


@dataclass(frozen=True)
class FittedArm:
    arm: str
    view_idx: tuple[int, ...]
    plan: MccaPlan | None
    model: SvmModel

    def features(self, views: Sequence[np.ndarray]) -> np.ndarray:
        chosen = [np.asarray(views[i]) for i in self.view_idx]
        if self.plan is None:
            return np.vstack(chosen)
        with stage("apply", "mcca"):
            return apply_mcca(self.plan, chosen).data

    def predict(self, views: Sequence[np.ndarray]) -> np.ndarray:
        with stage("predict", "svm"):
            return predict(self.model, self.features(views))[0]


def arm_views(arm: str, views) -> tuple[int, ...]:
    if arm == "mcca":
        return tuple(range(len(views)))
    if arm == "cca":
        if len(views) < 2:
            raise ConfigError("cca fusion needs at least two views")
        return tuple(top_two_views(views))
    if arm == "none":
        return tuple(range(len(views)))
    if arm.startswith("view:"):
        i = int(arm.split(":", 1)[1])
        if not 0 <= i < len(views):
            raise ConfigError(f"no view {i}")
        return (i,)
    raise ConfigError(f"unknown arm {arm!r}")


def fit_arm(arm: str, train: LabeledDataset, cfg: PipelineConfig) -> FittedArm:
    idx = arm_views(arm, train.views)
    chosen = [train.views[i] for i in idx]
    plan = None
    if arm in ("mcca", "cca"):
        if len(chosen) < 2:
            raise ConfigError(f"{arm} fusion needs at least two views")
        with stage("fuse", "mcca"):
            plan, fused = fit_mcca(chosen, cfg.fuse_mode, cfg.ridge_rel)
        features = fused.data
    else:
        features = np.vstack([v.matrix for v in chosen])
    with stage("train", "svm"):
        model = train_multiclass(features, train.labels, cfg.svm_config(), train.class_count)
    return FittedArm(arm, idx, plan, model)


def evaluate(fitted: FittedArm, test: LabeledDataset, views=None) -> float:
    views = [v.matrix for v in test.views] if views is None else views
    return float(np.mean(fitted.predict(views) == test.labels))


# ---------------------------------------------------------------------------
# commands


def _dump_json(obj, path: Path) -> None:
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


@dataclass(frozen=True)
class PipelineResult:
    report: MetricsReport
    fitted: FittedArm
    accuracy: float
    summary: dict
    files: dict


def run_pipeline(cfg: PipelineConfig, *, figures: bool = True) -> PipelineResult:
    out = ensure_dir(cfg.out_dir)
    data = load_data(cfg)
    fitted = fit_arm(cfg.fusion, data.train, cfg)
    predicted = fitted.predict([v.matrix for v in data.test.views])
    with stage("report", "eval_metrics"):
        cm = confusion_matrix(data.test.labels, predicted, data.test.class_count)
        rep = report(cm, [f"class{c}" for c in range(cm.classes)])
    files = {}
    csv_path, txt_path = rep.write(out)
    files.update(report_csv=csv_path, report_txt=txt_path)
    with stage("save", "svm"):
        fitted.model.save(out / "model.svmm")
        _write(out / "history.csv", fitted.model.history_csv())
    files.update(model=out / "model.svmm", history=out / "history.csv")
    if fitted.plan is not None:
        with stage("save", "mcca"):
            fitted.plan.save(out / "plan.mcca")
        files["plan"] = out / "plan.mcca"
    accuracy = rep.overall.accuracy
    summary = {
        "command": "pipeline",
        "accuracy": accuracy,
        "overall": asdict(rep.overall),
        "per_class": {
            name: {k: v for k, v in asdict(m).items()}
            for name, m in zip(rep.class_names, rep.per_class)
        },
        "confusion": cm.counts.tolist(),
        "views_used": list(fitted.view_idx),
        "fused_dim": int(fitted.model.dim),
        "seeds": {
            "global": cfg.seed,
            "svm": cfg.svm_config().seed,
            "data": cfg.class_spec().seed if data.task is not None else None,
        },
        "config": cfg.effective(),
    }
    _dump_json(summary, out / "summary.json")
    files["summary"] = out / "summary.json"
    if figures:
        from .plots import plot_confusion

        files["confusion_figure"] = plot_confusion(cm, rep.class_names, out / "confusion.png")
    return PipelineResult(rep, fitted, accuracy, summary, files)


def sweep_accuracies(cfg: PipelineConfig, data: Data, levels: Sequence[float], fitted=None):
    """Train once on clean data; evaluate on test patches corrupted at each level."""
    if data.task is None:
        raise ConfigError("noise sweep needs generated data with raw test patches")
    fitted = fit_arm(cfg.fusion, data.train, cfg) if fitted is None else fitted
    rows = []
    for k, level in enumerate(levels):
        with stage(f"noise level {level}", "noise_sim"):
            patches = corrupt_patches(
                data.task.test_patches, level, derive_seed(cfg.seed, f"noise/{k}/{level!r}")
            )
            views = data.task.test_views_from(patches)
        rows.append((float(level), evaluate(fitted, data.test, views)))
    return rows, fitted


def run_noise_sweep(cfg: PipelineConfig, *, figures: bool = True) -> tuple[list, dict]:
    if not cfg.noise_levels:
        raise ConfigError("noise level list is empty")
    out = ensure_dir(cfg.out_dir)
    data = load_data(cfg)
    rows, _ = sweep_accuracies(cfg, data, cfg.noise_levels)
    lines = ["level,accuracy"] + [f"{lv:.17g},{acc:.17g}" for lv, acc in rows]
    _write(out / "noise_sweep.csv", "\n".join(lines) + "\n")
    # whitespace-separated x/y columns for external plotting tools
    _write(out / "noise_sweep.dat", "".join(f"{100 * lv:g} {100 * acc:.6f}\n" for lv, acc in rows))
    files = {"csv": out / "noise_sweep.csv", "plot_data": out / "noise_sweep.dat"}
    if figures:
        from .plots import plot_noise_sweep

        files["figure"] = plot_noise_sweep(rows, out / "noise_sweep.png")
    _dump_json({"command": "noise-sweep", "rows": rows, "config": cfg.effective()},
               out / "noise_sweep.json")
    return rows, files


def comparison_arms(n_views: int) -> list[str]:
    return [f"view:{i}" for i in range(n_views)] + ["none", "cca", "mcca"]


ARM_LABELS = {
    "none": "without fusion (concatenated views)",
    "cca": "CCA (two highest-rank views)",
    "mcca": "MCCA (all views)",
}


def arm_label(arm: str) -> str:
    return ARM_LABELS.get(arm, f"single view {arm.split(':')[-1]}" if arm.startswith("view:") else arm)


def compare_arms(cfg: PipelineConfig, data: Data | None = None, arms=None) -> list[tuple[str, float]]:
    data = load_data(cfg) if data is None else data
    arms = comparison_arms(len(data.train.views)) if arms is None else arms
    return [(arm, evaluate(fit_arm(arm, data.train, cfg), data.test)) for arm in arms]


def run_compare(cfg: PipelineConfig, *, figures: bool = True) -> tuple[list, dict]:
    out = ensure_dir(cfg.out_dir)
    rows = compare_arms(cfg)
    lines = ["arm,label,accuracy"] + [f"{a},{arm_label(a)},{acc:.17g}" for a, acc in rows]
    _write(out / "comparison.csv", "\n".join(lines) + "\n")
    files = {"csv": out / "comparison.csv"}
    if figures:
        from .plots import plot_comparison

        files["figure"] = plot_comparison(
            [(arm_label(a), acc) for a, acc in rows], out / "comparison.png"
        )
    return rows, files
