"""Multi-set fusion by repeated pairwise CCA.

At every stage the two alive feature sets of highest numerical rank are fused
and the output joins the pool. Equal ranks are broken by ascending input
index; a fused set inherits the smaller index of its two constituents.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import container
from .cca import DEFAULT_RIDGE, CcaTransform, FusedFeatures, fit_cca, fuse, project
from .errors import (
    DegenerateError,
    DimensionError,
    IoError,
    MvFusionError,
    ParseError,
    UnfittedError,
    annotate,
)
from .matrixio import FeatureSet, as_matrix, center_samples, numerical_rank

MCCA_MAGIC = b"MCCA1\x00"


@dataclass(frozen=True)
class MccaStage:
    left_id: str
    right_id: str
    output_id: str
    fuse_mode: str
    output_rank: int
    transform: CcaTransform | None = None


@dataclass(frozen=True)
class MccaPlan:
    stages: tuple[MccaStage, ...]
    ranks: Mapping[str, int]
    input_ids: tuple[str, ...]
    input_dims: tuple[int, ...]
    fuse_mode: str
    ridge_rel: float = DEFAULT_RIDGE
    input_names: tuple[str, ...] = field(default=())

    @property
    def lambda_(self) -> int:
        return len(self.input_ids)

    @property
    def input_ranks(self) -> dict[str, int]:
        return {i: self.ranks[i] for i in self.input_ids}

    @property
    def fitted(self) -> bool:
        return all(s.transform is not None for s in self.stages)

    @property
    def output_id(self) -> str:
        return self.stages[-1].output_id

    def to_bytes(self) -> bytes:
        meta = [
            f"lambda={self.lambda_}",
            f"fuse_mode={self.fuse_mode}",
            f"ridge_rel={self.ridge_rel!r}",
            f"stages={len(self.stages)}",
        ]
        for i, (sid, dim) in enumerate(zip(self.input_ids, self.input_dims)):
            name = self.input_names[i] if self.input_names else sid
            meta.append(f"input.{i}={sid},{dim},{name}")
        for key in sorted(self.ranks):
            meta.append(f"rank.{key}={self.ranks[key]}")
        fields = [("meta", container.text("\n".join(meta)))]
        for k, st in enumerate(self.stages):
            line = f"{st.left_id},{st.right_id},{st.output_id},{st.fuse_mode},{st.output_rank}"
            fields.append((f"stage.{k}", container.text(line)))
            if st.transform is not None:
                fields.append((f"stage.{k}.transform", st.transform.to_bytes()))
        return container.pack(MCCA_MAGIC, fields)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "MccaPlan":
        f = container.unpack(MCCA_MAGIC, buf)
        kv = dict(line.split("=", 1) for line in container.untext(f["meta"]).splitlines())
        try:
            lam = int(kv["lambda"])
            ids, dims, names = [], [], []
            for i in range(lam):
                sid, dim, name = kv[f"input.{i}"].split(",", 2)
                ids.append(sid)
                dims.append(int(dim))
                names.append(name)
            ranks = {k[5:]: int(v) for k, v in kv.items() if k.startswith("rank.")}
            stages = []
            for k in range(int(kv["stages"])):
                left, right, out, mode, rank = container.untext(f[f"stage.{k}"]).split(",")
                blob = f.get(f"stage.{k}.transform")
                t = CcaTransform.from_bytes(blob) if blob is not None else None
                stages.append(MccaStage(left, right, out, mode, int(rank), t))
            return cls(
                tuple(stages),
                ranks,
                tuple(ids),
                tuple(dims),
                kv["fuse_mode"],
                float(kv["ridge_rel"]),
                tuple(names),
            )
        except (KeyError, ValueError) as exc:
            raise ParseError(f"malformed MCCA plan: {exc}") from None

    def save(self, path) -> None:
        try:
            Path(path).write_bytes(self.to_bytes())
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from None

    @classmethod
    def load(cls, path) -> "MccaPlan":
        try:
            return cls.from_bytes(Path(path).read_bytes())
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from None


def input_id(i: int) -> str:
    return f"F{i + 1}"


def output_id(k: int) -> str:
    return f"M{k + 1}"


def greedy_schedule(
    input_ranks: Sequence[int],
    output_rank: Callable[[int, str, str], int],
) -> list[tuple[str, str, str, int]]:
    """Pair off the two highest-rank alive sets until one remains.

    ``output_rank(stage_index, left_id, right_id)`` supplies the rank of each
    fused output. Returns ``(left, right, output, output_rank)`` per stage.
    """
    # alive entries: (id, rank, tie-break index)
    alive = [(input_id(i), int(r), i) for i, r in enumerate(input_ranks)]
    stages = []
    k = 0
    while len(alive) > 1:
        alive.sort(key=lambda e: (-e[1], e[2]))
        (lid, _, lkey), (rid, _, rkey) = alive[0], alive[1]
        oid = output_id(k)
        orank = int(output_rank(k, lid, rid))
        stages.append((lid, rid, oid, orank))
        alive = alive[2:] + [(oid, orank, min(lkey, rkey))]
        k += 1
    return stages


def view_rank(fs: FeatureSet) -> int:
    """Numerical rank of a view after centering."""
    return numerical_rank(center_samples(fs).matrix)


def _check_views(views: Sequence) -> list[FeatureSet]:
    out = []
    for i, v in enumerate(views):
        if not isinstance(v, FeatureSet):
            v = FeatureSet(as_matrix(v, name=input_id(i)), name=input_id(i))
        out.append(v)
    if len(out) < 2:
        raise DegenerateError(f"MCCA needs at least 2 feature sets, got {len(out)}")
    n = out[0].n
    for v in out:
        if v.n != n:
            raise DimensionError(f"view {v.name!r} has {v.n} samples, expected {n}")
    return out


def _check_mode(mode: str) -> str:
    if mode not in ("sum", "concat"):
        raise ValueError(f"unknown fuse mode {mode!r}")
    return mode


def plan_fusion(views: Sequence, fuse_mode: str = "sum") -> MccaPlan:
    """Planning-time schedule using rank bounds for fused outputs."""
    _check_mode(fuse_mode)
    views = _check_views(views)
    ranks = {input_id(i): view_rank(v) for i, v in enumerate(views)}

    def bound(k, left, right):
        rl, rr = ranks[left], ranks[right]
        r = min(rl, rr) if fuse_mode == "sum" else rl + rr
        ranks[output_id(k)] = r
        return r

    sched = greedy_schedule([ranks[input_id(i)] for i in range(len(views))], bound)
    return MccaPlan(
        stages=tuple(MccaStage(l, r, o, fuse_mode, rk) for l, r, o, rk in sched),
        ranks=dict(ranks),
        input_ids=tuple(input_id(i) for i in range(len(views))),
        input_dims=tuple(v.p for v in views),
        fuse_mode=fuse_mode,
        input_names=tuple(v.name for v in views),
    )


def fit_mcca(
    views: Sequence, fuse_mode: str = "sum", ridge_rel: float = DEFAULT_RIDGE
) -> tuple[MccaPlan, FusedFeatures]:
    """Fit every stage on training views; intermediate ranks are measured, not bounded."""
    _check_mode(fuse_mode)
    views = _check_views(views)
    if views[0].n < 3:
        raise DegenerateError(f"MCCA needs at least 3 samples, got {views[0].n}")
    pool: dict[str, FeatureSet] = {input_id(i): v for i, v in enumerate(views)}
    ranks = {sid: view_rank(v) for sid, v in pool.items()}
    transforms: dict[int, CcaTransform] = {}
    fused_out: dict[str, FusedFeatures] = {}

    def run_stage(k, left, right):
        try:
            t = fit_cca(pool[left], pool[right], ridge_rel)
            fused = fuse(project(t, pool[left], pool[right]), fuse_mode)
        except MvFusionError as exc:
            raise annotate(exc, f"mcca stage {k + 1} ({left}+{right})") from exc
        oid = output_id(k)
        transforms[k] = t
        fused_out[oid] = fused
        pool[oid] = FeatureSet(fused.data, name=oid)
        ranks[oid] = view_rank(pool[oid])
        return ranks[oid]

    sched = greedy_schedule([ranks[input_id(i)] for i in range(len(views))], run_stage)
    plan = MccaPlan(
        stages=tuple(
            MccaStage(l, r, o, fuse_mode, rk, transforms[k]) for k, (l, r, o, rk) in enumerate(sched)
        ),
        ranks=dict(ranks),
        input_ids=tuple(input_id(i) for i in range(len(views))),
        input_dims=tuple(v.p for v in views),
        fuse_mode=fuse_mode,
        ridge_rel=float(ridge_rel),
        input_names=tuple(v.name for v in views),
    )
    return plan, fused_out[plan.output_id]


def replay_schedule(plan: MccaPlan) -> list[tuple[str, str, str, int]]:
    """Recompute the stage sequence from the recorded ranks alone."""
    lookup = lambda k, left, right: plan.ranks[output_id(k)]  # noqa: E731
    return greedy_schedule([plan.ranks[i] for i in plan.input_ids], lookup)


def apply_mcca(plan: MccaPlan, views: Sequence) -> FusedFeatures:
    """Replay a fitted plan on new views (original input order) without refitting."""
    if not plan.fitted:
        raise UnfittedError("MCCA plan has unfitted stages")
    if len(views) != plan.lambda_:
        raise DimensionError(f"plan expects {plan.lambda_} views, got {len(views)}")
    pool: dict[str, np.ndarray] = {}
    for i, (sid, dim) in enumerate(zip(plan.input_ids, plan.input_dims)):
        v = views[i]
        m = v.matrix + v.mean[:, None] if isinstance(v, FeatureSet) and v.centered else v
        m = m.matrix if isinstance(m, FeatureSet) else as_matrix(m, name=sid)
        if m.shape[0] != dim:
            raise DimensionError(f"view {sid} has {m.shape[0]} features, plan expects {dim}")
        pool[sid] = m
    n = {m.shape[1] for m in pool.values()}
    if len(n) != 1:
        raise DimensionError("views disagree on sample count")
    fused = None
    for k, st in enumerate(plan.stages):
        try:
            fused = fuse(project(st.transform, pool[st.left_id], pool[st.right_id]), st.fuse_mode)
        except MvFusionError as exc:
            raise annotate(exc, f"mcca stage {k + 1} ({st.left_id}+{st.right_id})") from exc
        pool[st.output_id] = fused.data
    return fused

