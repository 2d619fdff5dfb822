"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import netspec, pipeline
from .cca import CCAT_MAGIC, CcaTransform
from .errors import ConfigError, IoError, MvFusionError
from .matrixio import FMAT_MAGIC, decode_fmat, read_keyvalue
from .mcca import MCCA_MAGIC, MccaPlan
from .noise import DATASPEC_MAGIC, ClassTaskSpec
from .svm import SVMM_MAGIC, SvmModel


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def emit(rows: list[dict], fmt: str, out=None) -> None:
    """Print a list of uniform dicts as aligned text, CSV or JSON lines."""
    out = sys.stdout if out is None else out
    if not rows:
        return
    keys = list(rows[0])
    if fmt == "json-lines":
        for row in rows:
            out.write(json.dumps(row) + "\n")
    elif fmt == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(keys)
        for row in rows:
            writer.writerow([row[k] for k in keys])
    else:
        cells = [[_fmt(row[k]) for k in keys] for row in rows]
        widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
        out.write("  ".join(k.ljust(w) for k, w in zip(keys, widths)).rstrip() + "\n")
        for c in cells:
            out.write("  ".join(v.ljust(w) for v, w in zip(c, widths)).rstrip() + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _config(args) -> pipeline.PipelineConfig:
    return pipeline.load_config(args.config, seed=args.seed, out_dir=args.out)


def cmd_synth(args) -> int:
    paths = pipeline.synthesize(_config(args))
    emit([{"artifact": k, "path": str(v)} for k, v in paths.items()], args.format)
    return 0


def cmd_pipeline(args) -> int:
    result = pipeline.run_pipeline(_config(args), figures=not args.no_figures)
    rows = [{"class": r[0], **dict(zip(("accuracy", "error", "sensitivity", "specificity",
                                         "precision", "fpr"), (r[1], r[2], r[5], r[6], r[7], r[8])))}
            for r in result.report.rows()]
    emit(rows, args.format)
    return 0


def cmd_noise_sweep(args) -> int:
    cfg = _config(args)
    if args.levels is not None:
        cfg = replace(cfg, noise_levels=pipeline.parse_levels(args.levels))
    rows, _ = pipeline.run_noise_sweep(cfg, figures=not args.no_figures)
    emit([{"level": lv, "accuracy": acc} for lv, acc in rows], args.format)
    return 0


def cmd_compare(args) -> int:
    rows, _ = pipeline.run_compare(_config(args), figures=not args.no_figures)
    emit([{"arm": a, "label": pipeline.arm_label(a), "accuracy": acc} for a, acc in rows],
         args.format)
    return 0


def cmd_netspec(args) -> int:
    if args.preset:
        if args.preset not in netspec.PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; available: {sorted(netspec.PRESETS)}")
        specs = netspec.PRESETS[args.preset]
        if args.channels is not None:
            specs = [netspec.ConvStackSpec(s.filter_size, s.depth, args.channels) for s in specs]
    elif args.stack:
        specs = [netspec.parse_stack(s, args.channels or 64) for s in args.stack]
    else:
        raise ConfigError("give --preset or at least one --stack")
    rows = netspec.table(specs)
    emit(rows, args.format)
    if args.widths:
        try:
            start, pools, cap = (int(v) for v in args.widths.split(","))
        except ValueError:
            raise ConfigError(f"--widths expects START,POOLS,CAP, got {args.widths!r}") from None
        sys.stdout.write("widths: " + " ".join(map(str, netspec.width_schedule(start, pools, cap))) + "\n")
    return 0


def describe(path) -> str:
    """Human-readable dump of any artifact this package writes."""
    path = Path(path)
    raw = path.read_bytes()
    buf = io.StringIO()
    np.set_printoptions(precision=6, suppress=True, linewidth=120)
    if raw.startswith(FMAT_MAGIC):
        m, _ = decode_fmat(raw)
        buf.write(f"fmat matrix {m.shape[0]} x {m.shape[1]}\n{m}\n")
    elif raw.startswith(CCAT_MAGIC):
        t = CcaTransform.from_bytes(raw)
        buf.write(f"CCA transform p={t.p} q={t.q} r={t.r} ridge={t.ridge:g}\n")
        buf.write(f"gamma: {t.gamma}\n")
    elif raw.startswith(MCCA_MAGIC):
        plan = MccaPlan.from_bytes(raw)
        buf.write(f"MCCA plan lambda={plan.lambda_} fuse_mode={plan.fuse_mode} "
                  f"ridge_rel={plan.ridge_rel:g} fitted={plan.fitted}\n")
        for sid, dim, name in zip(plan.input_ids, plan.input_dims, plan.input_names):
            buf.write(f"  input {sid} ({name}): dim={dim} rank={plan.ranks[sid]}\n")
        for k, st in enumerate(plan.stages, start=1):
            buf.write(f"  stage {k}: {st.left_id} + {st.right_id} -> {st.output_id} "
                      f"(rank {st.output_rank})")
            if st.transform is not None:
                buf.write(f" r={st.transform.r} gamma[:3]={st.transform.gamma[:3]}")
            buf.write("\n")
    elif raw.startswith(SVMM_MAGIC):
        model = SvmModel.from_bytes(raw)
        buf.write(f"SVM model classes={model.classes} dim={model.dim} loss={model.loss}\n")
        buf.write(f"{model.weights}\n")
    elif raw.startswith(DATASPEC_MAGIC.encode()):
        buf.write(ClassTaskSpec.from_text(raw.decode()).to_text())
    else:
        for k, v in read_keyvalue(path).items():
            buf.write(f"{k} = {v}\n")
    return buf.getvalue()


def cmd_inspect(args) -> int:
    try:
        sys.stdout.write(describe(args.path))
    except OSError as exc:
        raise IoError(f"cannot read {args.path}: {exc}") from None
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI-style config file")
    common.add_argument("--seed", type=int, help="global seed (overrides the config file)")
    common.add_argument("--out", help="output directory (overrides the config file)")
    common.add_argument("--format", choices=("text", "csv", "json-lines"), default="text")

    parser = _Parser(prog="mvfusion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.set_defaults(func=cmd_synth)

    for name, func, help_ in (
        ("pipeline", cmd_pipeline, "fuse, train, evaluate and report"),
        ("noise-sweep", cmd_noise_sweep, "accuracy against pixel-corruption level"),
        ("compare", cmd_compare, "accuracy of single views, plain concatenation, CCA and MCCA"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
        p.set_defaults(func=func)
        if name == "noise-sweep":
            p.add_argument("--levels", help="comma-separated fractions, e.g. 0.01,0.05")

    p = sub.add_parser("netspec", parents=[common], help="conv-stack parameter arithmetic")
    p.add_argument("--preset", help="named comparison, e.g. three-3x3-vs-7x7")
    p.add_argument("--stack", action="append", help="DEPTHxFILTER[@CHANNELS], repeatable")
    p.add_argument("--channels", type=int, help="channel count K (default 64)")
    p.add_argument("--widths", help="START,POOLS,CAP for the width-doubling schedule")
    p.set_defaults(func=cmd_netspec)

    p = sub.add_parser("inspect", parents=[common], help="dump a serialized artifact as text")
    p.add_argument("path", type=Path)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MvFusionError as exc:
        sys.stderr.write(f"mvfusion {args.command}: {type(exc).__name__}: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
