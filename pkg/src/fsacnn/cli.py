"""Command-line entry point: ``fsacnn <subcommand> [flags]``.

Exit codes: 0 success, 1 user error (bad flags, missing or malformed inputs),
2 internal error (including a failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .augment import AugmentConfig
from .checks import LAYER_TOL, MODEL_TOL, layer_gradcheck, model_gradcheck
from .dataset import DatasetManifest, dataset_stats
from .evaluation import cross_domain_matrix, evaluate, format_sweep, fusion_eval, length_sweep
from .model import ModelConfig, build_model, load_checkpoint, save_checkpoint
from .synth import SynthConfig, synth_generate, write_corpus
from .training import TrainConfig, parse_split, train, write_history

log = logging.getLogger("fsacnn")


class UserError(Exception):
    """Raised for problems the caller can fix; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return lo, hi


def _add_common(p: argparse.ArgumentParser, seed: bool = True) -> None:
    if seed:
        p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--threads", type=int, default=1, help="cap on per-sample evaluation fan-out")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")


def _add_training(p: argparse.ArgumentParser) -> None:
    d, m = TrainConfig(), ModelConfig()
    a = d.augment
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=d.epochs, help="training epochs")
    g.add_argument("--batch-size", type=int, default=d.batch_size, help="samples per step")
    g.add_argument("--lr", type=float, default=d.lr, help="learning rate")
    g.add_argument("--beta1", type=float, default=d.beta1, help="first-moment decay")
    g.add_argument("--beta2", type=float, default=d.beta2, help="second-moment decay")
    g.add_argument("--adam-eps", type=float, default=d.eps, help="optimizer epsilon")
    g.add_argument("--lmin", type=int, default=d.l_min, help="shortest sampled training length")
    g.add_argument("--lmax", type=int, default=d.l_max, help="longest sampled training length")
    g.add_argument("--clip-norm", type=float, default=d.clip_norm, help="global gradient-norm clip (off if unset)")
    g.add_argument("--rotation", type=float, default=a.rotation_deg, help="max rotation about vertical, degrees")
    g.add_argument("--bone-scale", type=_float_pair, default=a.scale_range, help="per-bone scale range LO,HI")
    g.add_argument("--noise", type=float, default=a.noise_std, help="coordinate noise std (normalized units)")
    g = p.add_argument_group("model")
    g.add_argument("--widths", type=_int_list, default=list(m.widths), help="conv block widths")
    g.add_argument("--kernel", type=int, default=m.kernel, help="temporal kernel width")
    g.add_argument("--stride", type=int, default=m.stride, help="conv stride")
    g.add_argument("--pad", type=int, default=m.pad, help="conv zero padding")
    g.add_argument("--K", type=int, default=m.K, help="activation polynomial order")
    g.add_argument("--gs", type=int, default=m.short_gap, help="short temporal gap")
    g.add_argument("--gl", type=int, default=m.long_gap, help="long temporal gap")
    g.add_argument("--dims", type=int, choices=(2, 3), default=m.dims,
                   help="coordinate dims; 2 trains on the (x, y) projection")
    g.add_argument("--no-share-temporal", action="store_true",
                   help="separate backbones for the two temporal streams")
    g.add_argument("--per-node-branch", action="store_true", help="per-node branch coefficients variant")
    g.add_argument("--input-scale", type=float, default=m.input_scale, help="stream map scale factor")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fsacnn", description="Four-stream adaptive CNN for skeleton action recognition.",
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", help="generate a synthetic corpus", formatter_class=fmt)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--subjects", type=int, default=100, help="subject count (even; first half elderly)")
    p.add_argument("--classes", type=int, default=10, help="action classes")
    p.add_argument("--reps", type=int, default=1, help="repetitions per subject and class")
    _add_common(p)

    p = sub.add_parser("stats", help="frame-length and motion statistics", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="manifest.tsv path")
    p.add_argument("--exclude", type=_int_list, default=[], help="comma-separated action ids to drop")
    p.add_argument("--by-age", action="store_true", help="report elderly and adult separately")
    _add_common(p, seed=False)

    p = sub.add_parser("train", help="train a model", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="manifest.tsv path")
    p.add_argument("--split", default="cs", help="cs, age:elderly, age:adult or age:mixed")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", default=None, help="history TSV path; <out>.history.tsv when unset")
    p.add_argument("--track-test", action="store_true", help="record test accuracy after each epoch")
    _add_training(p)
    _add_common(p)

    for name, text in (("eval", "accuracy report"), ("sweep", "fixed-length accuracy sweep")):
        p = sub.add_parser(name, help=text, formatter_class=fmt)
        p.add_argument("--ckpt", required=True, help="checkpoint path")
        p.add_argument("--manifest", required=True, help="manifest.tsv path")
        p.add_argument("--split", default="cs", help="split whose test side is evaluated")
        if name == "eval":
            p.add_argument("--length", type=int, default=None, help="fixed evaluation length (native if unset)")
        else:
            p.add_argument("--lengths", type=_int_list, default=[16, 32, 48, 64, 96, 128],
                           help="ascending comma-separated lengths")
        p.add_argument("--report", default=None, help="also write the table to this file")
        _add_common(p, seed=False)

    p = sub.add_parser("crossage", help="train three age-domain models and tabulate", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="manifest.tsv path")
    p.add_argument("--out-dir", default=None, help="save the three checkpoints here")
    p.add_argument("--report", default=None, help="also write the matrix to this file")
    _add_training(p)
    _add_common(p)

    p = sub.add_parser("fuse", help="late fusion of two modality models", formatter_class=fmt)
    p.add_argument("--ckpt-a", required=True, help="first checkpoint")
    p.add_argument("--ckpt-b", required=True, help="second checkpoint")
    p.add_argument("--manifest", required=True, help="manifest.tsv path")
    p.add_argument("--split", default="cs", help="split whose test side is evaluated")
    p.add_argument("--weight", type=float, default=0.5, help="weight of model A's probabilities")
    p.add_argument("--report", default=None, help="also write the report to this file")
    _add_common(p, seed=False)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification", formatter_class=fmt)
    p.add_argument("--scope", choices=("layer", "model"), default="model", help="what to check")
    p.add_argument("--seeds", type=int, default=10, help="number of consecutive seeds")
    p.add_argument("--tol", type=float, default=None,
                   help=f"max relative error (default {LAYER_TOL:g} for layer, {MODEL_TOL:g} for model)")
    _add_common(p)
    return parser


# --- helpers ---------------------------------------------------------------

def _manifest(path: str) -> DatasetManifest:
    if not Path(path).is_file():
        raise UserError(f"manifest not found: {path}")
    return DatasetManifest.read(path)


def _checkpoint(path: str):
    if not Path(path).is_file():
        raise UserError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _configs(args, n_classes: int) -> tuple[ModelConfig, TrainConfig]:
    model_cfg = ModelConfig(widths=tuple(args.widths), kernel=args.kernel, stride=args.stride, pad=args.pad,
                            K=args.K, short_gap=args.gs, long_gap=args.gl, n_classes=n_classes,
                            dims=args.dims, share_temporal=not args.no_share_temporal,
                            per_node_branch=args.per_node_branch, input_scale=args.input_scale)
    aug = AugmentConfig(args.rotation, tuple(args.bone_scale), args.noise)
    train_cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, beta1=args.beta1,
                            beta2=args.beta2, eps=args.adam_eps, l_min=args.lmin, l_max=args.lmax,
                            augment=aug, seed=args.seed, clip_norm=args.clip_norm)
    if args.lmin < model_cfg.min_sequence_length():
        log.warning("lmin %d is below the model's minimum sequence length %d; short draws will be skipped",
                    args.lmin, model_cfg.min_sequence_length())
    return model_cfg, train_cfg


def _emit(text: str, report: str | None) -> None:
    print(text)
    if report:
        Path(report).write_text(text + "\n", encoding="utf-8")


def _echo_config(args, **extra) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    cfg.update(extra)
    print("# config " + json.dumps(cfg, sort_keys=True, default=str))


# --- subcommands -----------------------------------------------------------

def cmd_synth(args) -> int:
    _echo_config(args)
    manifest = synth_generate(args.subjects, args.classes, SynthConfig(reps=args.reps),
                              np.random.default_rng(args.seed))
    path = write_corpus(manifest, args.out)
    print(f"wrote {len(manifest)} sequences\t{path}")
    return 0


def cmd_stats(args) -> int:
    _echo_config(args)
    manifest = _manifest(args.manifest)
    stats = dataset_stats(manifest, args.exclude, by_age=args.by_age)
    groups = stats if args.by_age else {"all": stats}
    lines = ["group\tcount\tavg_frame_length\tvar_frame_length\tavg_motion_diff\tvar_motion_diff"]
    for name, s in groups.items():
        lines.append(f"{name}\t{s.count}\t{s.avg_frame_length:.4f}\t{s.var_frame_length:.4f}\t"
                     f"{s.avg_motion_diff:.6f}\t{s.var_motion_diff:.6f}")
    print("\n".join(lines))
    return 0


def cmd_train(args) -> int:
    manifest = _manifest(args.manifest)
    split = parse_split(args.split, manifest)
    model_cfg, train_cfg = _configs(args, manifest.n_classes)
    rng = np.random.default_rng(args.seed)
    model = build_model(model_cfg, rng)
    _echo_config(args, n_params=model.n_params, n_classes=model_cfg.n_classes,
                 min_sequence_length=model_cfg.min_sequence_length())
    test_ids = split.test if args.track_test else None

    def report(rec):
        print(f"epoch {rec.epoch}\tloss {rec.train_loss:.6f}\ttest_acc {rec.test_acc:.6f}\t"
              f"skipped {rec.skipped}\taborted_steps {rec.aborted_steps}\t{rec.wall_seconds:.1f}s", flush=True)

    model, history = train(model, manifest, split, train_cfg, rng, test_ids=test_ids, on_epoch=report)
    save_checkpoint(model, args.out)
    history_path = args.history or str(args.out) + ".history.tsv"
    write_history(history, history_path)
    print(f"checkpoint\t{args.out}\nhistory\t{history_path}")
    return 0


def cmd_eval(args) -> int:
    _echo_config(args)
    model, manifest = _checkpoint(args.ckpt), _manifest(args.manifest)
    rep = evaluate(model, manifest, parse_split(args.split, manifest), args.length, args.threads)
    _emit(rep.summary(), args.report)
    return 0


def cmd_sweep(args) -> int:
    _echo_config(args)
    model, manifest = _checkpoint(args.ckpt), _manifest(args.manifest)
    rows = length_sweep(model, manifest, parse_split(args.split, manifest), args.lengths, args.threads)
    _emit(format_sweep(rows), args.report)
    return 0


def cmd_crossage(args) -> int:
    manifest = _manifest(args.manifest)
    model_cfg, train_cfg = _configs(args, manifest.n_classes)
    _echo_config(args)
    result = cross_domain_matrix(manifest, model_cfg, train_cfg, args.threads)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, model in result.models.items():
            save_checkpoint(model, out / f"{name}.ckpt")
    _emit(result.format(), args.report)
    return 0


def cmd_fuse(args) -> int:
    _echo_config(args)
    a, b, manifest = _checkpoint(args.ckpt_a), _checkpoint(args.ckpt_b), _manifest(args.manifest)
    rep = fusion_eval(a, b, manifest, parse_split(args.split, manifest), args.weight, args.threads)
    _emit(rep.summary(), args.report)
    return 0


def cmd_gradcheck(args) -> int:
    tol = args.tol if args.tol is not None else (LAYER_TOL if args.scope == "layer" else MODEL_TOL)
    _echo_config(args, tol=tol)
    check = layer_gradcheck if args.scope == "layer" else model_gradcheck
    start = time.perf_counter()
    worst = 0.0
    for seed in range(args.seed, args.seed + args.seeds):
        err = check(seed)
        worst = max(worst, err)
        print(f"seed {seed}\tmax_rel_error {err:.3e}", flush=True)
    print(f"worst\t{worst:.3e}\ttol\t{tol:g}\t{time.perf_counter() - start:.1f}s")
    if worst > tol:
        print(f"fsacnn: gradient check failed: {worst:.3e} > {tol:g}", file=sys.stderr)
        return 2
    return 0


COMMANDS = {"synth": cmd_synth, "stats": cmd_stats, "train": cmd_train, "eval": cmd_eval,
            "sweep": cmd_sweep, "crossage": cmd_crossage, "fuse": cmd_fuse, "gradcheck": cmd_gradcheck}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "threads", 1) < 1:
        print("fsacnn: error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except (UserError, ValueError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"fsacnn: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort boundary for exit code 2
        print(f"fsacnn: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
