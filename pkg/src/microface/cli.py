"""Command-line interface.

Subcommands: gen-data, train, eval-pairs, ablate, dump-aug, entropy-report.
Every configuration key can be set in a ``key = value`` config file and
overridden by the flag of the same name.  Exit codes: 0 success, 1 usage
error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import report
from .ablate import DEFAULT_MODES, ablation_run, write_ablation_csv
from .data import (
    ImageSample,
    generate_toy_dataset,
    load_manifest,
    load_pairs,
    make_pairs,
    read_ppm,
    write_pairs,
    write_ppm,
)
from .dpap import AugmentationConfig, augment
from .errors import (
    EXIT_DATA,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    ContractError,
    DataError,
    NumericalAbort,
    ShapeError,
    UsageError,
)
from .evaluation import evaluate_pairs, tar_at_far
from .model import Model, load_checkpoint, save_checkpoint
from .train import sample_seed, train_model


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1
        raise UsageError(message)


def _bool_flag(raw: str) -> bool:
    try:
        return cfgmod._parse_bool(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="key = value configuration file")
    for key, (parser_fn, default, help_text) in cfgmod.KEYS.items():
        kwargs: dict = {"default": None, "help": f"{help_text} (default {default})"}
        if parser_fn is cfgmod._parse_bool:
            kwargs["type"] = _bool_flag
            kwargs["metavar"] = "{on,off}"
        elif parser_fn is cfgmod._parse_mode:
            kwargs["choices"] = ("variance", "entropy", "global", "off")
        else:
            kwargs["type"] = parser_fn
        parser.add_argument(f"--{key}", dest=f"cfg_{key.replace('-', '_')}", **kwargs)


def _collect_overrides(args: argparse.Namespace) -> dict:
    out = {}
    for key in cfgmod.KEYS:
        out[key] = getattr(args, f"cfg_{key.replace('-', '_')}", None)
    return out


def _merged(args: argparse.Namespace) -> dict:
    return cfgmod.merge_settings(getattr(args, "config", None), _collect_overrides(args))


def build_parser() -> _Parser:
    parser = _Parser(prog="microface", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[], help="write a synthetic identity corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--identities", type=int, default=8)
    p.add_argument("--per-id", type=int, default=20)
    p.add_argument("--side", type=int, default=32)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--pairs", type=int, default=200, help="verification pairs to draw (0 = none)")
    p.add_argument("--force", action="store_true", help="overwrite a non-empty directory")

    p = sub.add_parser("train", help="train a model and write checkpoint + CSV log + curves")
    p.add_argument("--data", required=True, help="manifest CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--quiet", action="store_true")
    _add_config_flags(p)

    p = sub.add_parser("eval-pairs", help="verification accuracy and TAR@FAR of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", required=True, help="pairs CSV (paths relative to its directory)")
    p.add_argument("--far", default="0.1,0.01,0.001", help="comma-separated FAR targets")
    p.add_argument("--out", help="directory for eval CSV and score histogram")

    p = sub.add_parser("ablate", help="retrain with components toggled; table + figure")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--modes", default=",".join(DEFAULT_MODES), help="comma-separated mode list")
    _add_config_flags(p)

    p = sub.add_parser("dump-aug", help="write original/augmented image pairs to disk")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--checkpoint", help="harvest gate scores from this model (default: fresh init)")
    _add_config_flags(p)

    p = sub.add_parser("entropy-report", help="combine training logs into an entropy-trend report")
    p.add_argument("--runs", required=True, help="comma-separated training log CSVs")
    p.add_argument("--labels", help="comma-separated labels (default: file stems)")
    p.add_argument("--out", required=True)

    return parser


def cmd_gen_data(args) -> int:
    manifest_path = generate_toy_dataset(
        args.out, identities=args.identities, per_id=args.per_id, side=args.side,
        seed=args.seed, force=args.force,
    )
    print(f"wrote {manifest_path}")
    if args.pairs > 0:
        manifest = load_manifest(manifest_path)
        pairs = make_pairs(manifest, args.pairs, seed=args.seed)
        pairs_path = Path(args.out) / "pairs.csv"
        write_pairs(pairs_path, pairs)
        print(f"wrote {pairs_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    values = _merged(args)
    manifest = load_manifest(args.data)
    model_cfg = cfgmod.model_config(values, classes=manifest.num_classes)
    settings = cfgmod.train_settings(values)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(record):
        if not args.quiet and (record.epoch % 10 == 0 or record.epoch == settings.epochs - 1):
            print(
                f"epoch {record.epoch:4d}  arc {record.mean_arc_loss:8.4f}  "
                f"acc {record.train_accuracy:6.3f}  eta {record.mean_eta:6.4f}  "
                f"entropy {record.mean_token_entropy:8.4f}"
            )

    result = train_model(manifest, model_cfg, settings, epoch_callback=progress)
    save_checkpoint(result.model, out_dir / "checkpoint.bin")
    report.write_train_log(out_dir / "train_log.csv", result.records)
    report.save_training_curves(result.records, out_dir / "training_curves.png")
    final = result.records[-1]
    print(f"final: epoch {final.epoch} accuracy {final.train_accuracy:.3f}")
    print(f"wrote {out_dir / 'checkpoint.bin'}, {out_dir / 'train_log.csv'}, {out_dir / 'training_curves.png'}")
    return EXIT_OK


def cmd_eval_pairs(args) -> int:
    model = load_checkpoint(args.checkpoint)
    pairs_path = Path(args.pairs)
    pairs = load_pairs(pairs_path)
    result = evaluate_pairs(model, pairs, root=pairs_path.parent)
    print(f"pairs: {len(pairs)}  accuracy {result.accuracy:.4f} at threshold {result.threshold:.4f}")
    far_rows = []
    try:
        fars = [float(tok) for tok in args.far.split(",") if tok]
    except ValueError as exc:
        raise UsageError(f"bad --far list {args.far!r}: {exc}") from exc
    for far in fars:
        if not result.genuine or not result.impostor:
            break
        tf = tar_at_far(result.genuine, result.impostor, far)
        flag = " (saturated)" if tf.saturated else ""
        print(f"TAR@FAR={far:g}: {tf.tar:.4f}{flag}")
        far_rows.append({"far": far, "tar": tf.tar, "saturated": int(tf.saturated)})
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "eval_metrics.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value", "extra"])
            writer.writerow(["accuracy", f"{result.accuracy:.6f}", f"threshold={result.threshold:.6f}"])
            for row in far_rows:
                writer.writerow([f"tar@far={row['far']:g}", f"{row['tar']:.6f}", f"saturated={row['saturated']}"])
        report.save_score_histogram(result.genuine, result.impostor, out_dir / "score_hist.png")
        print(f"wrote {out_dir / 'eval_metrics.csv'}, {out_dir / 'score_hist.png'}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    values = _merged(args)
    manifest = load_manifest(args.data)
    model_cfg = cfgmod.model_config(values, classes=manifest.num_classes)
    settings = cfgmod.train_settings(values)
    modes = tuple(tok for tok in args.modes.split(",") if tok)
    if not modes:
        raise UsageError("empty --modes list")
    rows, _ = ablation_run(manifest, model_cfg, settings, modes)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_ablation_csv(rows, out_dir / "ablation.csv")
    report.save_ablation_bars(rows, out_dir / "ablation.png")
    for row in rows:
        print(
            f"{row['mode']:12s} acc {row['train_accuracy']:6.3f}  arc {row['mean_arc_loss']:8.4f}  "
            f"entropy {row['mean_token_entropy']:8.4f}"
        )
    print(f"wrote {out_dir / 'ablation.csv'}, {out_dir / 'ablation.png'}")
    return EXIT_OK


def cmd_dump_aug(args) -> int:
    values = _merged(args)
    manifest = load_manifest(args.data)
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    else:
        model = Model(cfgmod.model_config(values, classes=manifest.num_classes), seed=values["seed"])
    if not model.cfg.use_se:
        raise UsageError("dump-aug needs a model with the SE gate enabled")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = min(args.count, len(manifest.rows))
    top_k = values["top-k"] if values["top-k"] > 0 else None
    from .train import default_top_k

    k = top_k or default_top_k(model.cfg.num_patches)
    for i in range(count):
        rel, label = manifest.rows[i]
        pixels = read_ppm(manifest.root / rel)
        sample = ImageSample(pixels, label, seed=sample_seed(values["seed"], 0, i))
        donor_rel, donor_label = manifest.rows[(i + 1) % len(manifest.rows)]
        donor = ImageSample(read_ppm(manifest.root / donor_rel), donor_label)
        kappa = model.kappa_of(sample.pixels)
        aug_cfg = AugmentationConfig(top_k=k, alpha=values["alpha"], seed=sample.seed)
        augmented = augment(sample, kappa, aug_cfg, donor, grid=model.grid)
        write_ppm(out_dir / f"orig_{i:03d}.ppm", sample.pixels)
        write_ppm(out_dir / f"aug_{i:03d}.ppm", augmented.pixels)
    print(f"wrote {count} original/augmented pairs to {out_dir}")
    return EXIT_OK


def cmd_entropy_report(args) -> int:
    run_paths = [tok for tok in args.runs.split(",") if tok]
    if not run_paths:
        raise UsageError("empty --runs list")
    if args.labels:
        labels = [tok for tok in args.labels.split(",") if tok]
        if len(labels) != len(run_paths):
            raise UsageError(f"{len(run_paths)} runs but {len(labels)} labels")
    else:
        labels = [Path(p).stem for p in run_paths]
    runs = {label: report.read_train_log(path) for label, path in zip(labels, run_paths)}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    longest = max(len(cols["epoch"]) for cols in runs.values())
    with open(out_dir / "entropy_report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", *labels])
        for i in range(longest):
            row = [i]
            for label in labels:
                series = runs[label]["mean_token_entropy"]
                row.append(f"{series[i]:.12g}" if i < len(series) else "")
            writer.writerow(row)
    report.save_entropy_trend(runs, out_dir / "entropy_trend.png")
    print(f"wrote {out_dir / 'entropy_report.csv'}, {out_dir / 'entropy_trend.png'}")
    return EXIT_OK


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval-pairs": cmd_eval_pairs,
    "ablate": cmd_ablate,
    "dump-aug": cmd_dump_aug,
    "entropy-report": cmd_entropy_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractError, ShapeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
