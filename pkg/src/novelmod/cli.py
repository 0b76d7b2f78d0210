"""Single entry point exposing the full pipeline as subcommands.

Every command accepts --config FILE (flat key=value) and repeatable
--set key=value overrides; the effective configuration is echoed into the
output directory. Exit codes: 0 success, 2 config error, 3 data error,
4 numerical abort.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .errors import ConfigError, DataError, NumericalAbort

OUT_ROOT_ENV = "NOVELMOD_OUT_ROOT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _resolve_out(args, command: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    root = os.environ.get(OUT_ROOT_ENV)
    if not root:
        raise ConfigError(f"--out not given and {OUT_ROOT_ENV} is unset")
    return Path(root) / command


def _echo_config(out_dir: Path, values: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={v}" for k, v in sorted(values.items())]
    (out_dir / "effective_config.txt").write_text("\n".join(lines) + "\n")


def _values(args) -> dict:
    return cfgmod.parse_config(args.config, args.set or [])


def cmd_make_toy(args) -> int:
    from .toy import make_toy_dataset

    values = _values(args)
    out = _resolve_out(args, "toy")
    _echo_config(out, values)
    index = make_toy_dataset(cfgmod.toy_config(values), out, extract=cfgmod.extract_config(values))
    print(f"toy dataset written: {len(index.items)} videos under {out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    from .extract import extract_dataset

    values = _values(args)
    index = extract_dataset(args.root, cfgmod.extract_config(values), overwrite=not args.keep_existing)
    print(f"extracted modality streams for {len(index.items)} videos under {args.root}")
    return EXIT_OK


def cmd_pretrain_dc(args) -> int:
    from .dataset import scan_dataset
    from .training import pretrain_domain_classifier

    values = _values(args)
    out = _resolve_out(args, "pretrain-dc")
    _echo_config(out, values)
    index = scan_dataset(args.root)
    ckpt_dir = pretrain_domain_classifier(
        cfgmod.train_config(values), index, out, log_step=lambda s, l: print(f"step {s} loss {l:.4f}")
    )
    print(f"domain classifier checkpoint: {ckpt_dir}")
    return EXIT_OK


def cmd_pretrain_ac(args) -> int:
    from .dataset import scan_dataset
    from .training import pretrain_action_classifier

    values = _values(args)
    out = _resolve_out(args, "pretrain-ac")
    _echo_config(out, values)
    index = scan_dataset(args.root)
    ckpt_dir = pretrain_action_classifier(
        cfgmod.train_config(values), index, out, log_step=lambda s, l: print(f"step {s} loss {l:.4f}")
    )
    print(f"action classifier checkpoint: {ckpt_dir}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .dataset import scan_dataset
    from .training import joint_train

    values = _values(args)
    out = _resolve_out(args, "train")
    _echo_config(out, values)
    index = scan_dataset(args.root)

    def log_step(step, rep):
        print(
            f"step {step} novelty {rep.novelty:.4f} diversity {rep.diversity:.4f} "
            f"class {rep.class_term:.4f} cycle {rep.cycle:.4f} dg {rep.dg_total:.4f} ac {rep.ac_task:.4f}"
        )

    result = joint_train(
        cfgmod.train_config(values),
        index,
        args.dc,
        args.ac,
        out,
        resume_from=args.resume,
        log_step=log_step,
    )
    print(f"joint training finished at epoch {result['epoch']}; run dir {result['run_dir']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .dataset import scan_dataset
    from .evaluation import evaluate_model

    values = _values(args)
    out = _resolve_out(args, "eval")
    _echo_config(out, values)
    index = scan_dataset(args.root)
    report = evaluate_model(args.ac, index, values["combo"], values["eval_domain"], values["chunk_len"], values["batch_size"])
    report.to_csv(out / "eval.csv")
    print(
        f"domain {report.domain_tag}: balanced {report.balanced_accuracy:.4f} "
        f"unbalanced {report.unbalanced_accuracy:.4f} over {report.n_samples} videos"
    )
    if args.plot:
        from .plots import plot_confusion

        plot_confusion(report, out / "confusion.png")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .evaluation import sweep_combinations

    values = _values(args)
    out = _resolve_out(args, "sweep")
    _echo_config(out, values)

    def log(row):
        print(f"combo {'-'.join(str(m) for m in row.combo)}: {row.status} "
              f"source {row.source_only_balanced:.4f} novel {row.with_novel_balanced:.4f}")

    table = sweep_combinations(
        cfgmod.train_config(values),
        args.root,
        out,
        dc_ckpt=args.dc,
        eval_domain=values["eval_domain"],
        jobs=args.jobs,
        log=log,
    )
    print(f"sweep table: {out / 'sweep.csv'} ({len(table.rows)} rows)")
    if args.plot:
        from .plots import plot_sweep

        plot_sweep(table, out / "sweep.png")
    return EXIT_OK


def cmd_dump_embeddings(args) -> int:
    from .dataset import scan_dataset
    from .evaluation import dump_embeddings

    values = _values(args)
    out = _resolve_out(args, "embeddings")
    _echo_config(out, values)
    index = scan_dataset(args.root)
    path = dump_embeddings(
        args.dg,
        args.dc,
        index,
        out / "embeddings.csv",
        n_frames_per_video=values["n_frames_per_video"],
        seed=values["seed"],
    )
    print(f"embeddings written: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="novelmod",
        description="Multimodal novel-domain generation for cross-domain activity recognition.",
        epilog="config keys (settable via --config file or --set key=value):\n" + cfgmod.describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, root=False, out=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        if root:
            p.add_argument("--root", required=True, help="dataset root directory")
        if out:
            p.add_argument("--out", help=f"output directory (default ${OUT_ROOT_ENV}/<command>)")

    p = sub.add_parser("make-toy", help="generate the two-domain toy benchmark")
    common(p)
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("extract", help="derive heatmap/limb/flow streams from rgb + keypoints")
    common(p, root=True, out=False)
    p.add_argument("--keep-existing", action="store_true", help="skip frames already extracted")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("pretrain-dc", help="pretrain the domain classifier on modality labels")
    common(p, root=True)
    p.set_defaults(func=cmd_pretrain_dc)

    p = sub.add_parser("pretrain-ac", help="pretrain the action classifier on source modalities")
    common(p, root=True)
    p.set_defaults(func=cmd_pretrain_ac)

    p = sub.add_parser("train", help="joint generator + classifier training phase")
    common(p, root=True)
    p.add_argument("--dc", required=True, help="domain-classifier checkpoint directory")
    p.add_argument("--ac", required=True, help="pretrained action-classifier checkpoint directory")
    p.add_argument("--resume", help="run directory to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate an action classifier on a domain")
    common(p, root=True)
    p.add_argument("--ac", required=True, help="action-classifier checkpoint directory")
    p.add_argument("--plot", action="store_true", help="emit a confusion-matrix image")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train/evaluate all 15 modality combinations")
    common(p, root=True)
    p.add_argument("--dc", help="reuse this domain-classifier checkpoint")
    p.add_argument("--jobs", type=int, default=1, help="parallel row subprocesses")
    p.add_argument("--plot", action="store_true", help="emit a sweep bar chart")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-embeddings", help="write generator bottleneck embeddings to CSV")
    common(p, root=True)
    p.add_argument("--dg", required=True, help="domain-generator checkpoint directory")
    p.add_argument("--dc", help="domain-classifier checkpoint directory (validated only)")
    p.set_defaults(func=cmd_dump_embeddings)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"error[numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())
