"""Command-line entry point: ``mlsgan <command> [--config FILE] [flags]``.

Exit codes: 0 success, 1 check failure, 2 config error, 3 IO error,
4 numeric abort. Log verbosity comes from ``MLSGAN_LOG_LEVEL`` (default
INFO); logs go to stderr, results to stdout and files.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, from_dict, load_config
from .data import Dataset, generate_synthetic, load_features, save_dataset, split
from .exceptions import ConfigError, ContractError, FormatError, MLSGANError, NumericError, TrainingError
from .gradcheck import run_suite
from .models import VARIANTS
from .training import (
    CSV_COLUMNS,
    TrainedModel,
    evaluate,
    init_model,
    load_model,
    model_config_for,
    probe_codes,
    save_model,
    train,
)

log = logging.getLogger("mlsgan")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# helpers


def _config(args) -> RunConfig:
    if args.config is None:
        cfg = from_dict({})
    else:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise _Exit(EXIT_IO, f"cannot read config {args.config}: {exc.strerror or exc}") from exc
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.seed = args.seed
    if args.variant is not None:
        cfg.train.variant = args.variant
    if args.checkpoint is not None:
        cfg.paths.checkpoint = str(Path(args.checkpoint).resolve())
    if args.out is not None:
        target = "dataset" if args.command == "gen-data" else "out"
        setattr(cfg.paths, target, str(Path(args.out).resolve()))
    cfg.validate()
    return cfg


def _load_dataset(cfg: RunConfig) -> Dataset:
    path = cfg.resolve("dataset")
    if not path.is_file():
        raise _Exit(EXIT_IO, f"dataset file not found: {path}")
    return load_features(path)


def _load_checkpoint(cfg: RunConfig) -> TrainedModel:
    path = cfg.resolve("checkpoint")
    if not path.is_file():
        raise _Exit(EXIT_IO, f"checkpoint not found: {path}")
    return load_model(path)


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.resolve("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _splits(cfg: RunConfig, dataset: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    train_set, test_set = split(dataset, cfg.train_fraction, seed)
    log.info("split seed=%d train=%d test=%d sha256=%s", seed, len(train_set), len(test_set),
             train_set.fingerprint()[:16] + test_set.fingerprint()[:16])
    return train_set, test_set


def _write_history(path: Path, model: TrainedModel) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in model.history:
            writer.writerow(rec.csv_row())


# --------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg: RunConfig, args) -> int:
    dataset = generate_synthetic(cfg.synthetic())
    path = cfg.resolve("dataset")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, path)
    print(f"samples {len(dataset)}")
    for c, count in enumerate(dataset.class_histogram()):
        print(f"class {c} {int(count)}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    dataset = _load_dataset(cfg)
    out = _out_dir(cfg)
    ckpt = cfg.resolve("checkpoint")
    resume = None
    if args.resume:
        resume = _load_checkpoint(cfg)
        if resume.variant != cfg.train.variant:
            raise ConfigError(f"checkpoint holds variant {resume.variant!r}, config asks for {cfg.train.variant!r}")
        seed = resume.train_config.seed
    else:
        seed = cfg.seed
    train_set, test_set = _splits(cfg, dataset, seed)
    tc = cfg.training(seed=seed)
    model, _ = train(train_set, tc, model_config_for(train_set, **cfg.model_kwargs()), test_set, resume=resume)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, ckpt)
    _write_history(out / "metrics.csv", model)
    report = evaluate(model, test_set)
    (out / "report.txt").write_text(f"variant {model.variant}\nepochs {model.epochs_done}\n" + report.to_text())
    print(f"variant {model.variant} epochs {model.epochs_done} MCA {report.mca:.4f} MPCA {report.mpca:.4f}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    model = _load_checkpoint(cfg)
    dataset = _load_dataset(cfg)
    _, test_set = _splits(cfg, dataset, model.train_config.seed)
    report = evaluate(model, test_set)
    text = f"variant {model.variant}\nsamples {len(test_set)}\n" + report.to_text()
    (_out_dir(cfg) / "eval.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, args) -> int:
    dataset = _load_dataset(cfg)
    out = _out_dir(cfg)
    train_set, test_set = _splits(cfg, dataset, cfg.seed)
    print(f"split sha256 {train_set.fingerprint()} {test_set.fingerprint()}")
    rows, numeric_failure = [], False
    for variant in VARIANTS:
        try:
            tc = cfg.training(variant=variant)
            model, _ = train(train_set, tc, model_config_for(train_set, **cfg.model_kwargs()), test_set)
            report = evaluate(model, test_set)
            rows.append([variant, repr(report.mca), repr(report.mpca), "ok"])
        except (TrainingError, NumericError) as exc:
            numeric_failure = True
            log.error("variant %s failed: %s", variant, exc)
            rows.append([variant, "", "", f"failed: {exc}"])
        print(",".join(rows[-1]))
    with open(out / "ablation.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "mca", "mpca", "status"])
        writer.writerows(rows)
    return EXIT_NUMERIC if numeric_failure else EXIT_OK


def cmd_probe(cfg: RunConfig, args) -> int:
    model = _load_checkpoint(cfg)
    dataset = _load_dataset(cfg)
    train_set, test_set = _splits(cfg, dataset, model.train_config.seed)
    p = cfg.probe
    trained = probe_codes(model, train_set, test_set, p.epochs, p.lr, p.batch_size, seed=cfg.seed)
    baseline_model = init_model(model.assembly.config, model.train_config)
    baseline = probe_codes(baseline_model, train_set, test_set, p.epochs, p.lr, p.batch_size, seed=cfg.seed)
    lines = [
        f"variant {model.variant}",
        f"trained_generator MCA {trained.report.mca:.6f} MPCA {trained.report.mpca:.6f}",
        f"untrained_generator MCA {baseline.report.mca:.6f} MPCA {baseline.report.mpca:.6f}",
        f"frozen_weights_unchanged {trained.frozen_intact and baseline.frozen_intact}",
    ]
    text = "\n".join(lines) + "\n" + trained.report.to_text()
    (_out_dir(cfg) / "probe.txt").write_text(text)
    sys.stdout.write(text)
    if not (trained.frozen_intact and baseline.frozen_intact):
        return EXIT_CHECK
    return EXIT_OK


def cmd_grad_check(cfg: RunConfig, args) -> int:
    report = run_suite(seed=cfg.seed)
    sys.stdout.write(report.to_text())
    if not report.passed:
        print("failed components: " + ", ".join(report.failed))
        return EXIT_CHECK
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "probe": cmd_probe,
    "grad-check": cmd_grad_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlsgan", description="Multi-level sequence GAN for group activities.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--out", help="dataset file for gen-data, output directory otherwise")
        p.add_argument("--checkpoint", help="checkpoint path (overrides paths.checkpoint)")
        p.add_argument("--variant", choices=sorted(VARIANTS), help="model variant (overrides train.variant)")
        if name == "train":
            p.add_argument("--resume", action="store_true", help="continue training from --checkpoint")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("MLSGAN_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    _setup_logging()
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except _Exit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (TrainingError, NumericError) as exc:
        detail = ""
        if isinstance(exc, TrainingError):
            detail = f" [epoch={exc.epoch} batch={exc.batch} head={exc.head} parameter={exc.parameter}]"
        print(f"numeric abort: {exc}{detail}", file=sys.stderr)
        return EXIT_NUMERIC
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MLSGANError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
