"""Command-line interface.

Exit codes: 0 success, 1 usage or config error, 2 validation failure (group,
kernel or theory check), 3 runtime failure (I/O, format, non-convergence).
Errors go to stderr as ``invkern-error[<category>]: <message>``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig
from .data import save_dataset
from .errors import ConfigError, InvkernError, InvkernRuntimeError, ValidationError
from .group import make_group
from .kernels import BaseKernel

log = logging.getLogger("invkern")

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3

# shortcut flag -> dotted config key
SHORTCUTS = {
    "group": "group.kind", "dim": "group.dim", "kernel": "kernel.kind", "gamma": "kernel.gamma",
    "pooling": "kernel.pooling", "features": "kernel.features", "template_mode": "kernel.template_mode",
    "source": "data.source", "num_classes": "data.num_classes", "noise": "data.noise_sigma",
    "seed": "data.seed", "K": "tasks.K", "task_seed": "tasks.seed", "C": "solver.C",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"invkern-error[usage]: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _add_common(p, config=True):
    if config:
        p.add_argument("--config", help="INI config file (sections group, kernel, data, tasks, solver, eval, output)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override any config key (repeatable)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on this)")
    p.add_argument("--quiet", action="store_true", help="only warnings and errors on stderr")


def _add_shortcuts(p, keys):
    for k in keys:
        p.add_argument(f"--{k.replace('_', '-')}", dest=k, default=None, help=f"sets {SHORTCUTS[k]}")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="invkern", description="Group-invariant kernels and MMIF features")
    ap.add_argument("--version", action="version", version=f"invkern {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a synthetic orbit dataset")
    _add_common(p)
    _add_shortcuts(p, ["group", "dim", "num_classes", "noise", "seed"])
    p.add_argument("--out", required=True, help="dataset directory to write")

    p = sub.add_parser("check-theory", help="run the numerical invariance checks")
    _add_common(p)
    _add_shortcuts(p, ["group", "dim", "kernel", "gamma"])
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--theory-seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--report", help="write the report as JSON here")

    p = sub.add_parser("train", help="train an MMIF extractor")
    _add_common(p)
    _add_shortcuts(p, ["group", "dim", "kernel", "gamma", "pooling", "features", "template_mode", "source",
                       "num_classes", "noise", "seed", "K", "task_seed", "C"])
    p.add_argument("--dataset", help="dataset directory (sets data.source = load)")
    p.add_argument("--out", required=True, help="extractor directory to write")

    p = sub.add_parser("extract", help="compute MMIF features for a dataset split")
    _add_common(p, config=False)
    p.add_argument("--extractor", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True, help="feature directory to write")

    p = sub.add_parser("evaluate", help="all-pairs verification report for extracted features")
    _add_common(p)
    p.add_argument("--features", required=True, help="directory written by extract")
    p.add_argument("--out", required=True, help="report directory to write")

    p = sub.add_parser("pipeline", help="generate/load data, train, extract and evaluate")
    _add_common(p)
    _add_shortcuts(p, ["group", "dim", "kernel", "gamma", "pooling", "features", "template_mode", "source",
                       "num_classes", "noise", "seed", "K", "task_seed", "C"])
    p.add_argument("--out", help="output directory (overrides output.dir)")
    return ap


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if getattr(args, "config", None) else PipelineConfig()
    for k, dotted in SHORTCUTS.items():
        v = getattr(args, k, None)
        if v is not None:
            cfg.override(dotted, v)
    for item in getattr(args, "set", []):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        cfg.override(key.strip(), value.strip())
    if getattr(args, "dataset", None) and args.command == "train":
        cfg.override("data.source", "load")
        cfg.override("data.path", str(Path(args.dataset).resolve()))
    if getattr(args, "out", None) and args.command == "pipeline":
        cfg.override("output.dir", args.out)
    return cfg


def cmd_gen_data(args) -> int:
    from .pipeline import gen_config
    from .data import gen_orbit_dataset
    cfg = _config(args)
    cfg.validate()
    ds = gen_orbit_dataset(gen_config(cfg))
    save_dataset(ds, args.out)
    log.info("wrote dataset to %s (%s)", args.out,
             ", ".join(f"{n}: {len(s)} rows" for n, s in ds.splits.items()))
    return EXIT_OK


def cmd_check_theory(args) -> int:
    from .theory import theory_check
    cfg = _config(args)
    G = make_group(cfg.group.spec(cfg.base_dir))
    k = BaseKernel(cfg.kernel.kind, gamma=cfg.kernel.gamma, degree=cfg.kernel.degree)
    rep = theory_check(G, k, sample_count=args.samples, seed=args.theory_seed, tol=args.tol)
    for line in rep.lines():
        print(line)
    if args.report:
        Path(args.report).write_text(rep.dumps() + "\n")
    if not rep.passed:
        failed = [r.name for r in rep.results if not r.passed]
        raise ValidationError(f"theory check failed: {', '.join(failed)}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .mmif import save_extractor
    from .pipeline import base_provenance, load_source, train
    cfg = _config(args)
    cfg.validate()
    ds, source = load_source(cfg)
    ex = train(cfg, ds, args.threads)
    prov = base_provenance(cfg)
    prov["input"] = source
    save_extractor(ex, args.out, extra_provenance=prov)
    log.info("wrote extractor with K=%d to %s", ex.output_dim, args.out)
    return EXIT_OK


def cmd_extract(args) -> int:
    from .data import load_dataset
    from .formats import sha256_file
    from .mmif import load_extractor
    from .pipeline import FeatureSet, extract, save_features
    ex = load_extractor(args.extractor)
    ds = load_dataset(args.dataset)
    split = ds[args.split]
    F = extract(ex, split.samples, args.threads)
    prov = {"invkern_version": __version__, "split": args.split,
            "extractor_manifest_sha256": sha256_file(Path(args.extractor) / "manifest.json"),
            "dataset_manifest_sha256": sha256_file(Path(args.dataset) / "manifest.json")}
    save_features(FeatureSet(F, split), args.out, prov)
    log.info("wrote %d x %d features to %s", F.shape[0], F.shape[1], args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .formats import sha256_file
    from .pipeline import evaluate, load_features
    cfg = _config(args)
    fs = load_features(args.features)
    prov = {"invkern_version": __version__, "eval": cfg.snapshot()["eval"],
            "features_sha256": sha256_file(Path(args.features) / "features.gram")}
    summary = evaluate(fs.features, fs.split.class_ids, cfg, args.out, args.threads, prov)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    from .pipeline import run_pipeline
    cfg = _config(args)
    summary = run_pipeline(cfg, threads=args.threads)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "check-theory": cmd_check_theory, "train": cmd_train,
            "extract": cmd_extract, "evaluate": cmd_evaluate, "pipeline": cmd_pipeline}


def _category(exc: InvkernError) -> tuple[str, int]:
    if isinstance(exc, ConfigError):
        return "config", EXIT_CONFIG
    if isinstance(exc, ValidationError):
        return "validation", EXIT_VALIDATION
    if isinstance(exc, InvkernRuntimeError):
        return "runtime", EXIT_RUNTIME
    return "runtime", EXIT_RUNTIME


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help / --version exit 0, usage errors exit 1
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="invkern: %(message)s", force=True)
    if args.threads < 1:
        print("invkern-error[config]: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except InvkernError as exc:
        cat, code = _category(exc)
        if code == EXIT_CONFIG:
            parser.print_usage(sys.stderr)
        print(f"invkern-error[{cat}]: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"invkern-error[runtime]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
