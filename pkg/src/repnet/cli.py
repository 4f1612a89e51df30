"""
Command-line entry point (``repnet``)

Usage:
    repnet gen-data --out data
    repnet train --manifest data --out runs/prl --rep prl
    repnet embed --checkpoint runs/prl/checkpoint.rpnc --manifest data --out runs/prl
    repnet index --gallery runs/prl/gallery.parquet --out runs/prl
    repnet query --gallery runs/prl/gallery.parquet --search bucket --with-eval --out runs/prl
    repnet eval --rankings runs/prl/rankings.csv --gallery runs/prl/gallery.parquet --out runs/prl
    repnet eval --checkpoint runs/prl/checkpoint.rpnc --manifest data --out runs/prl
    repnet cca --checkpoint runs/prl/checkpoint.rpnc --manifest data --out runs/prl
    repnet saliency --checkpoint runs/prl/checkpoint.rpnc --manifest data --sample 0 --shape 8x8
    repnet bench --synthetic 100000 --query-count 1000 --k 10
    repnet study --seeds 0 1 2 --rep prl --rep norep --out runs/study

Every subcommand accepts ``--config``, ``--seed`` and ``--out``; ``--verbose``
turns on INFO logging. Reports are printed as ``key=value`` lines and written
next to the other outputs.

Exit status: 0 success, 1 usage/config error, 2 data or format error,
3 numerical error. Failures print one line ``error: <Class>: <message>`` to
standard error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .analysis.saliency import Occluder, occlusion_saliency, write_pgm, write_saliency_csv
from .config import RunConfig, load_runtime_settings
from .data.synthetic import generate_synthetic
from .domain.errors import EXIT_DATA, ParamValidationError, RepNetError, UsageError
from .domain.models import FEATURE_NAMES, Dataset, RepressionKind
from .network import RepNetParams
from .pipelines.evaluation import (
    SEARCH_MODES,
    adopt_checkpoint,
    build_gallery,
    evaluate_checkpoint,
    evaluate_rankings,
    rankings_frame,
    read_queries,
    read_rankings,
    repression_cca,
    search_queries,
    write_queries,
)
from .pipelines.study import run_repression_study
from .pipelines.training import check_dataset_fits, train_model, write_training_outputs
from .retrieval.bench import bench, synthetic_gallery
from .retrieval.gallery import Gallery, read_gallery, write_gallery
from .retrieval.index import build_bucket_index, bucket_stats
from .retrieval.queries import QUERY_MODES, select_queries
from .storage.checkpoint import load_checkpoint
from .storage.manifest import read_manifest, write_manifest
from .storage.schema import SPLITS
from .storage.writers import format_report, write_csv, write_report

logger = logging.getLogger(__name__)

GALLERY_FILE = "gallery.parquet"
RANKINGS_FILE = "rankings.csv"
QUERIES_FILE = "queries.csv"
INDEX_REPORT = "index_report.txt"
EVAL_REPORT = "eval_report.txt"
CCA_REPORT = "cca_report.txt"
BENCH_REPORT = "bench_report.txt"
SALIENCY_CSV = "saliency.csv"
SALIENCY_PGM = "saliency.pgm"
STUDY_FILE = "study.csv"

REP_CHOICES = [k.value for k in RepressionKind]


class RepNetArgumentParser(argparse.ArgumentParser):
    """argparse parser whose errors become ``UsageError`` (exit 1) after printing usage."""

    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -----------------------------------------------------------------------------
# Shared helpers
# -----------------------------------------------------------------------------

def _load_config(args: argparse.Namespace) -> RunConfig:
    """Config file (or shipped default) plus the flags that override it."""
    overrides: Dict[str, Any] = {}
    model: Dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        model["seed"] = args.seed
    if isinstance(getattr(args, "rep", None), str):
        model["rep_kind"] = args.rep
    if model:
        overrides["model"] = model
    retrieval: Dict[str, Any] = {}
    if getattr(args, "k", None) is not None:
        retrieval["k"] = args.k
    if getattr(args, "search", None) is not None:
        retrieval["search"] = args.search
    if getattr(args, "query_mode", None) is not None:
        retrieval["query_mode"] = args.query_mode
    if retrieval:
        overrides["retrieval"] = retrieval
    if getattr(args, "steps", None) is not None:
        overrides["train"] = {"steps": args.steps}
    return RunConfig.load(args.config, overrides=overrides)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(values: Dict[str, Any]) -> None:
    sys.stdout.write(format_report(values))


def _load_trained(args: argparse.Namespace) -> Tuple[RepNetParams, RunConfig, Dataset]:
    """Checkpoint + manifest, with the run config adopting the checkpoint's model."""
    run_config = _load_config(args)
    dataset = read_manifest(args.manifest)
    params, model = load_checkpoint(args.checkpoint)
    run_config = adopt_checkpoint(run_config, model, dataset)
    check_dataset_fits(dataset, run_config)
    return params, run_config, dataset


def _query_rows(args: argparse.Namespace, gallery: Gallery, run_config: RunConfig) -> np.ndarray:
    if getattr(args, "queries", None):
        return gallery.rows_by_sample_idx(read_queries(args.queries))
    r = run_config.retrieval
    count = getattr(args, "query_count", None) or r.query_count
    return select_queries(gallery, count, r.query_mode, run_config.model.seed)


# -----------------------------------------------------------------------------
# Subcommands
# -----------------------------------------------------------------------------

def cmd_gen_data(args: argparse.Namespace) -> int:
    run_config = _load_config(args)
    dataset = generate_synthetic(run_config.data, run_config.model.seed)
    target = write_manifest(dataset, _out_dir(args))
    _emit({
        "manifest": str(target),
        "samples": len(dataset),
        "identities": len(dataset.indices_by_id()),
        "feature_dim": dataset.feature_dim,
    })
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    run_config = _load_config(args)
    dataset = read_manifest(args.manifest)
    result = train_model(run_config, dataset)
    paths = write_training_outputs(result, _out_dir(args))
    last = result.loss_log.iloc[-1] if len(result.loss_log) else None
    _emit({
        "checkpoint": str(paths["checkpoint"]),
        "loss_log": str(paths["loss_log"]),
        "steps": len(result.loss_log),
        "initial_triplet": result.initial_triplet,
        "final_triplet": result.final_triplet,
        "final_total": float(last["total"]) if last is not None else None,
    })
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    params, run_config, dataset = _load_trained(args)
    gallery = build_gallery(params, run_config, dataset, args.split, true_attributes=args.true_attributes)
    target = write_gallery(_out_dir(args) / GALLERY_FILE, gallery)
    _emit({"gallery": str(target), "entries": len(gallery), "split": args.split})
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    gallery = read_gallery(args.gallery)
    stats = bucket_stats(build_bucket_index(gallery))
    write_report(_out_dir(args) / INDEX_REPORT, stats)
    _emit(stats)
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    run_config = _load_config(args)
    r = run_config.retrieval
    gallery = read_gallery(args.gallery)
    rows = _query_rows(args, gallery, run_config)
    results = search_queries(gallery, rows, r.k, r.search, exclude_self=r.exclude_self)
    frame = rankings_frame(gallery, rows, results)
    out = _out_dir(args)
    write_csv(out / RANKINGS_FILE, frame)
    write_queries(out / QUERIES_FILE, gallery, rows)
    values: Dict[str, Any] = {"rankings": str(out / RANKINGS_FILE), "queries": len(rows), "search": r.search, "k": r.k}
    if args.with_eval:
        report = evaluate_rankings(
            frame,
            gallery,
            r.precision_ks,
            query_idx=gallery.sample_idx[rows],
            exclude_self=r.exclude_self,
            search=r.search,
        )
        write_report(out / EVAL_REPORT, report.as_dict())
        values.update(report.as_dict())
    _emit(values)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    run_config = _load_config(args)
    r = run_config.retrieval
    out = _out_dir(args)
    if args.rankings:
        if not args.gallery:
            raise UsageError("eval --rankings needs --gallery")
        gallery = read_gallery(args.gallery)
        frame = read_rankings(args.rankings)
        query_idx = read_queries(args.queries) if args.queries else None
        values = evaluate_rankings(
            frame, gallery, r.precision_ks, query_idx=query_idx, exclude_self=r.exclude_self, search=r.search
        ).as_dict()
    elif args.checkpoint and args.manifest:
        params, run_config, dataset = _load_trained(args)
        evaluation = evaluate_checkpoint(params, run_config, dataset)
        write_csv(out / RANKINGS_FILE, evaluation.rankings)
        values = evaluation.as_dict()
    else:
        raise UsageError("eval needs --rankings/--gallery or --checkpoint/--manifest")
    write_report(out / EVAL_REPORT, values)
    _emit(values)
    return 0


def cmd_cca(args: argparse.Namespace) -> int:
    params, run_config, dataset = _load_trained(args)
    report = repression_cca(params, run_config, dataset, args.split)
    values = {"rep_kind": run_config.model.rep_kind.value, "split": args.split or run_config.analysis.cca_split}
    values.update(report.as_dict())
    write_report(_out_dir(args) / CCA_REPORT, values)
    _emit(values)
    return 0


def _parse_shape(text: Optional[str], dim: int) -> Optional[Tuple[int, int]]:
    if not text:
        return None
    try:
        h, w = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise ParamValidationError(f"--shape must look like HxW, got {text!r}") from None
    if h < 1 or w < 1 or h * w != dim:
        raise ParamValidationError(f"--shape {h}x{w} does not cover {dim} input features")
    return h, w


def cmd_saliency(args: argparse.Namespace) -> int:
    params, run_config, dataset = _load_trained(args)
    a = run_config.analysis
    matches = np.flatnonzero(dataset.sample_idx == args.sample)
    if matches.size == 0:
        raise ParamValidationError(f"sample {args.sample} is not in the manifest")
    sample = dataset.sample(int(matches[0]))
    x = sample.features
    shape = _parse_shape(args.shape, dataset.feature_dim)
    if shape is not None:
        x = x.reshape(shape)
    occluder = Occluder(
        size=args.size if args.size is not None else a.occluder_size,
        stride=args.stride if args.stride is not None else a.occluder_stride,
        fill=args.fill if args.fill is not None else a.occluder_fill,
    )
    feature = args.feature or a.target_feature
    threads = load_runtime_settings().threads
    saliency = occlusion_saliency(params, run_config.model, x, feature, occluder, threads=threads)
    out = _out_dir(args)
    write_saliency_csv(out / SALIENCY_CSV, saliency)
    write_pgm(out / SALIENCY_PGM, saliency)
    _emit({
        "feature": feature,
        "sample": args.sample,
        "vehicle_id": sample.vehicle_id,
        "view": sample.view.value,
        "size": saliency.size,
        "stride": saliency.stride,
        "grid": "x".join(str(n) for n in saliency.grid.shape),
        "max": float(saliency.values.max()),
    })
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    run_config = _load_config(args)
    if args.gallery:
        gallery = read_gallery(args.gallery)
    elif args.synthetic:
        gallery = synthetic_gallery(args.synthetic, seed=run_config.model.seed)
    else:
        raise UsageError("bench needs --gallery or --synthetic")
    rows = _query_rows(args, gallery, run_config)
    report = bench(gallery, rows, run_config.retrieval.k, args.repetitions)
    write_report(_out_dir(args) / BENCH_REPORT, report.as_dict())
    _emit(report.as_dict())
    return 0


def cmd_study(args: argparse.Namespace) -> int:
    run_config = _load_config(args)
    kinds = [RepressionKind(k) for k in (args.rep or REP_CHOICES)]
    seeds = args.seeds if args.seeds else [run_config.model.seed]
    dataset = read_manifest(args.manifest) if args.manifest else None
    frame = run_repression_study(run_config, kinds, seeds, dataset=dataset)
    target = write_csv(_out_dir(args) / STUDY_FILE, frame)
    sys.stdout.write(frame.to_string(index=False) + "\n")
    logger.info("[study] written to %s", target)
    return 0


# -----------------------------------------------------------------------------
# Parser
# -----------------------------------------------------------------------------

def build_parser() -> RepNetArgumentParser:
    common = RepNetArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON run configuration (default: config/settings.yaml)")
    common.add_argument("--seed", type=int, help="Run seed (overrides model.seed)")
    common.add_argument("--out", default=".", help="Output directory (default: current directory)")
    common.add_argument("--verbose", action="store_true", help="INFO logging on stderr")

    parser = RepNetArgumentParser(
        prog="repnet",
        description="Repression network training, retrieval and analysis on synthetic vehicle data",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Smoke path with the shipped defaults
  repnet gen-data --out data
  repnet train --manifest data --out runs/prl
  repnet eval --checkpoint runs/prl/checkpoint.rpnc --manifest data --out runs/prl

  # Bucket search with evaluation
  repnet query --gallery runs/prl/gallery.parquet --search bucket --k 20 --with-eval
        """,
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=RepNetArgumentParser)

    p = sub.add_parser("gen-data", parents=[common], help="Generate a synthetic dataset (manifest + features)")
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="Train a network on a manifest")
    p.add_argument("--manifest", required=True, help="Dataset directory written by gen-data")
    p.add_argument("--rep", choices=REP_CHOICES, help="Repression layer kind")
    p.add_argument("--steps", type=int, help="Training steps (overrides train.steps)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("embed", parents=[common], help="Embed a dataset into a gallery file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=SPLITS, default="all")
    p.add_argument("--true-attributes", action="store_true", help="One-hot label probabilities for training rows")
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("index", parents=[common], help="Bucket statistics of a gallery")
    p.add_argument("--gallery", required=True)
    p.set_defaults(handler=cmd_index)

    p = sub.add_parser("query", parents=[common], help="Rank a gallery for a query list")
    p.add_argument("--gallery", required=True)
    p.add_argument("--queries", help="CSV with a query_idx column (default: selected per config)")
    p.add_argument("--query-count", type=int)
    p.add_argument("--query-mode", choices=QUERY_MODES)
    p.add_argument("--k", type=int)
    p.add_argument("--search", choices=SEARCH_MODES)
    p.add_argument("--with-eval", action="store_true", help="Also print MAP and precision@k")
    p.set_defaults(handler=cmd_query)

    p = sub.add_parser("eval", parents=[common], help="MAP / precision@k of rankings or of a checkpoint")
    p.add_argument("--rankings")
    p.add_argument("--gallery")
    p.add_argument("--queries")
    p.add_argument("--checkpoint")
    p.add_argument("--manifest")
    p.add_argument("--k", type=int)
    p.add_argument("--search", choices=SEARCH_MODES)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("cca", parents=[common], help="Canonical correlation between F_SLS-1 and F_SLS-2")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=SPLITS)
    p.set_defaults(handler=cmd_cca)

    p = sub.add_parser("saliency", parents=[common], help="Occlusion saliency map of one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--sample", type=int, required=True, help="sample_idx from the manifest")
    p.add_argument("--feature", choices=FEATURE_NAMES)
    p.add_argument("--size", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--fill", type=float)
    p.add_argument("--shape", help="View the input as an HxW grid")
    p.set_defaults(handler=cmd_saliency)

    p = sub.add_parser("bench", parents=[common], help="Linear vs bucket search timing")
    p.add_argument("--gallery")
    p.add_argument("--synthetic", type=int, help="Benchmark a synthetic gallery of this size")
    p.add_argument("--queries")
    p.add_argument("--query-count", type=int)
    p.add_argument("--query-mode", choices=QUERY_MODES)
    p.add_argument("--k", type=int)
    p.add_argument("--repetitions", type=int, default=3)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("study", parents=[common], help="Compare repression kinds on identical data")
    p.add_argument("--manifest", help="Shared dataset (default: generated per seed)")
    p.add_argument("--rep", choices=REP_CHOICES, action="append", help="Kind to include (repeatable; default all)")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--steps", type=int)
    p.set_defaults(handler=cmd_study)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            raise UsageError("a subcommand is required")
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
            force=True,
        )
        return args.handler(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except RepNetError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {_one_line(exc)}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {_one_line(exc)}\n")
        return EXIT_DATA


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["RepNetArgumentParser", "build_parser", "main"]
