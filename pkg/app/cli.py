"""Command-line surface: train, count, probe, ablate, export.

Exit codes: 0 success, 1 library error (JSON diagnostic on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from app.config import config
from progtune.core.errors import ProgtuneError, UsageError
from progtune.modeling.config import SHIPPED_ARCHITECTURES, ArchitectureDims
from progtune.peft.config import PeftConfig
from progtune.tasks.runconfig import RunConfig, load_run_config

logger = logging.getLogger(__name__)

_HEADS = {"classifier": "classifier", "cls": "classifier", "qa": "qa_span", "qa_span": "qa_span"}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message, {"usage": self.format_usage().strip()})


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="progtune", description="Progressive fine-tuning experiments")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    train = sub.add_parser("train", help="train from a run-config file")
    train.add_argument("--config", required=True)
    train.add_argument("--mode", choices=["ft", "progtune"])
    train.add_argument("--variant", choices=["standard", "wolb", "fromhb"])
    train.add_argument("--peft", choices=["full", "adapter", "bitfit", "lora"])
    train.add_argument("--seed", type=int)
    train.add_argument("--repeats", type=int, default=1)
    train.add_argument("--workers", type=int, default=None)
    train.add_argument("--output-dir")
    train.add_argument("--no-store", action="store_true", help="skip the run store")

    count = sub.add_parser("count", help="static updated-parameter ledger, no training")
    count.add_argument("--arch", required=True, choices=sorted(SHIPPED_ARCHITECTURES) + ["custom"])
    count.add_argument("--epochs", type=int, required=True)
    count.add_argument("--mode", choices=["ft", "progtune"], default="ft")
    count.add_argument("--variant", choices=["standard", "wolb", "fromhb"], default="standard")
    count.add_argument("--peft", choices=["full", "adapter", "bitfit", "lora"], default="full")
    count.add_argument("--head", choices=sorted(_HEADS), default="classifier")
    count.add_argument("--bottleneck", type=int, default=64)
    count.add_argument("--rank", type=int, default=8)
    count.add_argument("--alpha", type=float, default=16.0)
    count.add_argument("--targets", default="Wq,Wv")
    count.add_argument("--pooler", dest="pooler", action="store_true", default=None)
    count.add_argument("--no-pooler", dest="pooler", action="store_false")
    count.add_argument("--dims", help="custom dims: L,d,heads,ffn,vocab,max_positions[,type_vocab]")
    count.add_argument("--json", action="store_true")

    for name, text in (("probe", "per-block probe sweep"), ("ablate", "standard vs wolb vs fromhb")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True)
        cmd.add_argument("--output-dir")
        if name == "ablate":
            cmd.add_argument("--no-store", action="store_true")

    export = sub.add_parser("export", help="re-render stored runs")
    export.add_argument("--run-id", type=int, action="append")
    export.add_argument("--name")
    export.add_argument("--merge", action="store_true", help="also write the mean over the selected runs")
    export.add_argument("--format", choices=["csv", "jsonl"])
    export.add_argument("--output-dir")
    return parser


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, config.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load(path: str) -> RunConfig:
    """Load a run config; a file without ``train.seed`` takes ``DEFAULT_SEED``."""
    run_config = load_run_config(path)
    if "seed" not in run_config.train.model_fields_set:
        run_config = run_config.with_overrides(seed=config.DEFAULT_SEED)
    return run_config


def _train_overrides(args: argparse.Namespace, run_config: RunConfig) -> RunConfig:
    overrides: Dict[str, Any] = {"mode": args.mode, "variant": args.variant, "seed": args.seed}
    if args.peft is not None:
        overrides["peft"] = {**run_config.train.peft.model_dump(mode="json"), "kind": args.peft}
    return run_config.with_overrides(**overrides)


async def _store(batches, kind) -> List[int]:
    """Persist ``(run_config, results)`` pairs in one session."""
    from app.db import AsyncSessionLocal, init_db
    from app.services.experiments import store_results

    await init_db()
    ids: List[int] = []
    async with AsyncSessionLocal() as session:
        for run_config, results in batches:
            ids.extend(await store_results(session, run_config, results, kind))
    return ids


def _cmd_train(args: argparse.Namespace) -> int:
    from app.db import RunKind
    from app.services.experiments import export_results, run_repeats

    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    run_config = _train_overrides(args, _load(args.config))
    workers = args.workers if args.workers is not None else config.MAX_WORKERS
    results = run_repeats(run_config, args.repeats, workers)
    paths = export_results(run_config, results, args.output_dir)
    if not args.no_store:
        ids = asyncio.run(_store([(run_config, results)], RunKind.TRAIN))
        logger.info(f"Stored runs {ids}")
    for path in paths:
        print(path)
    return 0


def _parse_dims(text: str) -> ArchitectureDims:
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--dims must be comma-separated integers, got {text!r}") from None
    if len(values) not in (6, 7):
        raise UsageError("--dims takes L,d,heads,ffn,vocab,max_positions[,type_vocab]")
    fields = ["num_blocks", "hidden_size", "num_heads", "ffn_dim", "vocab_size", "max_positions", "type_vocab_size"]
    return ArchitectureDims.parse(dict(zip(fields, values)))


def _millions(n: int) -> str:
    return f"{n / 1e6:.2f}M"


def _cmd_count(args: argparse.Namespace) -> int:
    from app.services.experiments import count_report

    if args.arch == "custom" and not args.dims:
        raise UsageError("--arch custom needs --dims")
    peft = PeftConfig.parse(
        {
            "kind": args.peft,
            "bottleneck": args.bottleneck,
            "rank": args.rank,
            "alpha": args.alpha,
            "targets": tuple(t.strip() for t in args.targets.split(",") if t.strip()),
        }
    )
    report = count_report(
        args.arch,
        args.epochs,
        mode=args.mode,
        peft=peft,
        head=_HEADS[args.head],
        variant=args.variant,
        include_pooler=args.pooler,
        dims=_parse_dims(args.dims) if args.dims else None,
    )
    if args.json:
        print(json.dumps(report.as_dict(), sort_keys=True))
        return 0
    per_epoch = ", ".join(_millions(n) for n in report.ledger.per_epoch)
    print(
        f"{report.arch} head={report.head} peft={report.peft} schedule={report.variant} epochs={report.epochs}: "
        f"params={_millions(report.total_params)} per_epoch=[{per_epoch}] "
        f"updated={_millions(report.ledger.cumulative)} full={_millions(report.full_ledger.cumulative)} "
        f"reduction={report.reduction:.3f}"
    )
    return 0


def _cmd_probe(args: argparse.Namespace) -> int:
    from app.services.experiments import run_probe, write_table

    run_config = _load(args.config)
    rows = run_probe(run_config)
    for row in rows:
        print(f"block {row['block']:>3}: eval_acc={row['eval_acc']:.4f}")
    print(write_table(run_config, rows, "probe", args.output_dir))
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    from app.db import RunKind
    from app.services.experiments import run_ablation, write_table

    run_config = _load(args.config)
    rows, results = run_ablation(run_config)
    print(f"{'variant':<10}{'eval_acc':>10}{'train_acc':>11}{'updated':>14}{'reduction':>11}")
    for row in rows:
        print(
            f"{row['variant']:<10}{row['eval_acc']:>10.4f}{row['train_acc']:>11.4f}"
            f"{row['updated_params']:>14}{row['reduction']:>11.3f}"
        )
    if not args.no_store:
        batches = [
            (run_config.with_overrides(mode="progtune", variant=row["variant"]), [result])
            for row, result in zip(rows, results)
        ]
        ids = asyncio.run(_store(batches, RunKind.ABLATE))
        logger.info(f"Stored runs {ids}")
    print(write_table(run_config, rows, "ablation", args.output_dir))
    return 0


async def _export(args: argparse.Namespace) -> List[Path]:
    from app.db import AsyncSessionLocal, init_db
    from app.services.run_store import fetch_run, list_runs, merge_stored
    from progtune.artifacts.export import export_ledger, export_metrics

    fmt = args.format or config.EXPORT_FORMAT
    directory = Path(args.output_dir or config.OUTPUT_DIR)
    await init_db()
    async with AsyncSessionLocal() as session:
        if args.run_id:
            ids = args.run_id
        else:
            ids = [run.id for run in await list_runs(session, args.name)]
        stored = []
        for run_id in ids:
            run = await fetch_run(session, run_id)
            if run is None:
                raise UsageError(f"no stored run with id {run_id}", {"run_id": run_id})
            stored.append(run)
    if not stored:
        raise UsageError("no stored runs match the selection")
    paths = []
    for s in stored:
        stem = f"{s.run.name}-run{s.run.id}"
        paths.append(export_metrics(s.metrics, s.ledger, directory / f"{stem}.{fmt}", fmt, s.run.reduction))
        paths.append(export_ledger(s.ledger, directory / f"{stem}-ledger.{fmt}", fmt))
    if args.merge:
        merged = merge_stored(stored)
        paths.append(
            export_metrics(merged.metrics, merged.ledger, directory / f"{merged.run.name}-mean.{fmt}", fmt, merged.run.reduction)
        )
    return paths


def _cmd_export(args: argparse.Namespace) -> int:
    for path in asyncio.run(_export(args)):
        print(path)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "count": _cmd_count,
    "probe": _cmd_probe,
    "ablate": _cmd_ablate,
    "export": _cmd_export,
}


def cli_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv`` and run the subcommand; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args.verbose)
        return _COMMANDS[args.command](args)
    except ProgtuneError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True, default=str), file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:
        # --help exits through argparse
        return int(exc.code or 0)
