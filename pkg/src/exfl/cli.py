"""Command-line entry point: ``exfl <subcommand> [flags]``.

Exit status: 0 success, 1 usage error, 2 stage failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset as ds
from . import pipeline as pl
from . import stats
from .errors import ConfigError, ExflError, StageFailure

EXIT_OK, EXIT_USAGE, EXIT_STAGE = 0, 1, 2
SUBCOMMANDS = ("simulate", "sample", "analyze", "train", "pipeline", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="exfl", description="Excitation-controller feature study pipeline.")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    helps = {
        "simulate": "run the disturbance scenarios and write traces plus the pooled dataset",
        "sample": "draw the stratified analysis sample from <out>/dataset.csv",
        "analyze": "correlation, regression, VIF, residual assessment and forward selection",
        "train": "network-growing sweep and ANN vs regression comparison",
        "pipeline": "all stages in order",
        "report": "re-render report.txt from the persisted outputs",
    }
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=helps[name], description=helps[name])
        s.add_argument("--config", metavar="PATH", help="flat key=value configuration file")
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        s.add_argument("--out", metavar="DIR", help="run directory (default: $EXFL_OUT or the config value)")
        s.add_argument("--models", metavar="IDS", help="comma-separated model ids for the sweep, e.g. M7,M8")
        s.add_argument("--hidden-range", metavar="A..B", help="hidden sizes to sweep, inclusive")
        s.add_argument("--restarts", type=int, metavar="N", help="random restarts per hidden size")
        s.add_argument("--workers", type=int, metavar="N", help="worker processes for simulation and sweep")
        s.add_argument("--desk", action="store_true", help="desk-scale sweep defaults (hidden 1..15, 5 restarts)")
    return p


def resolve_config(args):
    base = pl.PipelineConfig.desk() if args.desk else pl.PipelineConfig()
    cfg = pl.load_config(args.config, base) if args.config else base
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.hidden_range is not None:
        over["h_min"], over["h_max"] = pl.parse_range(args.hidden_range)
    if args.restarts is not None:
        if args.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        over["restarts"] = args.restarts
    if args.workers is not None:
        over["workers"] = max(1, args.workers)
    if args.models:
        ids = []
        for tok in args.models.split(","):
            try:
                ids.append(stats.paper_model(tok.strip()).id)
            except KeyError:
                raise ConfigError(f"unknown model id {tok.strip()!r}") from None
        over["mlp_models"] = tuple(ids)
    out = args.out or os.environ.get("EXFL_OUT")
    if out:
        over["out"] = out
    return replace(cfg, **over)


def _require(path, stage):
    if not Path(path).exists():
        raise StageFailure(stage, FileNotFoundError(f"missing input file {path}"))
    return path


def _load_sample(cfg, out):
    sample_path = out / "sample.csv"
    if sample_path.exists():
        return ds.read_dataset_csv(sample_path)
    pool = ds.read_dataset_csv(_require(out / "dataset.csv", "analyze"))
    return pl.sample_stage(cfg, pool)


def _cmd_simulate(cfg, out):
    chash = pl.config_hash(cfg)
    traces = pl.simulate_stage(cfg)
    pl.write_traces(out, traces, chash)
    pool = pl.pool_stage(cfg, traces)
    ds.write_dataset_csv(pool, out / "dataset.csv", chash)
    print(f"wrote {len(traces)} traces and {len(pool)} rows to {out}")


def _cmd_sample(cfg, out):
    pool = ds.read_dataset_csv(_require(out / "dataset.csv", "sample"))
    sample = pl.sample_stage(cfg, pool)
    ds.write_dataset_csv(sample, out / "sample.csv", pl.config_hash(cfg))
    print(f"wrote {len(sample)} sampled rows to {out / 'sample.csv'}")


def _cmd_analyze(cfg, out):
    sample = _load_sample(cfg, out)
    analysis = pl.analyze_stage(cfg, sample)
    pl.write_analysis(out, analysis, pl.config_hash(cfg))
    for c in analysis.correlation:
        print(f"{c.feature:6s} r={c.r:+.4f} p={c.p_value:.4g}")


def _cmd_train(cfg, out):
    pool = ds.read_dataset_csv(_require(out / "dataset.csv", "train"))
    splits = pl.split_stage(cfg, pool)
    comparison, sweeps = pl.sweep_stage(cfg, splits)
    pl.write_training(out, comparison, sweeps, pl.config_hash(cfg))
    for c in comparison:
        print(f"{c.model_id}: hidden={c.hidden} ANN mse={c.mse:.5g} mae={c.mae:.5g} | SR mse={c.sr_mse:.5g}")


def _cmd_pipeline(cfg, out):
    pl.run_pipeline(cfg, out)
    print(f"report written to {out / 'report.txt'}")


def _cmd_report(cfg, out):
    pool = ds.read_dataset_csv(_require(out / "dataset.csv", "report"))
    sample = _load_sample(cfg, out)
    analysis = pl.analyze_stage(cfg, sample)
    comparison = []
    t8 = out / "comparison.csv"
    if t8.exists():
        timing = pl.read_timing(out / "timing.csv")
        comparison = [replace(c, infer_time=timing.get(c.model_id, c.infer_time)) for c in pl.read_comparison(t8)]
    prov = pl._provenance(cfg, pool, sample, ())
    report = pl.RunReport(analysis.correlation, analysis.fits, analysis.assessments, analysis.forward,
                          analysis.forward_history, comparison, {}, prov)
    text = pl.render_report(report)
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)


COMMANDS = {
    "simulate": _cmd_simulate, "sample": _cmd_sample, "analyze": _cmd_analyze,
    "train": _cmd_train, "pipeline": _cmd_pipeline, "report": _cmd_report,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        cfg = resolve_config(args)
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except UsageError as exc:
        print(f"exfl: usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"exfl: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"exfl: usage error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except StageFailure as exc:
        print(f"exfl: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ExflError, OSError) as exc:
        print(f"exfl: stage '{args.command}' failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
