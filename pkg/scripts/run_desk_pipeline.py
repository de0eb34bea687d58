"""Run the reduced-size pipeline (hidden sizes 1..15, 5 restarts) and print the report.

Usage: python3 scripts/run_desk_pipeline.py [--seed 0] [--out runs/desk] [--workers 1]
"""
import argparse
import time
from dataclasses import replace

from exfl import pipeline as pl


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = replace(pl.PipelineConfig.desk(seed=args.seed), workers=args.workers, out=args.out)
    t0 = time.perf_counter()
    report = pl.run_pipeline(cfg, args.out)
    print(pl.render_report(report))
    print(f"finished in {time.perf_counter() - t0:.1f}s, outputs in {args.out}")


if __name__ == "__main__":
    main()
