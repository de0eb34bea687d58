"""Simulate the default 120 ms terminal fault and report settling of V_T and delta.

Usage: python3 scripts/simulate_fault.py [--duration 0.12] [--csv trace.csv]
"""
import argparse

import numpy as np

from exfl.simulator import DisturbanceEvent, run_scenario, write_trace_csv


def settle_time(t, x, t_event, t_clear, band=0.02):
    ref = x[t < t_event][-1]
    outside = np.abs(x - ref) > band * abs(ref)
    if not outside.any():
        return 0.0
    return max(0.0, t[outside].max() - t_clear)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=0.120)
    ap.add_argument("--t-end", type=float, default=10.0)
    ap.add_argument("--trip", action="store_true", help="clear the fault by tripping one circuit")
    ap.add_argument("--csv", help="write the sampled trace to this path")
    args = ap.parse_args()

    fault = DisturbanceEvent.fault(1.0, args.duration, cleared_by_trip=args.trip)
    tr = run_scenario(events=(fault,), t_end=args.t_end)
    t = tr.column("t")
    t_clear = fault.t_start + fault.duration
    for name in ("V_T", "delta", "omega", "V_f"):
        x = tr.column(name)
        print(f"{name:6s} pre={x[t < fault.t_start][-1]:.5f} final={x[-1]:.5f} "
              f"min={x.min():.5f} max={x.max():.5f} settle(2%)={settle_time(t, x, fault.t_start, t_clear):.2f}s")
    if args.csv:
        write_trace_csv(tr, args.csv)
        print(f"trace written to {args.csv}")


if __name__ == "__main__":
    main()
