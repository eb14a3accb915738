"""Run the six latency test cases and print a summary table.

Usage: ``python3 demos/latency_benchmarks.py [out.csv]``. Test cases 4 to 6
distribute the PaaS modules only through simulator latency coordinates.
"""

from __future__ import annotations

import sys

from fogpaas.bench import SCENARIOS, emit_report, run_benchmark


def main(argv: list[str]) -> None:
    rows = []
    print(f"{'case':<5} {'metric':<16} {'mean ms':>9} {'min':>6} {'max':>6}  layout")
    for sid in sorted(SCENARIOS):
        result = run_benchmark(sid, seed=0)
        rows += result.rows
        for metric, s in result.summary.items():
            print(f"{sid:<5} {metric:<16} {s['mean']:>9.1f} {s['min']:>6} {s['max']:>6}  "
                  f"{SCENARIOS[sid].description}")
    if argv:
        csv_path, plot_path = emit_report(rows, argv[0])
        print(f"wrote {csv_path} and {plot_path}")


if __name__ == "__main__":
    main(sys.argv[1:])
