#!/usr/bin/env python3
"""
Collect every summary.json under a results directory into one CSV table.
One row per gate: run directory, kind, seed, gate name, value, threshold, passed.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from wavelab.utils.io import read_summary, write_csv  # noqa: E402

COLUMNS = ["run", "kind", "seed", "criterion", "gate", "value", "comparison", "threshold", "passed"]


def collect(results_dir: Path):
    """Rows for all gates of all summaries below results_dir, in path order."""
    rows = []
    for path in sorted(results_dir.rglob("summary.json")):
        summary = read_summary(path)
        for gate in summary.get("gates", []):
            rows.append(
                {
                    "run": path.parent.relative_to(results_dir).as_posix(),
                    "kind": summary["kind"],
                    "seed": summary["seed"],
                    "criterion": gate.get("criterion") if gate.get("criterion") is not None else "",
                    "gate": gate["name"],
                    "value": gate["value"] if gate["value"] is not None else "nan",
                    "comparison": gate["comparison"],
                    "threshold": gate["threshold"],
                    "passed": gate["passed"],
                }
            )
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("results_dir", type=Path)
    parser.add_argument("--out", type=Path, help="CSV path (default: <results_dir>/report.csv)")
    args = parser.parse_args(argv)

    if not args.results_dir.is_dir():
        print(f"❌ {args.results_dir} is not a directory")
        return 2
    rows = collect(args.results_dir)
    out = args.out or args.results_dir / "report.csv"
    write_csv(out, COLUMNS, rows)

    failed = [row for row in rows if not row["passed"]]
    print(f"Found {len(rows)} gate(s) in {len({row['run'] for row in rows})} run(s)")
    for row in failed:
        print(f"  ❌ {row['run']}: {row['gate']} = {row['value']}")
    print(f"{'✅' if not failed else '⚠️ '} Wrote {out}")
    return 0 if not failed else 1


if __name__ == "__main__":
    sys.exit(main())
