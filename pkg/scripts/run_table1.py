"""Desk-scale type I error table for the six tests.

    python scripts/run_table1.py [--spec configs/table1_desk.toml] [--out results/table1.csv]

Set NSQUANT_THREADS to cap the number of worker processes.
"""
import argparse
import sys
from pathlib import Path

from nsquant.experiments import load_spec, run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", default=ROOT / "configs" / "table1_desk.toml")
    ap.add_argument("--out", default=ROOT / "results" / "table1.csv")
    ap.add_argument("--replicates", type=int)
    args = ap.parse_args()
    spec = load_spec(args.spec)
    if args.replicates:
        from dataclasses import replace
        spec = replace(spec, replicates=args.replicates).validate()
    table = run_experiment(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(table.to_csv())
    # wide view: one line per test, one column per (alpha, scenario)
    cells = sorted({(r["alpha"], r["scenario"]) for r in table.rows})
    print("test " + " ".join(f"{a:>5}/{s}" for a, s in cells))
    for test in spec.tests:
        rates = {(r["alpha"], r["scenario"]): r["rate"] for r in table.rows if r["test"] == test}
        print(f"{test:4} " + " ".join(f"{100 * rates[c]:7.1f}%" for c in cells))
    for key, count in table.failures.items():
        print(f"failed replicates {key}: {count}", file=sys.stderr)


if __name__ == "__main__":
    main()
