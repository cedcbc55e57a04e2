"""Power of the bootstrap SCB and ISDT tests against flat and bump alternatives.

    python scripts/run_power_curves.py [--out results/]
"""
import argparse
from pathlib import Path

from nsquant.experiments import load_spec, run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=ROOT / "results")
    ap.add_argument("--replicates", type=int)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("power_flat", "power_bump"):
        spec = load_spec(ROOT / "configs" / f"{name}.toml")
        if args.replicates:
            from dataclasses import replace
            spec = replace(spec, replicates=args.replicates).validate()
        table = run_experiment(spec)
        (out / f"{name}.csv").write_text(table.to_csv())
        print(f"== {name}")
        for r in table.rows:
            print(f"{r['test']:3} {r['scenario']:24} {100 * r['rate']:6.1f}% (se {100 * r['mc_se']:.1f})")


if __name__ == "__main__":
    main()
