"""Command line front end: ``nsquant estimate | test | experiment``.

Exit codes: 0 completed, 2 input error, 3 numerical failure. ``test`` exits
0 whether or not the null is rejected.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from nsquant import __version__
from nsquant import inference as inf
from nsquant.bandwidth import MIN_N, plan
from nsquant.curves import EvalGrid, SeriesSample
from nsquant.errors import NsquantError
from nsquant.experiments import ExperimentSpec, load_spec, run_experiment
from nsquant.quantreg import polynomial_basis

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (NsquantError, ArithmeticError, np.linalg.LinAlgError)
NULL_DEGREES = {"constant": 0, "linear": 1, "quadratic": 2}


class InputError(Exception):
    """Unusable input: missing files, unparsable values, invalid settings."""


# Configuration ---------------------------------------------------------------

@dataclass
class RunConfig:
    input_path: str | None = None
    column: str | None = None
    time_column: str | None = None
    alphas: tuple = (0.5,)
    test: str = "both"
    mode: str = "bootstrap"
    beta: float = 0.05
    bandwidth: float | None = None
    bootstrap_b: int = inf.DEFAULT_REPLICATES
    grid: int = 200
    seed: int = 0
    null: str = "constant"
    output: str | None = None
    format: str = "json"

    def check(self) -> "RunConfig":
        if not self.alphas or any(not 0 < a < 1 for a in self.alphas):
            raise InputError("every --alpha must lie in (0, 1)")
        if not 0 < self.beta < 1:
            raise InputError("--beta must lie in (0, 1)")
        if self.bootstrap_b < inf.MIN_REPLICATES:
            raise InputError(f"--bootstrap-b must be at least {inf.MIN_REPLICATES}")
        if self.grid < 2:
            raise InputError("--grid must be at least 2")
        if self.bandwidth is not None and not 0 < self.bandwidth < 0.5 / math.sqrt(2):
            raise InputError("--bandwidth must lie in (0, 0.5/sqrt(2))")
        if self.test not in ("scb", "isdt", "both"):
            raise InputError("--test must be scb, isdt or both")
        if self.mode not in ("bootstrap", "asymptotic"):
            raise InputError("--mode must be bootstrap or asymptotic")
        if self.format not in ("json", "csv"):
            raise InputError("--format must be json or csv")
        if self.null not in NULL_DEGREES and not self.null.startswith("file:"):
            raise InputError("--null must be constant, linear, quadratic or file:PATH")
        return self


CONFIG_KEYS = {
    "input": "input_path", "column": "column", "time_column": "time_column", "alpha": "alphas",
    "test": "test", "mode": "mode", "beta": "beta", "bandwidth": "bandwidth",
    "bootstrap_b": "bootstrap_b", "grid": "grid", "seed": "seed", "null": "null",
    "output": "output", "format": "format",
}
FIELD_TYPES = {"beta": float, "bandwidth": float, "bootstrap_b": int, "grid": int, "seed": int}


def _read_toml(path: str) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib
    else:  # pragma: no cover
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: {exc}") from None


def _coerce(name: str, value):
    if name == "alphas":
        vals = value if isinstance(value, (list, tuple)) else [value]
        return tuple(float(v) for v in vals)
    if name in FIELD_TYPES and value is not None:
        return FIELD_TYPES[name](value)
    return value


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overridden by the config file, overridden by CLI flags."""
    cfg = RunConfig()
    layers = []
    if getattr(args, "config", None):
        raw = _read_toml(args.config)
        unknown = set(raw) - set(CONFIG_KEYS)
        if unknown:
            raise InputError(f"{args.config}: unknown keys {sorted(unknown)}")
        layers.append({CONFIG_KEYS[k]: v for k, v in raw.items()})
    layers.append({CONFIG_KEYS[k]: getattr(args, k) for k in CONFIG_KEYS
                   if getattr(args, k, None) is not None})
    for layer in layers:
        try:
            cfg = replace(cfg, **{k: _coerce(k, v) for k, v in layer.items()})
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad configuration value: {exc}") from None
    return cfg.check()


# Input -----------------------------------------------------------------------

@dataclass
class SeriesInput:
    values: np.ndarray
    labels: np.ndarray | None = None
    header: list = field(default_factory=list)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _column_index(selector: str | None, header: list, width: int, default: int) -> int:
    if selector is None:
        return default
    if selector in header:
        return header.index(selector)
    if selector.lstrip("-").isdigit():
        idx = int(selector)
        if -width <= idx < width:
            return idx % width
    raise InputError(f"column {selector!r} not found (header: {header or 'none'})")


def read_series(path: str, column: str | None = None, time_column: str | None = None) -> SeriesInput:
    """One value column from a CSV file with an optional header row.

    The value column defaults to the last column. Times are always taken as
    i/n; a time column only labels the output.
    """
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise InputError(f"input file not found: {path}") from None
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    rows = [(i + 1, r) for i, r in enumerate(csv.reader(io.StringIO(text)))
            if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: no data")
    width = len(rows[0][1])
    header = []
    if not all(_is_number(c) for c in rows[0][1]):
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    vcol = _column_index(column, header, width, width - 1)
    tcol = None if time_column is None else _column_index(time_column, header, width, 0)
    values, labels = [], []
    for lineno, row in rows:
        if len(row) != width:
            raise InputError(f"{path}:{lineno}: expected {width} fields, found {len(row)}")
        cell = row[vcol].strip()
        try:
            v = float(cell)
        except ValueError:
            raise InputError(f"{path}:{lineno}: cannot parse {cell!r} as a number") from None
        if not math.isfinite(v):
            raise InputError(f"{path}:{lineno}: non-finite value {cell!r}")
        values.append(v)
        if tcol is not None:
            labels.append(row[tcol].strip())
    return SeriesInput(np.array(values), np.array(labels) if tcol is not None else None, header)


def _sample(cfg: RunConfig) -> tuple[SeriesSample, SeriesInput]:
    if cfg.input_path is None:
        raise InputError("--input is required")
    series = read_series(cfg.input_path, cfg.column, cfg.time_column)
    if series.values.size < MIN_N:
        raise InputError(f"need at least {MIN_N} observations, found {series.values.size}")
    return SeriesSample(series.values), series


def null_curve(cfg: RunConfig, sample: SeriesSample, level: float):
    """(null callable, description) for the configured null."""
    if cfg.null in NULL_DEGREES:
        basis = polynomial_basis(NULL_DEGREES[cfg.null])
        fn, desc = inf.fit_null(sample, level, basis)
        return fn, f"{cfg.null}: {desc}"
    path = cfg.null[len("file:"):]
    data = read_table(path)
    if data.shape[1] == 1:
        if data.shape[0] != sample.n:
            raise InputError(f"{path}: one-column null needs {sample.n} values, found {data.shape[0]}")
        t, v = sample.times, data[:, 0]
    else:
        t, v = data[:, 0], data[:, 1]
        if np.any(np.diff(t) <= 0):
            raise InputError(f"{path}: null times must be strictly increasing")
    return (lambda s: np.interp(s, t, v)), f"file: {path}"


def read_table(path: str) -> np.ndarray:
    """Numeric CSV (optional header) as a 2-d array, with line-numbered errors."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    out = []
    width = None
    for i, row in enumerate(csv.reader(io.StringIO(text))):
        if not row or not any(c.strip() for c in row):
            continue
        if width is None and not all(_is_number(c) for c in row):
            width = len(row)
            continue
        width = width or len(row)
        if len(row) != width:
            raise InputError(f"{path}:{i + 1}: expected {width} fields, found {len(row)}")
        try:
            out.append([float(c) for c in row])
        except ValueError:
            raise InputError(f"{path}:{i + 1}: non-numeric field") from None
    if not out:
        raise InputError(f"{path}: no data")
    return np.array(out)


# Serialisation ---------------------------------------------------------------

def _num(x):
    """JSON-safe float; repr round-trips bit for bit."""
    x = float(x)
    return x if math.isfinite(x) else None


def _vec(a):
    return None if a is None else [_num(v) for v in np.asarray(a)]


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def versions() -> dict:
    return {"nsquant": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _emit(text: str, output: str | None):
    if output is None:
        sys.stdout.write(text)
    else:
        try:
            Path(output).write_text(text)
        except OSError as exc:
            raise InputError(f"cannot write {output}: {exc}") from None


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def _write_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# estimate --------------------------------------------------------------------

ESTIMATE_COLUMNS = ("alpha", "t", "label", "q_hat", "q_tilde", "sigma", "density",
                    "band_lower", "band_upper", "bandwidth")


def estimate(cfg: RunConfig) -> dict:
    sample, series = _sample(cfg)
    curves = []
    for level in cfg.alphas:
        p = plan(sample, level)
        b = cfg.bandwidth if cfg.bandwidth is not None else p.b_jack
        inputs = inf.prepare(sample, level, b, cfg.grid)
        band = inf.scb_bootstrap(inputs.curve, inputs.nuisance, inputs.curve.q, cfg.beta,
                                 cfg.bootstrap_b, cfg.seed)
        pts = inputs.curve.grid.points
        labels = None
        if series.labels is not None:
            idx = np.clip(np.rint(pts * sample.n).astype(int) - 1, 0, sample.n - 1)
            labels = [str(series.labels[i]) for i in idx]
        curves.append({
            "alpha": level, "bandwidth": _num(b),
            "plan": {k: _num(v) for k, v in vars(p).items()},
            "grid": _vec(pts), "labels": labels,
            "q_hat": _vec(inputs.q_hat), "q_tilde": _vec(inputs.curve.q),
            "sigma": _vec(inputs.nuisance.sigma), "density": _vec(inputs.nuisance.density),
            "band_lower": _vec(band.band_lower), "band_upper": _vec(band.band_upper),
            "band_beta": cfg.beta, "bootstrap_b": cfg.bootstrap_b, "seed": cfg.seed,
        })
    return {"command": "estimate", "input": cfg.input_path, "n": sample.n,
            "versions": versions(), "curves": curves}


def estimate_csv(doc: dict) -> str:
    rows = []
    for c in doc["curves"]:
        for j in range(len(c["grid"])):
            rows.append([_fmt(c["alpha"]), _fmt(c["grid"][j]),
                         "" if c["labels"] is None else c["labels"][j]]
                        + [_fmt(c[k][j]) for k in ESTIMATE_COLUMNS[3:-1]] + [_fmt(c["bandwidth"])])
    return _write_csv(ESTIMATE_COLUMNS, rows)


def read_estimate(path: str) -> dict:
    """Numbers of an emitted estimate file, keyed by alpha."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise InputError(f"file to verify not found: {path}") from None
    out = {}
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        for c in doc["curves"]:
            out[float(c["alpha"])] = {k: np.array(c[k], dtype=float) for k in ESTIMATE_COLUMNS[3:-1]} | \
                {"t": np.array(c["grid"], dtype=float)}
        return out
    reader = csv.DictReader(io.StringIO(text))
    cols = {}
    for row in reader:
        cols.setdefault(float(row["alpha"]), []).append(row)
    for a, rows in cols.items():
        out[a] = {k: np.array([float(r[k]) for r in rows]) for k in ("t",) + ESTIMATE_COLUMNS[3:-1]}
    return out


def verify_estimate(cfg: RunConfig, path: str) -> list[str]:
    """Recompute the estimate and list every field that differs bitwise from ``path``."""
    stored = read_estimate(path)
    fresh = read_estimate_doc(estimate(cfg))
    problems = []
    if set(stored) != set(fresh):
        return [f"alpha levels differ: file {sorted(stored)} vs recomputed {sorted(fresh)}"]
    for a in fresh:
        for k, v in fresh[a].items():
            s = stored[a][k]
            if s.shape != v.shape or not np.array_equal(s.view(np.uint64), v.view(np.uint64)):
                problems.append(f"alpha={a!r}: field {k} differs")
    return problems


def read_estimate_doc(doc: dict) -> dict:
    return {float(c["alpha"]): {k: np.array(c[k], dtype=float) for k in ESTIMATE_COLUMNS[3:-1]}
            | {"t": np.array(c["grid"], dtype=float)} for c in doc["curves"]}


# test ------------------------------------------------------------------------

def _methods(cfg: RunConfig) -> list[str]:
    kinds = ["scb", "isdt"] if cfg.test == "both" else [cfg.test]
    table = {("scb", "bootstrap"): inf.SCB_BOOTSTRAP, ("scb", "asymptotic"): inf.SCB_ASYMPTOTIC,
             ("isdt", "bootstrap"): inf.ISDT_BOOTSTRAP, ("isdt", "asymptotic"): inf.ISDT_ASYMPTOTIC}
    return [table[(k, cfg.mode)] for k in kinds]


def report_dict(rep: inf.TestReport, cfg: RunConfig) -> dict:
    return {"method": rep.method, "alpha": rep.level_alpha, "beta": rep.test_size_beta,
            "statistic": _num(rep.statistic), "critical_value": _num(rep.critical_value),
            "p_value": _num(rep.p_value), "reject": rep.reject, "bandwidth": _num(rep.bandwidth),
            "null": rep.null_description, "seed": cfg.seed,
            "bootstrap_b": cfg.bootstrap_b if "bootstrap" in rep.method else None,
            "grid": _vec(rep.grid), "band_lower": _vec(rep.band_lower),
            "band_upper": _vec(rep.band_upper),
            "details": {k: (_num(v) if isinstance(v, float) else v) for k, v in rep.details.items()}}


def run_tests(cfg: RunConfig) -> dict:
    sample, _ = _sample(cfg)
    reports = []
    for level in cfg.alphas:
        null, desc = null_curve(cfg, sample, level)
        p = plan(sample, level) if cfg.bandwidth is None else None
        cache = {}
        for method in _methods(cfg):
            if cfg.bandwidth is not None:
                b = cfg.bandwidth
            else:
                b = p.b_isdt if method.startswith("ISDT") else p.b_jack
            if b not in cache:
                cache[b] = inf.prepare(sample, level, b, cfg.grid)
            rep = inf.run_test(cache[b], null, method, cfg.beta, cfg.bootstrap_b, cfg.seed,
                               null_description=desc)
            reports.append(report_dict(rep, cfg))
    return {"command": "test", "input": cfg.input_path, "n": sample.n, "versions": versions(),
            "reports": reports}


TEST_COLUMNS = ("method", "alpha", "beta", "statistic", "critical_value", "p_value", "reject",
                "bandwidth", "null")


def tests_csv(doc: dict) -> str:
    rows = []
    for r in doc["reports"]:
        rows.append([r["method"], _fmt(r["alpha"]), _fmt(r["beta"]), _fmt(r["statistic"]),
                     _fmt(r["critical_value"]), _fmt(r["p_value"]), str(r["reject"]).lower(),
                     _fmt(r["bandwidth"]), r["null"]])
    return _write_csv(TEST_COLUMNS, rows)


# experiment ------------------------------------------------------------------

def experiment(args) -> str:
    try:
        spec = load_spec(args.spec)
    except FileNotFoundError:
        raise InputError(f"experiment spec not found: {args.spec}") from None
    except ValueError as exc:
        raise InputError(f"{args.spec}: {exc}") from None
    overrides = {k: getattr(args, k) for k in ("seed", "replicates", "bootstrap_b")
                 if getattr(args, k) is not None}
    if overrides:
        spec = replace(spec, **overrides)
        probs = spec.problems()
        if probs:
            raise InputError("; ".join(probs))
    progress = None
    if args.progress:
        def progress(i, total):
            print(f"replicate {i}/{total}", file=sys.stderr)
    table = run_experiment(spec, progress=progress)
    for (test, alpha, scen), count in table.failures.items():
        print(f"warning: {count} replicate(s) failed for test={test} alpha={alpha} "
              f"scenario={scen} and were excluded", file=sys.stderr)
    if args.format == "json":
        return json.dumps(table.to_json(), indent=1, allow_nan=True) + "\n"
    return table.to_csv()


# Entry point -----------------------------------------------------------------

def _common(p: argparse.ArgumentParser, with_tests: bool):
    p.add_argument("--config", help="TOML file with default settings (CLI flags win)")
    p.add_argument("--input", help="CSV file with the series")
    p.add_argument("--column", help="value column name or index (default: last)")
    p.add_argument("--time-column", dest="time_column", help="column used to label output times")
    p.add_argument("--alpha", action="append", type=float, help="quantile level; repeatable")
    p.add_argument("--beta", type=float, help="test size / 1 - band coverage (default 0.05)")
    p.add_argument("--bandwidth", type=float, help="override the data-driven bandwidth")
    p.add_argument("--bootstrap-b", dest="bootstrap_b", type=int, help="bootstrap draws (default 2000)")
    p.add_argument("--grid", type=int, help="evaluation grid size (default 200)")
    p.add_argument("--seed", type=int, help="bootstrap seed (default 0)")
    p.add_argument("--output", help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"))
    if with_tests:
        p.add_argument("--test", choices=("scb", "isdt", "both"))
        p.add_argument("--mode", choices=("bootstrap", "asymptotic"))
        p.add_argument("--null", help="constant, linear, quadratic or file:PATH")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsquant", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nsquant {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    est = sub.add_parser("estimate", help="quantile curves, nuisance estimates and bootstrap bands")
    _common(est, False)
    est.add_argument("--verify", metavar="FILE",
                     help="recompute and check that FILE holds bit-identical numbers")
    tst = sub.add_parser("test", help="test a null quantile curve")
    _common(tst, True)
    exp = sub.add_parser("experiment", help="run a Monte Carlo experiment spec")
    exp.add_argument("spec", help="experiment spec (TOML)")
    exp.add_argument("--output")
    exp.add_argument("--format", choices=("json", "csv"), default="csv")
    exp.add_argument("--seed", type=int)
    exp.add_argument("--replicates", type=int)
    exp.add_argument("--bootstrap-b", dest="bootstrap_b", type=int)
    exp.add_argument("--progress", action="store_true", help="report progress on stderr")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        if args.command == "experiment":
            _emit(experiment(args), args.output)
            return EXIT_OK
        cfg = resolve_config(args)
        if args.command == "estimate":
            if args.verify:
                problems = verify_estimate(cfg, args.verify)
                for msg in problems:
                    print(f"verify: {msg}", file=sys.stderr)
                if problems:
                    return EXIT_NUMERIC
                print(f"verify: {args.verify} reproduced exactly", file=sys.stderr)
                return EXIT_OK
            doc = estimate(cfg)
            _emit(_dump_json(doc) if cfg.format == "json" else estimate_csv(doc), cfg.output)
        else:
            doc = run_tests(cfg)
            _emit(_dump_json(doc) if cfg.format == "json" else tests_csv(doc), cfg.output)
        return EXIT_OK
    except InputError as exc:
        print(f"nsquant: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NUMERIC_ERRORS as exc:
        print(f"nsquant: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"nsquant: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
