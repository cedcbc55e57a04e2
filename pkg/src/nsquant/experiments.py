"""Monte Carlo rejection-rate experiments on the benchmark tvAR(1) designs.

A replicate draws one series per (scenario, alternative), selects bandwidths
for each quantile level and runs every requested test against the null
quantile curve. Replicate i uses the stream ``SeedSequence([seed, i])``, so
the table does not depend on how replicates are scheduled. Alternatives share
innovations within a replicate (common random numbers), which keeps power
curves smooth in the shift size.
"""
from __future__ import annotations

import csv
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from nsquant import inference as inf
from nsquant import simulate
from nsquant.bandwidth import plan
from nsquant.errors import NsquantError

TEST_CODES = {
    "AS": inf.SCB_ASYMPTOTIC,
    "AI": inf.ISDT_ASYMPTOTIC,
    "BS": inf.SCB_BOOTSTRAP,
    "BI": inf.ISDT_BOOTSTRAP,
    "PC": inf.POINTWISE,
    "BF": inf.BONFERRONI,
}
ISDT_CODES = {"AI", "BI"}
CSV_HEADER = ("test", "alpha", "scenario", "n", "rejections", "replicates", "rate", "mc_se")
THREADS_ENV = "NSQUANT_THREADS"
# numerical trouble in a single replicate; anything else is a bug and propagates
REPLICATE_ERRORS = (NsquantError, ValueError, ArithmeticError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class Alternative:
    """Shift phi(t) added to every quantile curve; ``kind`` is flat or bump."""

    kind: str
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0

    def shift(self) -> Callable:
        if self.kind == "flat":
            return simulate.flat_shift(self.c1)
        if self.kind == "bump":
            return simulate.bump_shift(self.c2, self.c3)
        raise ValueError(f"unknown alternative {self.kind!r}")

    def label(self) -> str:
        if self.kind == "flat":
            return f"flat({self.c1!r})"
        return f"bump({self.c2!r},{self.c3!r})"


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "experiment"
    scenarios: tuple = ("a",)
    n: int = 300
    levels: tuple = (0.5,)
    tests: tuple = ("BS", "BI")
    replicates: int = 100
    bootstrap_b: int = inf.DEFAULT_REPLICATES
    beta: float = 0.05
    seed: int = 0
    grid_size: int = 200
    bandwidth: float | None = None
    alternatives: tuple = ()

    def problems(self) -> list[str]:
        out = []
        if not self.scenarios or any(s not in ("a", "b") for s in self.scenarios):
            out.append("scenarios must be a nonempty list drawn from 'a', 'b'")
        if not isinstance(self.n, int) or self.n < 50:
            out.append("n must be an integer >= 50")
        if not self.levels or any(not 0 < a < 1 for a in self.levels):
            out.append("levels must be a nonempty list inside (0, 1)")
        if not self.tests or any(t not in TEST_CODES for t in self.tests):
            out.append(f"tests must be a nonempty list drawn from {sorted(TEST_CODES)}")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            out.append("replicates must be a positive integer")
        if not isinstance(self.bootstrap_b, int) or self.bootstrap_b < inf.MIN_REPLICATES:
            out.append(f"bootstrap_b must be an integer >= {inf.MIN_REPLICATES}")
        if not 0 < self.beta < 1:
            out.append("beta must lie in (0, 1)")
        if not isinstance(self.grid_size, int) or self.grid_size < 2:
            out.append("grid_size must be an integer >= 2")
        if self.bandwidth is not None and not 0 < self.bandwidth < 0.5 / math.sqrt(2):
            out.append("bandwidth must lie in (0, 0.5/sqrt(2))")
        for alt in self.alternatives:
            if alt.kind not in ("flat", "bump"):
                out.append(f"alternative kind {alt.kind!r} is not flat or bump")
        return out

    def validate(self) -> "ExperimentSpec":
        probs = self.problems()
        if probs:
            raise ValueError("invalid experiment spec: " + "; ".join(probs))
        return self

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        raw = dict(raw)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown experiment spec keys: {sorted(unknown)}")
        alts = []
        for a in raw.pop("alternatives", ()):
            a = dict(a)
            kind = a.pop("kind", None)
            if kind is None:
                raise ValueError("every alternative needs a 'kind'")
            alts.append(Alternative(kind, **{k: float(v) for k, v in a.items()}))
        for key in ("scenarios", "levels", "tests"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(alternatives=tuple(alts), **raw).validate()

    def cells(self):
        """(scenario, alternative or None) pairs in table order."""
        alts = self.alternatives or (None,)
        return [(s, a) for s in self.scenarios for a in alts]


def scenario_label(scenario: str, alt: Alternative | None) -> str:
    return scenario if alt is None else f"{scenario}/{alt.label()}"


@dataclass
class ExperimentTable:
    spec: ExperimentSpec
    rows: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r["test"], repr(r["alpha"]), r["scenario"], r["n"], r["rejections"],
                        r["replicates"], repr(r["rate"]), repr(r["mc_se"])])
        return buf.getvalue()

    def to_json(self) -> dict:
        spec = asdict(self.spec)
        return {"spec": spec, "columns": list(CSV_HEADER), "rows": self.rows,
                "failures": [{"test": k[0], "alpha": k[1], "scenario": k[2], "count": v}
                             for k, v in self.failures.items()]}

    def rate(self, test: str, alpha: float, scenario: str) -> float:
        for r in self.rows:
            if (r["test"], r["alpha"], r["scenario"]) == (test, alpha, scenario):
                return r["rate"]
        raise KeyError((test, alpha, scenario))


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def run_replicate(spec: ExperimentSpec, index: int) -> dict:
    """{(test, alpha, scenario label): True/False for reject, or an error string}."""
    out = {}
    boot_seed = int(np.random.SeedSequence([int(spec.seed), int(index), 1]).generate_state(1)[0])
    for scen, alt in spec.cells():
        model = simulate.scenario_model(scen, None if alt is None else alt.shift())
        sample = simulate.generate(model, spec.n, replicate_rng(spec.seed, index))
        label = scenario_label(scen, alt)
        for level in spec.levels:
            null = simulate.true_quantile(simulate.scenario_model(scen), level).curve
            out.update(_run_level(spec, sample, level, null, label, boot_seed))
    return out


def _run_level(spec, sample, level, null, label, boot_seed) -> dict:
    keys = [(t, level, label) for t in spec.tests]
    try:
        if spec.bandwidth is None:
            p = plan(sample, level)
            bw = {"scb": p.b_jack, "isdt": p.b_isdt}
        else:
            bw = {"scb": spec.bandwidth, "isdt": spec.bandwidth}
    except REPLICATE_ERRORS as exc:
        return {k: f"{type(exc).__name__}: {exc}" for k in keys}
    prepared = {}
    out = {}
    for code in spec.tests:
        kind = "isdt" if code in ISDT_CODES else "scb"
        key = (code, level, label)
        try:
            if kind not in prepared:
                prepared[kind] = inf.prepare(sample, level, bw[kind], spec.grid_size)
            rep = inf.run_test(prepared[kind], null, TEST_CODES[code], spec.beta,
                               spec.bootstrap_b, boot_seed)
            out[key] = bool(rep.reject)
        except REPLICATE_ERRORS as exc:
            out[key] = f"{type(exc).__name__}: {exc}"
    return out


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    cpus = os.cpu_count() or 1
    if raw is None or raw == "":
        return cpus
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if k < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return min(k, cpus)


def _replicate_job(args):
    spec, index = args
    return run_replicate(spec, index)


def run_experiment(spec: ExperimentSpec, workers: int | None = None, progress=None) -> ExperimentTable:
    """Rejection rates with Monte Carlo standard errors.

    Failed (test, level, scenario) cells of a replicate are counted in
    ``table.failures`` and excluded from that cell's denominator.
    """
    spec.validate()
    workers = worker_count() if workers is None else max(1, int(workers))
    jobs = [(spec, i) for i in range(spec.replicates)]
    if workers == 1 or spec.replicates == 1:
        results = []
        for j in jobs:
            results.append(_replicate_job(j))
            if progress:
                progress(len(results), spec.replicates)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_job, jobs, chunksize=max(1, spec.replicates // (8 * workers))))
    return tabulate(spec, results)


def tabulate(spec: ExperimentSpec, results: list[dict]) -> ExperimentTable:
    table = ExperimentTable(spec)
    for scen, alt in spec.cells():
        label = scenario_label(scen, alt)
        for level in spec.levels:
            for code in spec.tests:
                key = (code, level, label)
                vals = [r[key] for r in results]
                ok = [v for v in vals if isinstance(v, bool)]
                fails = len(vals) - len(ok)
                if fails:
                    table.failures[key] = fails
                k, m = sum(ok), len(ok)
                rate = k / m if m else math.nan
                se = math.sqrt(rate * (1 - rate) / m) if m else math.nan
                table.rows.append({"test": code, "alpha": level, "scenario": label, "n": spec.n,
                                   "rejections": k, "replicates": m, "rate": rate, "mc_se": se})
    return table


def load_spec(path) -> ExperimentSpec:
    """Read an experiment spec from a TOML file."""
    if sys.version_info >= (3, 11):
        import tomllib
    else:  # pragma: no cover
        import tomli as tomllib
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return ExperimentSpec.from_dict(raw)
