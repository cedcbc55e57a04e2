import csv
import io
from pathlib import Path

import numpy as np
import pytest

from nsquant import experiments as ex
from nsquant.errors import WindowTooSmallError


CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def small_spec(**kw):
    base = dict(scenarios=("a",), n=120, levels=(0.5,), tests=("BS", "BI", "PC"), replicates=2,
                bootstrap_b=200, seed=4)
    base.update(kw)
    return ex.ExperimentSpec(**base)


def test_single_replicate_is_reproducible():
    spec = small_spec(replicates=1)
    a = ex.run_experiment(spec, workers=1)
    b = ex.run_experiment(spec, workers=1)
    assert a.to_csv() == b.to_csv()
    for row in a.rows:
        assert row["replicates"] == 1 and row["rejections"] in (0, 1)


def test_csv_header_and_standard_errors():
    spec = small_spec(alternatives=(ex.Alternative("flat", c1=0.0), ex.Alternative("bump", c2=2.0, c3=20.0)))
    table = ex.run_experiment(spec, workers=1)
    rows = list(csv.reader(io.StringIO(table.to_csv())))
    assert tuple(rows[0]) == ex.CSV_HEADER
    assert len(rows) == 1 + 3 * 2
    scenarios = {r[2] for r in rows[1:]}
    assert scenarios == {"a/flat(0.0)", "a/bump(2.0,20.0)"}
    for r in table.rows:
        p, m = r["rate"], r["replicates"]
        assert r["mc_se"] == pytest.approx(np.sqrt(p * (1 - p) / m))
        assert float(repr(r["rate"])) == r["rate"]


def test_replicates_scheduled_in_parallel_match_serial():
    spec = small_spec(replicates=3, tests=("AS", "AI"))
    serial = ex.run_experiment(spec, workers=1)
    parallel = ex.run_experiment(spec, workers=2)
    assert serial.to_csv() == parallel.to_csv()


def test_failures_recorded_and_excluded(monkeypatch):
    calls = {"k": 0}
    real = ex.inf.run_test

    def flaky(inputs, null, method, *a, **kw):
        calls["k"] += 1
        if method == ex.inf.ISDT_BOOTSTRAP and calls["k"] % 2 == 0:
            raise WindowTooSmallError("forced")
        return real(inputs, null, method, *a, **kw)

    monkeypatch.setattr(ex.inf, "run_test", flaky)
    table = ex.run_experiment(small_spec(replicates=3, tests=("BS", "BI")), workers=1)
    bi = [r for r in table.rows if r["test"] == "BI"][0]
    fails = table.failures[("BI", 0.5, "a")]
    assert fails >= 1 and bi["replicates"] == 3 - fails
    assert ("BS", 0.5, "a") not in table.failures


@pytest.mark.parametrize("field,value", [("replicates", 0), ("n", 10), ("levels", (1.2,)),
                                         ("tests", ("XX",)), ("bootstrap_b", 10), ("beta", 0.0),
                                         ("scenarios", ("z",))])
def test_validation(field, value):
    with pytest.raises(ValueError):
        small_spec(**{field: value}).validate()


def test_validation_lists_every_problem():
    probs = small_spec(replicates=0, beta=2.0).problems()
    assert len(probs) == 2


def test_spec_files_load(tmp_path):
    for name in ("table1_desk", "power_flat", "power_bump"):
        spec = ex.load_spec(CONFIGS / f"{name}.toml")
        assert spec.name == name
    bad = tmp_path / "bad.toml"
    bad.write_text('replicates = 0\nunknown = 1\n')
    with pytest.raises(ValueError):
        ex.load_spec(bad)


def test_thread_env(monkeypatch):
    monkeypatch.setenv(ex.THREADS_ENV, "1")
    assert ex.worker_count() == 1
    monkeypatch.setenv(ex.THREADS_ENV, "0")
    with pytest.raises(ValueError):
        ex.worker_count()
    monkeypatch.setenv(ex.THREADS_ENV, "many")
    with pytest.raises(ValueError):
        ex.worker_count()
    monkeypatch.delenv(ex.THREADS_ENV)
    assert ex.worker_count() >= 1
