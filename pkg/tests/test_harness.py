import json

import numpy as np
import pytest

from reclab.cli import main
from reclab.errors import ConfigError, DomainError
from reclab.harness import ExperimentConfig, derive_substream, resolve_jobs, run_experiment

CLT = {"kind": "clt-recurrence", "seed": 7, "n": 1000, "samples": 200,
       "system": {"name": "doubling"},
       "schedule": {"mode": "implicit", "M": {"form": "pow", "gamma": 0.5}},
       "tolerances": {"ks": 0.2}}
SINAI = {"kind": "sinai-check", "seed": 3, "n": 10, "samples": 200,
         "system": {"name": "golden-mean"}, "params": {"window": [-1, 0]},
         "tolerances": {"telescoping": 1e-12}}


def test_substream_reproducible_and_distinct():
    a = derive_substream(5, 0).random(1000)
    assert np.array_equal(a, derive_substream(5, 0).random(1000))
    assert not np.array_equal(a, derive_substream(5, 1).random(1000))
    assert not np.array_equal(a, derive_substream(5, 0, purpose=1).random(1000))
    assert not np.array_equal(a, derive_substream(6, 0).random(1000))


def test_substream_serial_correlation_smoke():
    N = 1_000_000
    x = derive_substream(11, 0).random(N) - 0.5
    y = derive_substream(11, 1).random(N) - 0.5
    bound = 5 / np.sqrt(N)
    for s in (x, y):
        assert abs(np.corrcoef(s[:-1], s[1:])[0, 1]) < bound
    assert abs(np.corrcoef(x, y)[0, 1]) < bound
    assert abs(np.mean(x)) < 5 * np.sqrt(1 / 12 / N)


def test_substream_index_guard():
    derive_substream(1, 2**63 - 1)
    with pytest.raises(DomainError):
        derive_substream(1, 2**63)
    with pytest.raises(DomainError):
        derive_substream(1, -1)


def test_validation_lists_offending_fields():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({**CLT, "kind": "variance-report", "samples": 1})
    assert "samples" in str(info.value)
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({**CLT, "seed": None, "bogus": 1, "schedule": None})
    text = str(info.value)
    assert "seed" in text and "bogus" in text and "schedule" in text


def test_clt_report_is_byte_deterministic():
    a = run_experiment(CLT, jobs=1)
    b = run_experiment(CLT, jobs=1)
    assert a.to_json() == b.to_json()
    assert 0 <= a.metric("ks").value <= 1
    assert json.loads(a.to_json())["config"] == ExperimentConfig.from_dict(CLT).to_dict()


def test_report_independent_of_worker_count(tmp_path):
    small = {**CLT, "n": 300, "samples": 130}
    one = run_experiment(small, jobs=1)
    two = run_experiment(small, jobs=2)
    assert one.to_json() == two.to_json()
    p1 = one.write(tmp_path / "a")
    p2 = two.write(tmp_path / "b")
    for f1, f2 in zip(sorted(p1), sorted(p2)):
        if f1.name != "timing.json":
            assert f1.read_bytes() == f2.read_bytes()


def test_sinai_check_passes():
    rep = run_experiment(SINAI)
    assert rep.passed
    assert rep.metric("telescoping_residual").value <= 1e-12
    assert rep.metric("future_only_violations").value == 0


def test_resolve_jobs(monkeypatch):
    monkeypatch.delenv("RECLAB_JOBS", raising=False)
    assert resolve_jobs(None) == 1
    monkeypatch.setenv("RECLAB_JOBS", "3")
    assert resolve_jobs(None) == 3
    assert resolve_jobs(2) == 2


def _write(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "out")
    assert main(["sinai-check", "--config", _write(tmp_path, SINAI), "--out", out]) == 0
    assert (tmp_path / "out" / "report.json").exists()
    strict = {**CLT, "n": 200, "samples": 50, "tolerances": {"ks": 0.0}}
    assert main(["clt-recurrence", "--config", _write(tmp_path, strict), "--out", out]) == 2
    bad = {**CLT, "samples": 1}
    assert main(["clt-recurrence", "--config", _write(tmp_path, bad), "--out", out]) == 1
    assert main(["clt-target", "--config", _write(tmp_path, CLT), "--out", out]) == 1
    assert main(["sinai-check", "--config", str(tmp_path / "missing.json"), "--out", out]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_seed_override_and_plot_script(tmp_path):
    cfg = _write(tmp_path, SINAI)
    main(["sinai-check", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "99",
          "--plot-script"])
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["config"]["seed"] == 99
    assert (tmp_path / "o" / "plot.py").exists()


def test_cli_rejects_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["not-a-kind", "--config", "x", "--out", "y"])


SMALL = {
    "clt-target": {"n": 500, "samples": 100, "system": {"name": "doubling"},
                   "schedule": {"mode": "explicit",
                                "r": {"form": "pow", "gamma": 0.5, "scale": 0.25}}},
    "variance-report": {"n": 400, "samples": 100, "system": {"name": "doubling"},
                        "schedule": {"mode": "implicit", "M": {"form": "pow", "gamma": 0.5}},
                        "params": {"n_grid": [100, 400], "outer": 5, "inner": 20}},
    "short-returns": {"samples": 20_000, "system": {"name": "doubling"},
                      "params": {"r": [0.05], "l": [1, 2], "closed_form": True}},
    "poisson-count": {"n": 1000, "samples": 300, "system": {"name": "doubling"},
                      "params": {"tau": 1.0}},
    "transfer-diagnostics": {"system": {"name": "two-slope"},
                             "params": {"bins": [0, 0.4444444444444444, 0.6666666666666666, 1],
                                        "exact": True, "trials": 5}},
}


@pytest.mark.parametrize("kind", sorted(SMALL))
def test_every_kind_runs_and_writes_outputs(kind, tmp_path):
    rep = run_experiment({"kind": kind, "seed": 1, **SMALL[kind]})
    assert rep.metrics
    for m in rep.metrics:
        if m.asserted:
            assert m.tolerance is not None
    paths = rep.write(tmp_path)
    names = {p.name for p in paths}
    assert {"report.json", "timing.json"} <= names
    assert any(n.endswith(".csv") for n in names)


def test_clt_sums_table_columns(tmp_path):
    rep = run_experiment({**CLT, "n": 200, "samples": 70})
    rep.write(tmp_path)
    header, first = (tmp_path / "sums.csv").read_text().splitlines()[:2]
    assert header == "point_id,n,hits_cum,mass_cum,ratio"
    row = rep.tables["sums"][0]
    assert row["ratio"] == pytest.approx(row["hits_cum"] / row["mass_cum"])
    assert len(rep.tables["sums"]) == 70
