import numpy as np
import pytest

from coordbf import cli, harness
from coordbf.async_proto import AsyncConfig
from coordbf.channel import SystemConfig, sample_channel
from coordbf.harness import (
    EXPERIMENTS,
    ExperimentSpec,
    GuardrailError,
    compare_pipelines,
    load_config,
    make_spec,
    run_experiment,
    run_trials,
    summarize,
)

SMALL = """
[system]
N = 2
K = 2
N_t = 4
gamma = 1.0

[async]
p = 0.8

[robust]
eps = 0.05

[experiment]
id = accuracy_vs_iter
grid = 1, 2
trials = 2
seed = 3
max_iter = 20
"""


@pytest.fixture
def ini(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return str(p)


def test_load_config_sections_and_types(ini):
    cfg = load_config(ini)
    assert cfg["system"] == dict(N=2, K=2, N_t=4, gamma=1.0)
    assert cfg["async"] == dict(p=0.8)
    assert cfg["robust"] == dict(eps=0.05)
    assert cfg["experiment"]["grid"] == [1.0, 2.0] and cfg["experiment"]["id"] == "accuracy_vs_iter"
    assert load_config(None)["system"] == {}


def test_load_config_rejects_unknown_section(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[solver]\ntol = 1\n")
    with pytest.raises(ValueError):
        load_config(str(p))


def test_precedence(ini):
    spec = make_spec(None, load_config(ini))
    assert spec.experiment == "accuracy_vs_iter"
    assert spec.trials == 2 and spec.seed == 3 and spec.max_iter == 20 and spec.eps == 0.05
    assert spec.config().N_t == 4
    # flags beat the file, the file beats the defaults
    spec = make_spec("convergence_vs_tau", load_config(ini), trials=5, seed=None)
    assert spec.trials == 5 and spec.seed == 3
    assert spec.async_ == dict(S=2, p=0.8)
    assert spec.config().N == 2
    assert make_spec("convergence_vs_tau").config().N == 4


def test_make_spec_errors():
    with pytest.raises(ValueError):
        make_spec(None, None)
    with pytest.raises(ValueError):
        make_spec("nope")
    for exp in EXPERIMENTS:
        make_spec(exp).validate()


def test_guardrails():
    spec = make_spec("power_vs_gamma")
    spec.system["N_t"] = 32
    with pytest.raises(GuardrailError):
        spec.validate()
    spec.validate(allow_large=True)
    spec = make_spec("power_vs_gamma")
    spec.grid = []
    with pytest.raises(ValueError):
        spec.validate()
    spec = make_spec("power_vs_gamma", trials=0)
    with pytest.raises(ValueError):
        spec.validate()


def test_cli_guardrail_exit_code(tmp_path, capsys):
    p = tmp_path / "big.ini"
    p.write_text("[system]\nN = 5\n")
    assert cli.main(["run", "--experiment", "power_vs_gamma", "--config", str(p), "--out-dir", str(tmp_path)]) == 1
    assert "desk-scale" in capsys.readouterr().err


def test_thread_count_does_not_change_output(ini, tmp_path):
    spec = make_spec(None, load_config(ini))
    a = run_experiment(spec, str(tmp_path / "one"), threads=1)
    b = run_experiment(spec, str(tmp_path / "two"), threads=2)
    for pa, pb in zip(a, b):
        assert open(pa, "rb").read() == open(pb, "rb").read()
    lines = open(a[0]).read().splitlines()
    assert lines[0].startswith("# coordbf ")
    assert lines[1] == "# experiment=accuracy_vs_iter seed=3 trials=2"
    assert lines[2].startswith("# spec=")
    assert lines[3].split(",")[:3] == ["point", "trial", "error"]


def test_partial_failure_is_recorded(monkeypatch):
    spec = make_spec("accuracy_vs_iter", None, trials=2)
    spec.system.update(N_t=4)
    spec.max_iter = 5

    def flaky(spec, point, trial):
        if trial == 1:
            raise RuntimeError("boom")
        return [dict(iteration=1, accuracy=0.5)]

    monkeypatch.setitem(harness.TRIALS, "accuracy_vs_iter", flaky)
    rows = run_trials(spec, threads=1)
    assert len(rows) == 4
    bad = [r for r in rows if r["error"]]
    assert len(bad) == 2 and all("boom" in r["error"] for r in bad)
    summ = summarize(spec, rows)
    assert [s["trials"] for s in summ] == [1, 1]


def test_summary_columns(tmp_path):
    spec = ExperimentSpec("feasibility_vs_eps", grid=[0.0, 0.2], trials=2, system=dict(N=2, K=1, N_t=4, gamma=1.0))
    rows = run_trials(spec)
    summ = summarize(spec, rows)
    assert [s["point"] for s in summ] == [0.0, 0.2]
    assert all(0.0 <= s["feasibility_rate"] <= 100.0 for s in summ)
    assert summ[0]["feasibility_rate"] >= summ[1]["feasibility_rate"]


def test_compare_pipelines_checks():
    cfg = SystemConfig(N=2, K=2, N_t=4, gamma=1.0)
    ch = sample_channel(cfg, np.random.default_rng(1))
    rep = compare_pipelines(ch, cfg, AsyncConfig(S=1, tau=4, p=0.6), eps=0.05, c=10.0, max_iter=300)
    names = [r["pipeline"] for r in rep["rows"]]
    assert names == ["centralized", "sdbf", "adbf", "adbf_reduced", "robust_centralized"]
    assert rep["checks"]["reduced_adbf_equals_sdbf"]
    assert rep["checks"]["sdbf_gap_le_2pct"]
    assert rep["checks"]["robust_ge_nominal"]


def test_cli_compare_and_run(ini, tmp_path, capsys):
    assert cli.main(["compare", "--config", ini]) == 0
    out = capsys.readouterr().out
    assert "centralized" in out and "PASS reduced_adbf_equals_sdbf" in out
    assert cli.main(["run", "--config", ini, "--out-dir", str(tmp_path), "--trials", "1"]) == 0
    assert (tmp_path / "accuracy_vs_iter_summary.csv").exists()


def test_cli_verify_exit_codes(monkeypatch, capsys):
    assert cli.main(["verify", "--trials", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out and all(line.startswith("PASS ") for line in out)
    monkeypatch.setattr(cli, "verify_invariants", lambda seed, trials: [("x", True, ""), ("y", False, "bad")])
    assert cli.main(["verify"]) == 2
    assert "FAIL y bad" in capsys.readouterr().out
