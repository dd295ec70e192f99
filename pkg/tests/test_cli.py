import json
import re
import subprocess
import sys

import pytest

from certibound import cli
from certibound.errors import ConfigError


def write_cfg(tmp_path, name="cfg.json", **kw):
    path = tmp_path / name
    path.write_text(json.dumps(kw))
    return str(path)


def read_report(out_dir):
    return json.loads((out_dir / "report.json").read_text())


def test_validate_accepts_minimal_refine():
    violations, warnings = cli.validate_config(
        {"problem": "toy1d", "mode": "refine", "n": 20}
    )
    assert violations == []
    assert warnings == []


def test_validate_collects_violations():
    violations, _ = cli.validate_config({"mode": "estimate-mcmc", "N": 100})
    assert any("problem required" in v for v in violations)
    assert any("t required" in v for v in violations)
    assert any("seed required" in v for v in violations)
    violations, _ = cli.validate_config(
        {"problem": "toy1d", "mode": "refine"}
    )
    assert any("n required" in v for v in violations)
    violations, _ = cli.validate_config(
        {"problem": "whoknows", "mode": "refine", "n": 5}
    )
    assert any("unknown problem" in v for v in violations)
    violations, _ = cli.validate_config(
        {"problem": "toy1d", "mode": "teleport", "n": 5}
    )
    assert any("mode" in v for v in violations)
    violations, _ = cli.validate_config(
        {"problem": "toy1d", "mode": "refine", "n": 5, "frobnicate": 1}
    )
    assert any("unknown key" in v for v in violations)
    violations, _ = cli.validate_config(
        {"problem": "toy1d", "mode": "estimate-exact", "n": 5,
         "N": 100, "seed": 1, "alpha": 1.5}
    )
    assert any("alpha" in v for v in violations)


def test_validate_warnings_for_ignored_keys():
    _, warnings = cli.validate_config(
        {"problem": "toy1d", "mode": "refine", "n": 5, "N": 100, "seed": 3}
    )
    assert any("N ignored in refine mode" in w for w in warnings)
    assert any("seed ignored in refine mode" in w for w in warnings)
    _, warnings = cli.validate_config(
        {"problem": "toy1d", "mode": "estimate-exact", "n": 5, "N": 100,
         "seed": 3, "t": 25}
    )
    assert any("t ignored" in w for w in warnings)


def test_validate_adversarial_mode_requirements():
    violations, _ = cli.validate_config(
        {"problem": "toy1d", "mode": "adversarial", "n": 5}
    )
    assert any("adversarial" in v for v in violations)
    violations, warnings = cli.validate_config(
        {"problem": "adversarial-1d-n6", "mode": "adversarial", "n": 40}
    )
    assert violations == []
    assert any("build" in w for w in warnings)


def test_config_from_dict_raises_with_all_violations():
    with pytest.raises(ConfigError) as err:
        cli.config_from_dict({"mode": "refine"})
    assert "problem required" in str(err.value)
    assert "n required" in str(err.value)
    assert len(err.value.violations) >= 2


def test_run_refine_writes_expected_files(tmp_path):
    cfg = write_cfg(
        tmp_path, problem="halfspace-d2", mode="refine", n=0,
        output=str(tmp_path / "out"),
    )
    assert cli.main(["run", "--config", cfg]) == 0
    out = tmp_path / "out"
    assert sorted(p.name for p in out.iterdir()) == [
        "bounds.csv", "bounds.png", "report.json",
    ]
    lines = (out / "bounds.csv").read_text().splitlines()
    assert lines == ["n,p_lower,p_upper,gap", "0,0.0,1.0,1.0"]
    rep = read_report(out)
    assert rep["mode"] == "refine"
    assert rep["g_calls"] == 0
    assert rep["bounds"]["n_final"] == 0
    assert rep["bounds"]["p_upper"] == 1.0


def test_run_refine_budget_honesty(tmp_path):
    cfg = write_cfg(
        tmp_path, problem="toy1d", mode="refine", n=35,
        output=str(tmp_path / "out"),
    )
    assert cli.main(["run", "--config", cfg]) == 0
    rep = read_report(tmp_path / "out")
    assert rep["g_calls"] <= 35
    assert rep["bounds"]["p_lower"] == pytest.approx(0.002080738292925894, rel=0)
    assert rep["bounds"]["p_upper"] == pytest.approx(0.002081256115358312, rel=0)
    trace_rows = (tmp_path / "out" / "bounds.csv").read_text().splitlines()
    assert len(trace_rows) == 1 + 19


def test_run_estimate_exact(tmp_path):
    cfg = write_cfg(
        tmp_path, problem="toy1d", mode="estimate-exact", n=8,
        N=20_000, seed=11, output=str(tmp_path / "out"),
    )
    assert cli.main(["run", "--config", cfg]) == 0
    out = tmp_path / "out"
    names = sorted(p.name for p in out.iterdir())
    assert names == [
        "bounds.csv", "bounds.png", "estimate.json", "estimate.png",
        "report.json",
    ]
    est = json.loads((out / "estimate.json").read_text())
    assert sorted(est) == [
        "N", "alpha", "ci", "p_lower_hat", "p_upper_hat",
        "per_vertex", "sigma_lower", "sigma_upper",
    ]
    assert est["N"] == 20_000
    assert est["ci"][0] <= est["p_lower_hat"] <= est["p_upper_hat"] <= est["ci"][1]
    rep = read_report(out)
    # estimation sampling must not consume evaluation budget
    assert rep["g_calls"] <= 8


def test_run_estimate_mcmc_writes_diagnostics(tmp_path):
    cfg = write_cfg(
        tmp_path, problem="toy1d", mode="estimate-mcmc", n=8,
        N=2000, t=25, seed=11, output=str(tmp_path / "out"),
    )
    assert cli.main(["run", "--config", cfg]) == 0
    out = tmp_path / "out"
    diag = (out / "mcmc_diagnostics.csv").read_text().splitlines()
    assert diag[0] == "path,acceptance_rate,beta_hat_estimate"
    assert len(diag) == 1 + 4  # one row per internal vertex
    assert diag[1].startswith("root,")
    for row in diag[1:]:
        _, rate, beta = row.split(",")
        assert 0.0 < float(rate) <= 1.0
        assert 0.0 < float(beta) <= 1.0
    rep = read_report(out)
    assert rep["estimate"]["N"] == 2000


def test_run_baseline(tmp_path):
    cfg = write_cfg(
        tmp_path, problem="toy1d", mode="baseline", n=500, seed=7,
        output=str(tmp_path / "out"),
    )
    assert cli.main(["run", "--config", cfg]) == 0
    rep = read_report(tmp_path / "out")
    base = rep["baseline"]
    assert base["n"] == 500
    assert base["hits"] == round(base["p_hat"] * 500)
    assert rep["g_calls"] == 500


def test_run_adversarial_section(tmp_path):
    cfg = write_cfg(
        tmp_path, problem="adversarial-1d-n6", mode="adversarial", n=6,
        output=str(tmp_path / "out"),
    )
    assert cli.main(["run", "--config", cfg]) == 0
    rep = read_report(tmp_path / "out")
    adv = rep["adversarial"]
    assert adv["identical_trees"] is True
    assert adv["identical_bounds"] is True
    assert adv["margin_satisfied"] is True
    assert adv["mass_gap"] >= adv["required_margin"]
    assert adv["instance_mass"] > adv["base_mass"]
    assert adv["declared_lipschitz"] == 5.0
    assert adv["build_budget"] == 6 and adv["run_budget"] == 6


def test_run_is_deterministic_up_to_wall_clock(tmp_path):
    outs = []
    for tag in ("a", "b"):
        cfg = write_cfg(
            tmp_path, name=f"cfg-{tag}.json", problem="toy1d",
            mode="estimate-exact", n=8, N=5000, seed=3,
            output=str(tmp_path / tag), figures=False,
        )
        assert cli.main(["run", "--config", cfg]) == 0
        outs.append(tmp_path / tag)
    strip = lambda p: re.sub(
        r'"wall_clock_s": [^,\n]*', '"wall_clock_s": X',
        (p / "report.json").read_text(),
    )
    a, b = outs
    assert strip(a).replace(str(a), "OUT") == strip(b).replace(str(b), "OUT")
    assert (a / "bounds.csv").read_text() == (b / "bounds.csv").read_text()
    assert (a / "estimate.json").read_text() == (b / "estimate.json").read_text()


def test_figures_toggle(tmp_path):
    cfg = write_cfg(
        tmp_path, problem="toy1d", mode="refine", n=8,
        output=str(tmp_path / "out1"), figures=False,
    )
    assert cli.main(["run", "--config", cfg]) == 0
    assert not (tmp_path / "out1" / "bounds.png").exists()
    cfg2 = write_cfg(
        tmp_path, name="cfg2.json", problem="toy1d", mode="refine", n=8,
        output=str(tmp_path / "out2"),
    )
    assert cli.main(["run", "--config", cfg2, "--no-figures"]) == 0
    assert not (tmp_path / "out2" / "bounds.png").exists()
    assert (tmp_path / "out2" / "bounds.csv").exists()


def test_output_flag_overrides_config(tmp_path):
    cfg = write_cfg(
        tmp_path, problem="toy1d", mode="refine", n=4,
        output=str(tmp_path / "ignored"),
    )
    target = tmp_path / "chosen"
    assert cli.main(["run", "--config", cfg, "--output", str(target)]) == 0
    assert (target / "report.json").exists()
    assert not (tmp_path / "ignored").exists()


def test_invalid_config_exits_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, problem="whoknows", mode="refine", n=4)
    assert cli.main(["run", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert "unknown problem" in err


def test_malformed_json_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"problem": "toy1d",')
    assert cli.main(["run", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "config parse error at line" in err


def test_unwritable_output_exits_3(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    cfg = write_cfg(
        tmp_path, problem="toy1d", mode="refine", n=4,
        output=str(blocker / "nested"),
    )
    assert cli.main(["run", "--config", cfg]) == 3


def test_validate_subcommand(tmp_path, capsys):
    cfg = write_cfg(tmp_path, problem="toy1d", mode="refine", n=5)
    assert cli.main(["validate", "--config", cfg]) == 0
    assert "ok" in capsys.readouterr().out
    bad = write_cfg(tmp_path, name="bad.json", mode="refine")
    assert cli.main(["validate", "--config", bad]) == 2
    out = capsys.readouterr()
    assert "problem required" in out.err + out.out


def test_list_problems_subcommand(capsys):
    assert cli.main(["list-problems"]) == 0
    out = capsys.readouterr().out
    assert "toy1d" in out
    assert "adversarial-d2-j<j>" in out


def test_console_entry_point(tmp_path):
    cfg = write_cfg(
        tmp_path, problem="boundary-1d", mode="refine", n=6,
        output=str(tmp_path / "out"), figures=False,
    )
    proc = subprocess.run(
        [sys.executable, "-m", "certibound.cli", "run", "--config", cfg],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert (tmp_path / "out" / "report.json").exists()
    assert "report.json" in proc.stdout
