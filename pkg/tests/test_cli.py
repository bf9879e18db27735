import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from lgp.cli import main
from lgp.simulate import CovariateSpec, SimConfig

FIVE = "y ~ gp(age) + zs(id)*gp(age) + zs(sex)*gp(age) + gp_vm(diseaseAge) + zs(loc)"


@pytest.fixture
def sim(tmp_path):
    roster = [CovariateSpec("id", "categorical"), CovariateSpec("age", "continuous"),
              CovariateSpec("sex", "categorical", True, 1.0, 2), CovariateSpec("loc", "categorical", False, 1.0, 3),
              CovariateSpec("diseaseAge", "disease", True)]
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps(SimConfig(num_individuals=6, num_timepoints=4, roster=roster, seed=2).to_dict(),
                              default=list))
    data = tmp_path / "data.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(data), "--truth", str(tmp_path / "truth.json")]) == 0
    return tmp_path, data, tmp_path / "data.schema.json"


def _fit(tmp_path, data, schema, out="fit.json", extra=()):
    args = ["fit", "--data", str(data), "--schema", str(schema), "--formula", FIVE,
            "--chains", "2", "--warmup", "30", "--iters", "15", "--seed", "3", "--out", str(tmp_path / out)]
    return main(args + list(extra))


def test_fit_writes_all_draws(sim):
    tmp_path, data, schema = sim
    code = _fit(tmp_path, data, schema)
    assert code in (0, 2)
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["status"] in ("ok", "non-converged")
    assert (code == 2) == (fit["status"] == "non-converged")
    assert all(np.asarray(v).shape == (2, 15) for v in fit["draws"].values())
    manifest = json.loads((tmp_path / "fit.json.manifest.json").read_text())
    assert manifest["command"] == "fit" and manifest["seed"] == 3
    assert all(entry["sha256"] for entry in manifest["inputs"] if entry["path"])


def test_fit_is_deterministic(sim):
    tmp_path, data, schema = sim
    _fit(tmp_path, data, schema, "a.json")
    _fit(tmp_path, data, schema, "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_relevance_and_select(sim, capsys):
    tmp_path, data, schema = sim
    _fit(tmp_path, data, schema)
    fit_path = tmp_path / "fit.json"
    before = fit_path.read_bytes()
    rel = tmp_path / "rel.json"
    assert main(["relevance", "--fit", str(fit_path), "--out", str(rel)]) == 0
    assert fit_path.read_bytes() == before
    d = json.loads(rel.read_text())
    assert [r["covariate"] for r in d["covariates"]] == ["age", "id", "sex", "diseaseAge", "loc"]
    total = d["p_noise"] + sum(c["relevance"] for c in d["components"])
    assert total == pytest.approx(1.0, abs=1e-10)
    capsys.readouterr()
    assert main(["select", "--report", str(rel), "--threshold", "95"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["selected"] == d["selected"]


def test_select_noise_dominated_report(tmp_path, capsys):
    rep = {"p_noise": 0.96, "threshold": 95, "selected": [],
           "components": [{"index": 1, "term": "gp(age)", "relevance": 0.03},
                          {"index": 2, "term": "zs(sex)", "relevance": 0.01}]}
    path = tmp_path / "rep.json"
    path.write_text(json.dumps(rep))
    assert main(["select", "--report", str(path), "--threshold", "95"]) == 0
    assert json.loads(capsys.readouterr().out)["selected"] == []


def test_report_and_prior_predict(sim):
    tmp_path, data, schema = sim
    _fit(tmp_path, data, schema)
    curves = tmp_path / "curves.csv"
    assert main(["report", "--fit", str(tmp_path / "fit.json"), "--out", str(curves), "--draws", "3"]) == 0
    lines = curves.read_text().splitlines()
    assert lines[0].startswith("draw,component,term,row")
    assert len(lines) == 1 + 3 * 5 * 24
    pp = tmp_path / "pp.csv"
    assert main(["prior-predict", "--data", str(data), "--schema", str(schema), "--formula", FIVE,
                 "--draws", "4", "--out", str(pp)]) == 0
    assert len(pp.read_text().splitlines()) == 1 + 4 * 24


@pytest.mark.parametrize("argv", [
    ["fit", "--bogus"],
    ["simulate"],
    ["nonsense"],
    [],
])
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_user_errors_exit_one(sim, capsys):
    tmp_path, data, schema = sim
    code = main(["fit", "--data", str(data), "--schema", str(schema), "--formula", "y ~ gp(age",
                 "--out", str(tmp_path / "x.json")])
    assert code == 1
    assert "error" in capsys.readouterr().err
    assert main(["relevance", "--fit", str(tmp_path / "missing.json")]) == 1


@pytest.mark.skipif(shutil.which("lgp") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["lgp", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("lgp ")
    proc = subprocess.run([sys.executable, "-m", "lgp.cli", "fit", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 1
