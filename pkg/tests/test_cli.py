import json
import subprocess
import sys

import pytest

from carlemanlab.cli import DEFAULTS, main


def run(tmp_path, *args, config=None, name="out"):
    out = tmp_path / name
    argv = list(args) + ["--out", str(out), "--workers", "2"]
    if config is not None:
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps(config))
        argv += ["--config", str(cfg)]
    return main(argv), out


def report(out, command):
    return json.loads((out / f"{command}.json").read_text())


def test_treves_zero_weight_passes(tmp_path):
    code, out = run(tmp_path, "treves-verify", config={"preset": "zero-weight", "seeds": 2, "max_degree": 2})
    assert code == 0
    doc = report(out, "treves-verify")
    assert doc["pass"] is True and doc["report"]["relative_error"] <= 1e-10
    assert doc["config"]["preset"] == "zero-weight"


def test_factorization_flags(tmp_path):
    code, out = run(tmp_path, "factorization", "--m", "2", "--n", "2")
    assert code == 0
    doc = report(out, "factorization")
    assert doc["config"]["m"] == [2] and doc["config"]["n"] == [2]
    assert doc["report"]["cases"][0]["Ptilde"] == {"dimension": 2, "terms": [{"alpha": [0, 0], "re": 4.0,
                                                                                 "im": 0.0}]}


def test_ellipticity_m1_n1(tmp_path):
    code, out = run(tmp_path, "ellipticity", "--m", "1", "--n", "1", "--trials", "10000")
    assert code == 0
    case = report(out, "ellipticity")["report"]["cases"][0]
    assert case["rhs_only_error"] <= 1e-6


def test_lemma_subcommands(tmp_path):
    code, _ = run(tmp_path, "lemma22", config={"dimensions": [1], "max_degree": 2, "seeds": 1, "count": 2})
    assert code == 0
    code, _ = run(tmp_path, "lemma23", config={"K": [2], "tau": [10.0], "count": 2}, name="l23")
    assert code == 0


SWEEP = {"spec": {"count": 4}, "tau": {"points": 6}, "grid": {"points": 64}}


def test_sweep_writes_json_and_csv(tmp_path):
    code, out = run(tmp_path, "carleman-sweep", config=SWEEP)
    assert code == 0
    doc = report(out, "carleman-sweep")
    # the resolved config is embedded, including the automatic tau_max
    assert isinstance(doc["config"]["tau"]["max"], float)
    assert doc["config"]["spec"]["count"] == 4
    assert set(DEFAULTS["carleman-sweep"]) <= set(doc["config"])
    csv = (out / "carleman-sweep.csv").read_text()
    assert csv.startswith("tau,C_star,dominant_alpha,rhs_min\n") and "\r" not in csv


def test_reports_are_byte_identical(tmp_path):
    _, a = run(tmp_path, "carleman-sweep", config=SWEEP, name="a")
    _, b = run(tmp_path, "carleman-sweep", "--workers", "1", config=SWEEP, name="b")
    assert (a / "carleman-sweep.json").read_bytes() == (b / "carleman-sweep.json").read_bytes()
    assert (a / "carleman-sweep.csv").read_bytes() == (b / "carleman-sweep.csv").read_bytes()
    _, c = run(tmp_path, "factorization", name="c")
    _, d = run(tmp_path, "factorization", name="d")
    assert (c / "factorization.json").read_bytes() == (d / "factorization.json").read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    _, out = run(tmp_path, "carleman-sweep", "--seed", "5", config=SWEEP)
    assert report(out, "carleman-sweep")["config"]["spec"]["seed"] == 5


@pytest.mark.parametrize("config,needle", [
    ({"tau": {"min": 50.0, "max": 10.0}}, "tau"),
    ({"spec": {"delta_prime": 0.7}, "operator": {"kind": "schrodinger"}}, "1/2"),
    ({"weight": {"N": -1.0}}, "N"),
    ({"bogus": 1}, "unknown"),
])
def test_invalid_config_exits_2(tmp_path, capsys, config, needle):
    code, _ = run(tmp_path, "carleman-sweep", config=config)
    assert code == 2
    assert needle in capsys.readouterr().err


def test_failed_check_exits_1(tmp_path):
    # an impossible tolerance turns a correct run into a reported failure
    code, out = run(tmp_path, "treves-verify", config={"dimensions": [1], "max_degree": 2, "seeds": 1,
                                                       "tolerance": 0.0})
    assert code == 1
    assert report(out, "treves-verify")["pass"] is False


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "carlemanlab", "factorization", "--m", "1", "--n", "1",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0
    assert "PASS" in res.stdout
