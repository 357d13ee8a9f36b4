import json

from maxmin_morl.cli import main


def test_cli_solve_lp(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"environment": {"kind": "one-state", "gamma": 0.9}, "seeds": [0]}))
    out = tmp_path / "out"
    code = main(["solve-lp", "--config", str(config), "--out", str(out)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert abs(summary["value"] - 15.0) < 1e-9
    doc = json.loads((out / "result.json").read_text())
    assert doc["kind"] == "solve-lp"
    assert abs(doc["value"] - 15.0) < 1e-9


def test_cli_pareto_sweep(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "environment": {"kind": "one-state", "gamma": 0.9},
                "seeds": [0],
                "scalings": [[1.0, 1.0], [1.0, 2.0]],
            }
        )
    )
    code = main(["pareto-sweep", "--config", str(config), "--out", str(tmp_path / "out")])
    assert code == 0
    doc = json.loads((tmp_path / "out" / "result.json").read_text())
    assert len(doc["details"]["points"]) == 2


def test_cli_seed_override(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"environment": {"kind": "one-state", "gamma": 0.9}}))
    out = tmp_path / "out"
    assert main(["solve-lp", "--config", str(config), "--out", str(out), "--seed", "7"]) == 0
    doc = json.loads((out / "result.json").read_text())
    assert doc["seeds"] == [7]


def test_cli_failure_emits_error_json(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"environment": {"kind": "not-an-env"}, "seeds": [0]}))
    out = tmp_path / "out"
    code = main(["solve-lp", "--config", str(config), "--out", str(out)])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "ValueError"
    assert (out / "error.json").exists()


def test_cli_missing_config_file(tmp_path, capsys):
    code = main(["solve-lp", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert "error" in err
