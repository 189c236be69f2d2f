import json
from pathlib import Path

import pytest

from dsaft.cli import build_parser, main

ROOT = Path(__file__).resolve().parent.parent

SMALL = """
[problem]
kind = "skewed1d"

[anneal]
steps_per_temperature = 10

[cluster]
n_searchers = 3
"""


@pytest.fixture
def small(tmp_path):
    f = tmp_path / "small.toml"
    f.write_text(SMALL)
    return f


def test_run_writes_outputs(small, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--config", str(small), "--seed", "2", "--out", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["seed"] == 2 and printed["completed"]
    assert {p.name for p in out.iterdir()} == {"trace.csv", "report.json", "convergence.dat", "events.jsonl"}


def test_run_json_format(small, tmp_path):
    assert main(["run", "--config", str(small), "--out", str(tmp_path), "--format", "json"]) == 0
    assert (tmp_path / "trace.json").exists()


def test_sweep_with_comparison(small, tmp_path, capsys):
    assert main(["sweep", "--config", str(small), "--seeds", "2", "--out", str(tmp_path),
                 "--compare-broadcasts"]) == 0
    table = json.loads(capsys.readouterr().out)
    assert table["seeds"] == 2
    assert (tmp_path / "runs.csv").exists() and (tmp_path / "broadcasts_off" / "summary.json").exists()


def test_oracle(tmp_path, capsys):
    f = tmp_path / "t.toml"
    f.write_text('[problem]\nkind = "tsp"\nn_cities = 8\nseed = 7\n')
    assert main(["oracle", "--config", str(f)]) == 0
    assert json.loads(capsys.readouterr().out)["energy"] == pytest.approx(2.2429407788054756)


def test_verify_and_store_audit(tmp_path, capsys):
    f = tmp_path / "m.toml"
    f.write_text('[problem]\nkind = "tsp"\nn_cities = 6\n[anneal]\nsteps_per_temperature = 5\n'
                 '[mapreduce]\ntasks = 3\n')
    out = tmp_path / "o"
    assert main(["verify", "--config", str(f), "--out", str(out)]) == 0
    capsys.readouterr()
    store = out / "store.jsonl"
    assert main(["verify", "--config", str(f), "--store", str(store)]) == 0
    lines = store.read_text().splitlines()
    rec = json.loads(lines[0])
    rec["energy"] += 1.0
    lines[0] = json.dumps(rec)
    store.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert main(["verify", "--config", str(f), "--store", str(store)]) == 1
    assert len(json.loads(capsys.readouterr().out)["mismatches"]) == 1


def test_bad_config_exit_code(tmp_path, capsys):
    f = tmp_path / "bad.toml"
    f.write_text('[problem]\nkind = "tsp"\n[fabric]\nloss_probability = 1.0\n[anneal]\nalpha = 0\n')
    assert main(["run", "--config", str(f)]) == 1
    err = capsys.readouterr().err
    assert "fabric.loss_probability" in err and "anneal.alpha" in err
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 1


def test_runtime_error_exit_code(tmp_path, capsys):
    f = tmp_path / "big.toml"
    f.write_text('[problem]\nkind = "tsp"\nn_cities = 12\n')
    assert main(["oracle", "--config", str(f)]) == 2
    assert "enumeration cap" in capsys.readouterr().err


def test_parser_requires_config():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run"])


@pytest.mark.parametrize("name", sorted(p.name for p in (ROOT / "configs").glob("*.toml")))
def test_shipped_configs_parse(name):
    from dsaft.experiment import parse_config

    parse_config(ROOT / "configs" / name)


def test_scripts_run(capsys):
    import importlib.util

    for name, argv in [("overhead_scan", ["--nodes", "2", "--costs", "0", "1"]),
                       ("crash_recovery", ["--seeds", "1", "--ticks", "100"])]:
        spec = importlib.util.spec_from_file_location(name, ROOT / "scripts" / f"{name}.py")
        mod = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(mod)
        mod.main(argv)
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("nodes,") and len(out) == 3 + 1 + 3
