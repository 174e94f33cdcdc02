import csv
import json
from pathlib import Path

import pytest

from mvf import cli
from mvf.cli import CSV_COLUMNS, ConfigError, RunConfig

CONFIGS = Path(__file__).resolve().parents[1] / "demos" / "configs"


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_roundtrip():
    cfg = RunConfig(
        "solve",
        experiment_id="rt",
        solution="ma2-quadratic",
        n=2,
        controls={"rotation_count": 4, "b_count": 2},
        eps=[0.2, 0.1],
        steps=3,
        tolerances={"sup_error_factor": 5.0},
    )
    again = RunConfig.from_toml(cfg.to_toml())
    assert again == cfg
    assert RunConfig.from_toml(again.to_toml()).to_toml() == cfg.to_toml()


def test_config_errors(tmp_path, capsys):
    assert cli.main(["consistency", "--config", str(CONFIGS / "bad_key.toml"), "--out", str(tmp_path)]) == 2
    with pytest.raises(ConfigError):
        RunConfig.from_toml('command = "solve"\nbogus = 1\n')
    with pytest.raises(ConfigError):
        RunConfig.from_toml('command = "solve"\n[problem]\nsolution = "ma1-quadratic"\nsteps = 3\n')
    with pytest.raises(ConfigError):
        RunConfig.from_toml('command = "nope"\n')
    with pytest.raises(ConfigError):
        RunConfig.from_toml('command = "solve"\n[problem]\nsolution = "lambda2-saddle"\nn = 2\n')
    with pytest.raises(ConfigError):
        RunConfig.from_toml("command = [")
    p = write(tmp_path, 'command = "lemma-check"\n')
    assert cli.main(["solve", "--config", str(p)]) == 2
    assert cli.main(["solve"]) == 2
    assert cli.main(["solve", "--config", str(tmp_path / "missing.toml")]) == 2


def test_consistency_ma1_passes(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["consistency", "--config", str(CONFIGS / "consistency_ma1.toml"), "--out", str(out)]) == 0
    table = rows(out / "consistency-ma1.csv")
    assert list(table[0].keys()) == CSV_COLUMNS
    assert len(table) == 3 and all(r["pass"] == "true" for r in table)
    summary = json.loads((out / "consistency-ma1.json").read_text())
    assert summary["all_pass"] and summary["failed"] == []


def test_study_heat_orders(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["study", "--config", str(CONFIGS / "study_heat.toml"), "--out", str(out)]) == 0
    orders = [r for r in rows(out / "study-heat.csv") if r["metric"] == "observed_order"]
    assert len(orders) == 3 and all(r["pass"] == "true" for r in orders)


def test_failing_row_exits_one(tmp_path):
    p = write(
        tmp_path,
        'command = "consistency"\nexperiment_id = "strict"\n'
        '[problem]\nsolution = "ma1-quartic"\nn = 2\n'
        "[schedule]\neps = [0.2, 0.1]\n[tolerances]\nresidual = 1e-12\n",
    )
    assert cli.main(["consistency", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert any(r["pass"] == "false" for r in rows(tmp_path / "o" / "strict.csv"))


def test_runtime_error_exits_one(tmp_path):
    # a spacing wider than the box leaves no interior nodes, detected only when marching
    p = write(tmp_path, 'command = "solve"\n[problem]\nsolution = "ma1-quadratic"\nn = 2\n[grid]\nsteps = 1\nh = 5.0\n')
    assert cli.main(["solve", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize("name", ["lemma.toml", "consistency_ma1.toml", "solve_ma2.toml"])
def test_deterministic_csv(tmp_path, name):
    cfg = RunConfig.load(CONFIGS / name)
    if cfg.command == "lemma-check":
        cfg.samples = 10
    outs = []
    for k in range(2):
        cfg.out = str(tmp_path / f"run{k}")
        code, _ = cli.run_config(cfg)
        assert code == 0
        outs.append((Path(cfg.out) / f"{cfg.experiment_id}.csv").read_bytes())
    assert outs[0] == outs[1]


def test_game_seed_override_is_deterministic(tmp_path):
    p = write(
        tmp_path,
        'command = "game"\nexperiment_id = "g"\n[problem]\nsolution = "heat-quadratic"\nn = 2\n'
        "[schedule]\neps = [0.2]\n[game]\ncount = 2000\nt_start = 0.1\n",
    )
    data = []
    for seed in (5, 5, 6):
        out = tmp_path / f"o{len(data)}"
        assert cli.main(["game", "--config", str(p), "--seed", str(seed), "--out", str(out)]) == 0
        data.append((out / "g.csv").read_bytes())
    assert data[0] == data[1] != data[2]


def test_catalog_listing(capsys):
    assert cli.main(["catalog"]) == 0
    first = capsys.readouterr().out
    assert "ma1-quadratic: u = |x|²/2 + t solves u_t = det(D²u)^{1/n}, f = 0" in first
    assert "pucci-quadratic" in first
    cli.main(["catalog"])
    assert capsys.readouterr().out == first
