import json

import pytest
import yaml

from roe_lab import main
from helpers.dp_utils import read_reports


def write_config(path, **overrides):
    raw = {
        "name": "cli",
        "total_steps": 40,
        "eval_every": 20,
        "eval_episodes": 2,
        "seeds": [0, 1],
        "learner": {"n_quantiles": 4, "batch_size": 4},
        "policy": {"kind": "roe_scalar", "k": 20},
    }
    raw.update(overrides)
    path.write_text(yaml.safe_dump(raw, sort_keys=False), encoding="utf-8")
    return path


def test_train_writes_every_seed(tmp_path, capsys):
    config = write_config(tmp_path / "cli.yaml")
    out = tmp_path / "out"
    assert main(["train", "--config", str(config), "--out", str(out)]) == 0

    for seed in (0, 1):
        assert (out / f"metrics_seed{seed}.ndjson").exists()
        assert (out / f"checkpoint_seed{seed}.ndjson").exists()
    assert (out / "resolved_config.yaml").exists()
    assert (out / "roe_lab.log").exists()
    assert "seed 1 episodes" in capsys.readouterr().out


def test_train_reports_matrix_game_landmarks(tmp_path, capsys):
    config = write_config(tmp_path / "cli.yaml", seeds=[0])
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "out")]) == 0
    printed = capsys.readouterr().out
    assert "game optimum" in printed and "8 at (0, 0)" in printed
    assert "(2, 2) pays 5" in printed


def test_grid_train_has_no_game_landmarks(tmp_path, capsys):
    config = write_config(
        tmp_path / "grid.yaml", seeds=[0], warmup_steps=10,
        env={"kind": "predator_prey", "predator_prey": {"width": 5, "height": 5, "n_predators": 2,
                                                        "n_prey": 1, "max_steps": 10}},
    )
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "out")]) == 0
    assert "game optimum" not in capsys.readouterr().out


def test_train_single_seed(tmp_path):
    config = write_config(tmp_path / "cli.yaml")
    out = tmp_path / "out"
    assert main(["train", "--config", str(config), "--out", str(out), "--seed", "5"]) == 0
    assert [p.name for p in sorted(out.glob("metrics_*"))] == ["metrics_seed5.ndjson"]


def test_bad_config_exits_with_one(tmp_path, capsys):
    config = write_config(tmp_path / "bad.yaml", learner={"alpha": 0.1})
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "out")]) == 1
    assert "learner.alpha" in capsys.readouterr().out


def test_eval_reads_a_checkpoint(tmp_path, capsys):
    config = write_config(tmp_path / "cli.yaml", seeds=[0])
    out = tmp_path / "out"
    assert main(["train", "--config", str(config), "--out", str(out)]) == 0
    capsys.readouterr()

    assert main(["eval", "--checkpoint", str(out / "checkpoint_seed0.ndjson"), "--episodes", "3"]) == 0
    printed = capsys.readouterr().out
    assert "return at [0, 1]" in printed


def test_eval_missing_checkpoint(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "absent.ndjson")]) == 1


def test_sweep_writes_tables(tmp_path):
    config = write_config(tmp_path / "cli.yaml", sweep={"policies": [{"kind": "epsilon_greedy"}, {"kind": "dltv"}]})
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(config), "--out", str(out)]) == 0
    assert (out / "sweep_runs.csv").exists()
    assert (out / "sweep_summary.csv").exists()
    assert (out / "dltv" / "metrics_seed1.ndjson").exists()


def test_verify_dp_reports(tmp_path):
    out = tmp_path / "dp"
    assert main(["verify-dp", "--trials", "5", "--out", str(out)]) == 0
    reports = read_reports(out / "dp_report.ndjson")
    assert reports and all(r.passed for r in reports)
    first = json.loads((out / "dp_report.ndjson").read_text(encoding="utf-8").splitlines()[0])
    assert first["check"] == reports[0].check


def test_unknown_command_is_rejected():
    with pytest.raises(SystemExit):
        main(["serve"])
