import subprocess
import sys

import pytest

from uabs_fleet.cli import main


@pytest.fixture
def micro_yaml(micro_cfg, tmp_path):
    p = tmp_path / "micro.yaml"
    p.write_text(micro_cfg.to_yaml())
    return p


def test_validate_config(capsys):
    assert main(["validate-config", "--profile", "full"]) == 0
    out = capsys.readouterr().out
    assert "tasks=15" in out and "[200, 180, 90]" in out


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["validate-config", "--config", str(tmp_path / "nope.yaml")]) == 2
    assert "error" in capsys.readouterr().err


def test_invalid_config_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("scenario: {}\nbogus: 1\n")
    assert main(["validate-config", "--config", str(p)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_unknown_strategy_exits_2(micro_yaml, tmp_path):
    assert main(["train", "--config", str(micro_yaml), "--strategy", "nope", "--out", str(tmp_path / "o")]) == 2


def test_train_then_replay(micro_yaml, tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", str(micro_yaml), "--strategy", "mamo", "--seed", "1", "--episodes", "2",
                 "--out", str(out)]) == 0
    assert (out / "metrics.csv").read_text().count("\n") == 1 + 2 * 2
    assert (out / "episodes.csv").exists()
    assert list((out / "checkpoints" / "mamo_seed1").glob("*.npz"))
    png = tmp_path / "traj.png"
    assert main(["replay", str(out / "episodes.csv"), "--config", str(micro_yaml), "--out", str(png),
                 "--task", "0", "--episode", "0"]) == 0
    assert png.stat().st_size > 0
    assert main(["replay", str(out / "episodes.csv"), "--out", str(tmp_path / "t2.png"), "--task", "7"]) == 2


def test_matrix(micro_yaml, tmp_path):
    out = tmp_path / "m"
    assert main(["matrix", "--config", str(micro_yaml), "--strategies", "mamo", "egreedy-0.6", "--seed", "0",
                 "--episodes", "1", "--out", str(out), "--no-plots"]) == 0
    assert (out / "summary.md").exists() and not (out / "returns.png").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "uabs_fleet", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for verb in ("train", "matrix", "replay", "validate-config"):
        assert verb in res.stdout
