"""
Tests for the command line entry point
Run with: pytest tests/
"""
import pytest

from app.cli import EXIT_ERROR, main

CONFIG = "world.preset = straight_line\npartition.n_max = 6\npartition.n_ovlp = 2\n"


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(CONFIG)
    return path


def parse_output(text: str) -> dict:
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


def test_partition(config_file, tmp_path, capsys):
    """partition prints the state string and writes partition.csv"""
    assert main(["partition", "--config", str(config_file), "--out", str(tmp_path / "out")]) == 0
    values = parse_output(capsys.readouterr().out)
    assert values["n_frames"] == "120"
    assert len(values["states"]) == 120
    assert (tmp_path / "out" / "partition.csv").exists()


def test_generate_then_run_and_eval(config_file, tmp_path, capsys):
    """A generated world evaluates cleanly against the run's trajectory"""
    world = tmp_path / "world"
    assert main(["generate", "--config", str(config_file), "--out", str(world)]) == 0
    assert (world / "ground_truth.tum").exists()
    capsys.readouterr()

    run = tmp_path / "run"
    assert main(["run", "--config", str(config_file), "--out", str(run), "--loop-mode", "off"]) == 0
    values = parse_output(capsys.readouterr().out)
    assert float(values["ate_rmse_m"]) < 1e-6
    assert values["loop_edges"] == "0"

    assert main(["eval", str(run / "trajectory.tum"), str(world / "ground_truth.tum"), "--out", str(tmp_path)]) == 0
    values = parse_output(capsys.readouterr().out)
    assert float(values["ate_rmse_m"]) < 1e-6
    assert (tmp_path / "metrics.txt").exists()


def test_run_kitti_with_seed(config_file, tmp_path, capsys):
    """--format and --seed override the file"""
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_file), "--out", str(out), "--format", "kitti", "--seed", "5"]) == 0
    assert (out / "trajectory.kitti").exists()
    assert '"seed": 5' in (out / "report.json").read_text()


def test_missing_config_exits_with_error(tmp_path, capsys):
    """Errors print one line to stderr and exit with status 2"""
    assert main(["run", "--config", str(tmp_path / "missing.conf")]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_eval_missing_trajectory(tmp_path, capsys):
    """A missing trajectory file is reported, not raised"""
    assert main(["eval", str(tmp_path / "a.tum"), str(tmp_path / "b.tum")]) == EXIT_ERROR
    assert "a.tum" in capsys.readouterr().err


def test_unknown_loop_mode_is_a_usage_error(config_file):
    """argparse rejects choices outside uni, bi and off"""
    with pytest.raises(SystemExit):
        main(["run", "--config", str(config_file), "--loop-mode", "sideways"])
