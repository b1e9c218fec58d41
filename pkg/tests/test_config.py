"""
Tests for run configuration files and command-line overrides
Run with: pytest tests/
"""
import pytest

from app.exceptions import ConfigError
from app.models.pipeline import PipelineMode
from app.models.submap import LoopReuseMode
from app.models.trajectory import TrajectoryFormat
from app.schemas.pipeline import PipelineConfig
from app.utils.kvconfig import build_config, load_config, parse_kv


def test_default_thresholds():
    """Parameter blocks take their defaults from settings"""
    config = PipelineConfig()
    assert (config.motion.tau_flow, config.motion.tau_static, config.motion.tau_turn) == (0.7, 0.6, 5.0)
    assert (config.partition.tau_palx, config.registration.tau_conf) == (15.0, 0.5)
    assert (config.partition.n_max, config.partition.n_ovlp) == (12, 5)
    assert config.mode == PipelineMode.SYNTHETIC


def test_parse_sections_and_comments():
    """Pipeline keys sit at the top level, others nest by section"""
    data = parse_kv(
        "# run\nmode = synthetic\noutput_dir = out # trailing\n"
        "pipeline.trajectory_format = kitti\nworld.seed = 7\npartition.n_max = 10\nreplay.loop_candidates = none\n"
    )
    assert data["trajectory_format"] == "kitti"
    assert data["world"] == {"seed": "7"}
    assert data["partition"] == {"n_max": "10"}
    assert data["replay"] == {"loop_candidates": None}


@pytest.mark.parametrize(
    "text",
    ["world.seed 7\n", "colour.depth = 3\n", "world.seed = 1\nworld.seed = 2\n"],
)
def test_parse_errors(text):
    """Missing '=', unknown sections and duplicate keys are config errors"""
    with pytest.raises(ConfigError):
        parse_kv(text)


def test_unknown_key_is_rejected():
    """Typos in threshold names do not pass silently"""
    with pytest.raises(ConfigError) as exc_info:
        build_config(parse_kv("motion.tau_stati = 0.5\n"))
    assert "motion" in str(exc_info.value)


def test_invalid_value_names_the_key():
    """Validation errors point at the offending key"""
    with pytest.raises(ConfigError) as exc_info:
        build_config(parse_kv("partition.n_max = 3\npartition.n_ovlp = 5\n"))
    assert "partition" in str(exc_info.value)


def test_load_with_overrides(tmp_path):
    """Dotted overrides win over file values"""
    path = tmp_path / "run.cfg"
    path.write_text(
        "world.preset = stop_and_go\nworld.seed = 3\npartition.loop_reuse_mode = uni\n",
        encoding="utf-8",
    )
    config = load_config(
        path,
        {
            "world.seed": 11,
            "partition.loop_reuse_mode": "bi",
            "pipeline.trajectory_format": "kitti",
            "pipeline.output_dir": str(tmp_path / "out"),
        },
    )
    assert config.seed == 11
    assert config.partition.loop_reuse_mode == LoopReuseMode.BIDIRECTIONAL
    assert config.trajectory_format == TrajectoryFormat.KITTI
    assert config.output_dir == str(tmp_path / "out")
    assert config.loop_mode == "bi"


def test_loop_mode_off():
    """Disabling loop detection reports the mode as off"""
    config = build_config({}, {"partition.loop_detection": "false"})
    assert config.loop_mode == "off"


def test_replay_needs_directory():
    """Replay mode without an input directory is refused"""
    with pytest.raises(ConfigError):
        build_config({"mode": "replay"})


def test_missing_file(tmp_path):
    """An unreadable config file is a config error"""
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")
