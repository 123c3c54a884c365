"""File-in/file-out pipeline commands, config parsing, CLI entry point."""

import math

import numpy as np
import pytest

from graspolab import (
    ConfigError, DataError, DEFAULT_TRUE_MAPPING, DegenerateAxisError,
    RunConfig, cmd_compare_fitness, cmd_eval_orient, cmd_fit_position,
    cmd_gen_data, cmd_train_orient, load_config, split_indices,
)
from graspolab import io as gio
from graspolab.cli import main
from graspolab.harness import read_agent_sidecar
from graspolab.neuralnet import load_weights


def gen(tmp_path, name="data", **kw):
    cfg = RunConfig(out=str(tmp_path / name), **kw)
    return cmd_gen_data(cfg)["paths"]["observations"]


# ------------------------------------------------------------------- config

def test_load_config_defaults():
    assert load_config() == RunConfig()


def test_load_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# trailing settings win\nn = 12\nnoise=0.25\nnormalized = no\n"
        "\niz_mode=plane\nn=14\n")
    cfg = load_config(path)
    assert cfg.n == 14
    assert cfg.noise == 0.25
    assert cfg.normalized is False
    assert cfg.iz_mode == "plane"


def test_load_config_overrides_beat_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("n=7\n")
    cfg = load_config(path, {"n": "9", "seed": 4})
    assert cfg.n == 9 and cfg.seed == 4


def test_load_config_rejects_bad_input(tmp_path):
    bad = [("bogus=1", "unknown config key"),
           ("normalized=maybe", "expected a boolean"),
           ("n=abc", "n:"),
           ("just a line", "expected key=value")]
    for text, fragment in bad:
        path = tmp_path / "bad.cfg"
        path.write_text(text + "\n")
        with pytest.raises(ConfigError, match=fragment):
            load_config(path)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")
    with pytest.raises(ConfigError, match="unknown config key"):
        load_config(None, {"bogus": 1})


def test_run_config_validation():
    for kw in ({"iz_mode": "diag"}, {"method": "nn"}, {"fitness": "F9"},
               {"train_fraction": 1.0}, {"attempts": -1},
               {"eval_epsilon": 1.5}, {"strip": -0.1}):
        with pytest.raises(ConfigError):
            RunConfig(**kw)


def test_config_comment_omits_out():
    a = RunConfig(out="here").comment()
    b = RunConfig(out="there").comment()
    assert a == b
    assert "seed=0" in a and "out=" not in a


# -------------------------------------------------------------------- split

def test_split_indices_sizes_and_partition():
    train, test = split_indices(50, 0.8, 0)
    assert len(train) == 40 and len(test) == 10
    assert sorted(np.concatenate([train, test])) == list(range(50))


def test_split_indices_deterministic():
    assert np.array_equal(split_indices(50, 0.8, 3)[0], split_indices(50, 0.8, 3)[0])
    assert not np.array_equal(split_indices(50, 0.8, 3)[0], split_indices(50, 0.8, 4)[0])


def test_split_indices_keeps_both_sides_nonempty():
    train, test = split_indices(5, 0.99, 0)
    assert len(train) == 4 and len(test) == 1
    train, test = split_indices(5, 0.01, 0)
    assert len(train) == 1 and len(test) == 4


# ----------------------------------------------------------------- gen-data

def test_gen_data_writes_dataset_and_true_map(tmp_path):
    cfg = RunConfig(out=str(tmp_path / "d"), n=17, seed=5)
    result = cmd_gen_data(cfg)
    obs = gio.read_observations(result["paths"]["observations"])
    assert obs.n == 17
    mstar = gio.read_matrix(result["paths"]["mstar"])
    assert np.array_equal(mstar.m, DEFAULT_TRUE_MAPPING.m)


def test_gen_data_rejects_tiny_n(tmp_path):
    with pytest.raises(ConfigError, match="rank-3"):
        cmd_gen_data(RunConfig(out=str(tmp_path), n=2))


def test_gen_data_byte_identical_across_out_dirs(tmp_path):
    a = gen(tmp_path, "a", n=25, noise=0.01, seed=9)
    b = gen(tmp_path, "b", n=25, noise=0.01, seed=9)
    assert a.read_bytes() == b.read_bytes()
    c = gen(tmp_path, "c", n=25, noise=0.01, seed=10)
    assert a.read_bytes() != c.read_bytes()


# ------------------------------------------------------------- fit-position

def test_fit_position_pi_recovers_noiseless_map(tmp_path):
    data = gen(tmp_path, n=40, noise=0.0, seed=2)
    result = cmd_fit_position(RunConfig(out=str(tmp_path / "fit"), data=str(data),
                                        method="pi", seed=2))
    assert result["test_rmse"] <= 1e-9
    assert result["train_rmse"] <= 1e-9
    for key in ("model", "metrics", "points"):
        assert result["paths"][key].exists()
    points_lines = result["paths"]["points"].read_text().splitlines()
    assert len(points_lines) == 2 + 8  # comment, header, 20% of 40


def test_fit_position_ga_writes_history(tmp_path):
    data = gen(tmp_path, n=20, noise=0.0, seed=3)
    result = cmd_fit_position(RunConfig(out=str(tmp_path / "fit"), data=str(data),
                                        method="ga", fitness="F1",
                                        ga_generations=120, seed=3))
    history = result["paths"]["history"].read_text().splitlines()
    assert len(history) == 2 + 120
    assert math.isfinite(result["test_rmse"])
    best = [float(line.split(",")[1]) for line in history[2:]]
    assert best == sorted(best, reverse=True)


def test_fit_position_lr_cannot_express_depth_coupling(tmp_path):
    data = gen(tmp_path, n=40, noise=0.0, seed=4, iz_mode="plane")
    out = tmp_path / "fit"
    pi = cmd_fit_position(RunConfig(out=str(out / "pi"), data=str(data),
                                    method="pi", seed=4))
    lr = cmd_fit_position(RunConfig(out=str(out / "lr"), data=str(data),
                                    method="lr", seed=4))
    assert pi["test_rmse"] <= 1e-9
    assert lr["test_rmse"] > 1e-3
    assert lr["paths"]["model"].name == "model_lines.csv"


def test_fit_position_lr_degenerate_axis_surfaces(tmp_path):
    data = gen(tmp_path, n=20, noise=0.0, seed=5)  # iz constant 1
    with pytest.raises(DegenerateAxisError) as err:
        cmd_fit_position(RunConfig(out=str(tmp_path / "fit"), data=str(data),
                                   method="lr", seed=5))
    assert err.value.axis == "z"


def test_fit_position_needs_data(tmp_path):
    with pytest.raises(ConfigError, match="no dataset"):
        cmd_fit_position(RunConfig(out=str(tmp_path)))
    small = gen(tmp_path, n=4, noise=0.0, seed=6)
    with pytest.raises(DataError, match=">= 5"):
        cmd_fit_position(RunConfig(out=str(tmp_path / "fit"), data=str(small)))


# ------------------------------------------------------------ compare-fitness

def test_compare_fitness_ranks_all_eight(tmp_path):
    data = gen(tmp_path, n=16, noise=0.0, seed=7)
    result = cmd_compare_fitness(RunConfig(out=str(tmp_path / "cmp"), data=str(data),
                                           ga_generations=60, seed=7))
    rows = result["results"]
    assert sorted(r[0] for r in rows) == [f"F{i}" for i in range(1, 9)]
    ok = [r for r in rows if r[2] == "ok"]
    assert [r[1] for r in ok] == sorted(r[1] for r in ok)
    assert result["winner"] == ok[0][0]
    lines = result["paths"]["table"].read_text().splitlines()
    assert lines[1] == "fitness,heldout_rmse,status"
    assert lines[-1].startswith("winner,")


def test_compare_fitness_needs_thirteen_points(tmp_path):
    data = gen(tmp_path, n=12, noise=0.0, seed=8)
    with pytest.raises(DataError, match=">= 13"):
        cmd_compare_fitness(RunConfig(out=str(tmp_path / "cmp"), data=str(data)))


# ------------------------------------------------------------- train-orient

def train_small(tmp_path, name="train", **kw):
    kw.setdefault("actions", 3)
    kw.setdefault("episodes", 60)
    kw.setdefault("hidden_units", 8)
    kw.setdefault("seed", 0)
    return cmd_train_orient(RunConfig(out=str(tmp_path / name), **kw))


def test_train_orient_artifacts(tmp_path):
    result = train_small(tmp_path)
    assert result["episodes"] == 60
    episodes = result["paths"]["episodes"].read_text().splitlines()
    assert len(episodes) == 2 + 60
    blocks = result["paths"]["blocks"].read_text().splitlines()
    assert len(blocks) == 2 + 2  # one full 50 block plus a 10 remainder
    assert blocks[2].startswith("0,0,49,50,")
    assert blocks[3].startswith("1,50,59,10,")
    epsilon = result["paths"]["epsilon"].read_text().splitlines()
    assert len(epsilon) == 2 + 61
    assert epsilon[-1] == "60,0.1"
    assert 0.0 <= result["final_block_reward_rate"] <= 1.0
    assert 0.0 <= result["final_block_greedy_rate"] <= 1.0


def test_train_orient_sidecar_round_trip(tmp_path):
    result = train_small(tmp_path)
    agent_cfg = read_agent_sidecar(result["paths"]["checkpoint_config"])
    assert agent_cfg.n_actions == 3
    assert agent_cfg.n_episodes == 60
    assert agent_cfg.hidden_units == 8
    net = load_weights(result["paths"]["checkpoint"].read_bytes())
    assert net.output_shape == (3,)
    for (w_a, b_a), (w_b, b_b) in zip(net.weights, result["network"].weights):
        assert np.array_equal(w_a, w_b) and np.array_equal(b_a, b_b)


def test_train_orient_zero_episodes_still_checkpoints(tmp_path):
    result = train_small(tmp_path, episodes=0)
    assert result["episodes"] == 0
    assert result["score"] == 0.0
    assert math.isnan(result["final_block_greedy_rate"])
    assert load_weights(result["paths"]["checkpoint"].read_bytes()).output_shape == (3,)
    epsilon = result["paths"]["epsilon"].read_text().splitlines()
    assert epsilon[2:] == ["0,1.0"]


def test_train_orient_byte_identical_reruns(tmp_path):
    a = train_small(tmp_path, "a")
    b = train_small(tmp_path, "b")
    for key in ("episodes", "blocks", "checkpoint"):
        assert a["paths"][key].read_bytes() == b["paths"][key].read_bytes()


# -------------------------------------------------------------- eval-orient

def test_eval_orient_scores_checkpoint(tmp_path):
    trained = train_small(tmp_path)
    result = cmd_eval_orient(RunConfig(out=str(tmp_path / "eval"),
                                       checkpoint=str(trained["paths"]["checkpoint"]),
                                       attempts=30, seed=0))
    assert result["attempts"] == 30
    assert result["successes"] == sum(r[2] for r in result["table"].rows)
    assert result["rate"] == result["successes"] / 30
    lines = result["paths"]["table"].read_text().splitlines()
    assert len(lines) == 2 + 3  # 10-attempt blocks


def test_eval_orient_deterministic(tmp_path):
    trained = train_small(tmp_path)
    ckpt = str(trained["paths"]["checkpoint"])
    a = cmd_eval_orient(RunConfig(out=str(tmp_path / "ea"), checkpoint=ckpt,
                                  attempts=30, eval_epsilon=0.3, seed=1))
    b = cmd_eval_orient(RunConfig(out=str(tmp_path / "eb"), checkpoint=ckpt,
                                  attempts=30, eval_epsilon=0.3, seed=1))
    assert a["paths"]["table"].read_bytes() == b["paths"]["table"].read_bytes()


def test_eval_orient_zero_attempts(tmp_path):
    trained = train_small(tmp_path)
    result = cmd_eval_orient(RunConfig(out=str(tmp_path / "eval"),
                                       checkpoint=str(trained["paths"]["checkpoint"]),
                                       attempts=0))
    assert math.isnan(result["rate"])
    assert result["table"].rows == []


def test_eval_orient_checkpoint_errors(tmp_path):
    with pytest.raises(ConfigError, match="no checkpoint"):
        cmd_eval_orient(RunConfig(out=str(tmp_path)))
    with pytest.raises(DataError, match="cannot read"):
        cmd_eval_orient(RunConfig(out=str(tmp_path),
                                  checkpoint=str(tmp_path / "missing.gqn")))


def test_eval_orient_sidecar_mismatch(tmp_path):
    trained = train_small(tmp_path)
    sidecar = trained["paths"]["checkpoint_config"]
    sidecar.write_text(sidecar.read_text().replace("n_actions,3", "n_actions,12"))
    with pytest.raises(DataError, match="12 actions"):
        cmd_eval_orient(RunConfig(out=str(tmp_path / "eval"),
                                  checkpoint=str(trained["paths"]["checkpoint"])))


# ---------------------------------------------------------------------- cli

def test_cli_gen_data_success(tmp_path, capsys):
    code = main(["gen-data", "--out", str(tmp_path / "d"), "--n", "10", "--seed", "3"])
    out = capsys.readouterr().out
    assert code == 0
    assert "observations:" in out and "mstar:" in out


def test_cli_reports_config_errors(tmp_path, capsys):
    code = main(["fit-position", "--data", "x.csv", "--method", "bogus",
                 "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == 1
    assert captured.err.startswith("error category=config")


def test_cli_reports_data_errors(tmp_path, capsys):
    code = main(["compare-fitness", "--data", str(tmp_path / "absent.csv"),
                 "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == 1
    assert captured.err.startswith("error category=data")


def test_cli_eval_epsilon_flag_maps_to_config(tmp_path, capsys):
    trained = train_small(tmp_path, episodes=0)
    code = main(["eval-orient", "--checkpoint", str(trained["paths"]["checkpoint"]),
                 "--attempts", "10", "--eval-epsilon", "1.0",
                 "--out", str(tmp_path / "eval"), "--seed", "2"])
    out = capsys.readouterr().out
    assert code == 0
    assert "rate:" in out and "table:" in out
