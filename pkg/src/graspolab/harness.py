"""Experiment harness: seeded, file-in/file-out wrappers for every stage.

Each ``cmd_*`` function takes a ``RunConfig``, writes CSV artifacts under
``cfg.out``, and returns a small summary dict.  Re-running a command with the
same config and seed reproduces every output byte for byte.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as gio
from .errors import ConfigError, DataError, GraspolabError
from .gdqn import (AgentConfig, action_angles, epsilon_at, select_action, train)
from .geometry import WorkspaceConfig
from .mapping import (FitnessKind, GAConfig, MappingMatrix, ObservationSet,
                      ga_fit, lr_fit, pi_fit, predict_matrix, rmse_columns)
from .neuralnet import load_weights, save_weights
from .simenv import (DEFAULT_DEPTH_PLANE, DEFAULT_TRUE_MAPPING, EnvConfig,
                     GraspEnv, gen_position_dataset)


@dataclass
class ResultTable:
    """Small labeled table with a fixed column order."""

    columns: tuple
    rows: list

    def write(self, path, comment=None):
        gio.write_table(path, self.columns, self.rows, comment)


@dataclass(frozen=True)
class RunConfig:
    """Flat configuration shared by all subcommands; every field has a default."""

    seed: int = 0
    out: str = "runs"
    # synthetic position datasets
    n: int = 50
    noise: float = 0.0
    normalized: bool = True
    strip: float = 0.0          # >0 confines points to a diagonal band this wide
    iz_mode: str = "constant"   # constant (homogeneous 1) | plane (depth channel)
    iz_d0: float = DEFAULT_DEPTH_PLANE[0]
    iz_dx: float = DEFAULT_DEPTH_PLANE[1]
    iz_dy: float = DEFAULT_DEPTH_PLANE[2]
    # position fitting
    data: str = ""
    method: str = "pi"          # ga | lr | pi
    fitness: str = "F3"
    train_fraction: float = 0.8
    ga_population: int = 8
    ga_parents: int = 4
    ga_generations: int = 5000
    ga_init_low: float = -4.0
    ga_init_high: float = 4.0
    ga_mutation_scale: float = 1.0
    # orientation learning
    actions: int = 3
    episodes: int = 1000
    gamma: float = 0.99
    epsilon_final: float = 0.1
    training_onset: int = 50
    target_sync: int = 25
    minibatch: int = 8
    learning_rate: float = 0.00025
    replay_capacity: int = 1000
    hidden_units: int = 256
    huber_delta: float = 1.0
    env_noise: float = 0.02
    detector_jitter: float = 0.0
    tolerance: float = 0.0      # 0 means half the smallest angle-table gap
    attempts: int = 100
    eval_epsilon: float = 0.0   # exploration rate during eval; 0 = pure greedy
    checkpoint: str = ""

    def __post_init__(self):
        if self.iz_mode not in ("constant", "plane"):
            raise ConfigError(f"iz_mode must be constant or plane, got {self.iz_mode!r}")
        if self.method not in ("ga", "lr", "pi"):
            raise ConfigError(f"method must be ga, lr or pi, got {self.method!r}")
        if self.fitness not in FitnessKind.__members__:
            raise ConfigError(f"fitness must be one of F1..F8, got {self.fitness!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie strictly between 0 and 1")
        if self.attempts < 0:
            raise ConfigError("attempts must be >= 0")
        if not 0.0 <= self.eval_epsilon <= 1.0:
            raise ConfigError("eval_epsilon must lie in [0, 1]")
        if self.strip < 0.0:
            raise ConfigError("strip must be >= 0")

    def comment(self) -> str:
        """Resolved settings for output headers; 'out' itself is not semantic."""
        pairs = []
        for f in dataclasses.fields(self):
            if f.name == "out":
                continue
            pairs.append(f"{f.name}={getattr(self, f.name)}")
        return " ".join(pairs)


_TRUE_PARSES = ("1", "true", "yes", "on")
_FALSE_PARSES = ("0", "false", "no", "off")


def _parse_field(f: dataclasses.Field, raw: str):
    if f.type == "bool" or isinstance(f.default, bool):
        low = raw.strip().lower()
        if low in _TRUE_PARSES:
            return True
        if low in _FALSE_PARSES:
            return False
        raise ConfigError(f"{f.name}: expected a boolean, got {raw!r}")
    try:
        if isinstance(f.default, int) and not isinstance(f.default, bool):
            return int(raw)
        if isinstance(f.default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{f.name}: {exc}") from exc
    return raw


def load_config(path=None, overrides=None) -> RunConfig:
    """Build a RunConfig from an optional key=value file plus overrides."""
    known = {f.name: f for f in dataclasses.fields(RunConfig)}
    values = {}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_field(known[key], raw.strip())
    for key, value in (overrides or {}).items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _parse_field(known[key], value)
        values[key] = value
    return RunConfig(**values)


def _outdir(cfg: RunConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _depth_plane(cfg: RunConfig):
    if cfg.iz_mode == "plane":
        return (cfg.iz_d0, cfg.iz_dx, cfg.iz_dy)
    return None


def split_indices(n: int, fraction: float, seed: int):
    """Seeded shuffle, then a leading train block; shared by all methods."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(round(n * fraction))
    n_train = min(max(n_train, 1), n - 1)
    return perm[:n_train], perm[n_train:]


def _load_dataset(cfg: RunConfig) -> ObservationSet:
    if not cfg.data:
        raise ConfigError("no dataset given; set data=<observations csv>")
    return gio.read_observations(cfg.data)


def cmd_gen_data(cfg: RunConfig) -> dict:
    """Generate a synthetic observation set and its ground-truth map."""
    if cfg.n < 3:
        raise ConfigError(
            f"n={cfg.n} cannot support a rank-3 image matrix; need at least 3 points"
        )
    out = _outdir(cfg)
    rng = np.random.default_rng(cfg.seed)
    obs = gen_position_dataset(
        cfg.n, DEFAULT_TRUE_MAPPING, cfg.noise, rng,
        workspace=WorkspaceConfig(), normalized=cfg.normalized,
        depth_plane=_depth_plane(cfg), strip_width=cfg.strip,
    )
    data_path = out / "observations.csv"
    mstar_path = out / "mstar.csv"
    gio.write_observations(data_path, obs, cfg.comment())
    gio.write_matrix(mstar_path, DEFAULT_TRUE_MAPPING, cfg.comment())
    return {"paths": {"observations": data_path, "mstar": mstar_path}, "n": cfg.n}


def _ga_config(cfg: RunConfig) -> GAConfig:
    return GAConfig(
        solutions_per_population=cfg.ga_population,
        num_parents=cfg.ga_parents,
        generations=cfg.ga_generations,
        gene_init_low=cfg.ga_init_low,
        gene_init_high=cfg.ga_init_high,
        mutation_scale=cfg.ga_mutation_scale,
        seed=cfg.seed,
    )


def cmd_compare_fitness(cfg: RunConfig) -> dict:
    """GA-fit the train split under F1..F8 and rank held-out RMSE."""
    obs = _load_dataset(cfg)
    if obs.n < 13:
        raise DataError(f"fitness comparison needs >= 13 observations, got {obs.n}")
    train_idx, test_idx = split_indices(obs.n, cfg.train_fraction, cfg.seed)
    train_set = obs.subset(train_idx)
    test_set = obs.subset(test_idx)
    ga_cfg = _ga_config(cfg)
    results = []
    for kind in FitnessKind:
        try:
            model, _ = ga_fit(train_set, ga_cfg, kind)
            err = rmse_columns(predict_matrix(model, test_set.image), test_set.robot)
            results.append((kind.name, err, "ok"))
        except GraspolabError as exc:
            results.append((kind.name, float("nan"), exc.category))
    ok = sorted((r for r in results if r[2] == "ok"), key=lambda r: (r[1], r[0]))
    failed = sorted((r for r in results if r[2] != "ok"), key=lambda r: r[0])
    winner = ok[0][0] if ok else ""
    table = ResultTable(("fitness", "heldout_rmse", "status"), ok + failed)
    table.rows = list(table.rows) + [("winner", winner, "")]
    out = _outdir(cfg)
    path = out / "fitness_compare.csv"
    table.write(path, cfg.comment())
    return {"paths": {"table": path}, "results": ok + failed, "winner": winner}


def cmd_fit_position(cfg: RunConfig) -> dict:
    """Fit one mapping method on the shared split and report train/test RMSE."""
    obs = _load_dataset(cfg)
    if obs.n < 5:
        raise DataError(f"position fitting needs >= 5 observations, got {obs.n}")
    train_idx, test_idx = split_indices(obs.n, cfg.train_fraction, cfg.seed)
    train_set = obs.subset(train_idx)
    test_set = obs.subset(test_idx)
    out = _outdir(cfg)
    paths = {}
    history = None
    if cfg.method == "ga":
        model, history = ga_fit(train_set, _ga_config(cfg), FitnessKind[cfg.fitness])
        paths["model"] = out / "model_matrix.csv"
        gio.write_matrix(paths["model"], model, cfg.comment())
    elif cfg.method == "pi":
        model = pi_fit(train_set)
        paths["model"] = out / "model_matrix.csv"
        gio.write_matrix(paths["model"], model, cfg.comment())
    else:
        model = lr_fit(train_set)
        paths["model"] = out / "model_lines.csv"
        gio.write_axis_lines(paths["model"], model, cfg.comment())
    train_rmse = rmse_columns(predict_matrix(model, train_set.image), train_set.robot)
    test_rmse = rmse_columns(predict_matrix(model, test_set.image), test_set.robot)
    paths["metrics"] = out / "metrics.csv"
    gio.write_table(paths["metrics"], ("metric", "value"),
                    [("method", cfg.method), ("train_rmse", train_rmse),
                     ("test_rmse", test_rmse)], cfg.comment())
    predicted = predict_matrix(model, test_set.image)
    rows = [
        (int(i), test_set.image[0, j], test_set.image[1, j], test_set.image[2, j],
         test_set.robot[0, j], test_set.robot[1, j], test_set.robot[2, j],
         predicted[0, j], predicted[1, j], predicted[2, j])
        for j, i in enumerate(test_idx)
    ]
    paths["points"] = out / "points.csv"
    gio.write_table(paths["points"],
                    ("index", "ix", "iy", "iz", "rx", "ry", "rz", "px", "py", "pz"),
                    rows, cfg.comment())
    if history is not None:
        paths["history"] = out / "ga_history.csv"
        gio.write_table(paths["history"], ("generation", "best_fitness"),
                        list(enumerate(history)), cfg.comment())
    return {"paths": paths, "method": cfg.method,
            "train_rmse": train_rmse, "test_rmse": test_rmse, "model": model}


def _agent_config(cfg: RunConfig) -> AgentConfig:
    return AgentConfig(
        n_actions=cfg.actions,
        gamma=cfg.gamma,
        epsilon_final=cfg.epsilon_final,
        n_episodes=cfg.episodes,
        training_onset=min(cfg.training_onset, max(cfg.episodes, 1)),
        target_sync_interval=cfg.target_sync,
        minibatch_size=cfg.minibatch,
        learning_rate=cfg.learning_rate,
        replay_capacity=cfg.replay_capacity,
        hidden_units=cfg.hidden_units,
        huber_delta=cfg.huber_delta,
        seed=cfg.seed,
    )


def _env_config(cfg: RunConfig, n_actions: int, seed: int) -> EnvConfig:
    return EnvConfig(
        angles=action_angles(n_actions),
        tolerance=cfg.tolerance if cfg.tolerance > 0 else None,
        workspace=WorkspaceConfig(),
        render_noise=cfg.env_noise,
        detector_jitter=cfg.detector_jitter,
        seed=seed,
    )


def _derived_seeds(seed: int, count: int):
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


_BLOCK = 50


def cmd_train_orient(cfg: RunConfig) -> dict:
    """Train the orientation learner and write logs plus a checkpoint."""
    agent_cfg = _agent_config(cfg)
    env_seed, _ = _derived_seeds(cfg.seed, 2)
    env = GraspEnv(_env_config(cfg, cfg.actions, env_seed))
    net, records = train(env, agent_cfg)
    out = _outdir(cfg)
    comment = cfg.comment()
    paths = {"episodes": out / "episodes.csv"}
    gio.write_episode_log(paths["episodes"], records, comment)
    blocks = []
    for start in range(0, len(records), _BLOCK):
        chunk = records[start:start + _BLOCK]
        reward_rate = sum(r.reward for r in chunk) / len(chunk)
        greedy_rate = sum(
            1 for r in chunk if r.greedy_action == r.optimal_action) / len(chunk)
        blocks.append((start // _BLOCK, start, start + len(chunk) - 1, len(chunk),
                       reward_rate, greedy_rate))
    paths["blocks"] = out / "blocks.csv"
    gio.write_table(paths["blocks"],
                    ("block", "episode_start", "episode_end", "episodes",
                     "reward_rate", "greedy_rate"), blocks, comment)
    paths["epsilon"] = out / "epsilon.csv"
    gio.write_table(paths["epsilon"], ("episode", "epsilon"),
                    [(e, epsilon_at(e, agent_cfg)) for e in range(agent_cfg.n_episodes + 1)],
                    comment)
    paths["checkpoint"] = out / "model.gqn"
    Path(paths["checkpoint"]).write_bytes(save_weights(net))
    paths["checkpoint_config"] = out / "model_config.csv"
    gio.write_table(paths["checkpoint_config"], ("field", "value"),
                    [(f.name, getattr(agent_cfg, f.name))
                     for f in dataclasses.fields(agent_cfg)], comment)
    summary = {
        "paths": paths,
        "episodes": len(records),
        "score": records[-1].score if records else 0.0,
        "final_block_reward_rate": blocks[-1][4] if blocks else float("nan"),
        "final_block_greedy_rate": blocks[-1][5] if blocks else float("nan"),
        "records": records,
        "network": net,
    }
    return summary


def read_agent_sidecar(path) -> AgentConfig:
    """Rebuild the AgentConfig stored next to a checkpoint."""
    fields = {f.name: f for f in dataclasses.fields(AgentConfig)}
    values = {}
    for lineno, row in gio._read_rows(path, ("field", "value")):
        if len(row) != 2 or row[0] not in fields:
            raise DataError(f"{path}:{lineno}: unexpected sidecar row {row}")
        values[row[0]] = _parse_field(fields[row[0]], row[1])
    missing = set(fields) - set(values)
    if missing:
        raise DataError(f"{path}: sidecar missing fields {sorted(missing)}")
    return AgentConfig(**values)


def cmd_eval_orient(cfg: RunConfig) -> dict:
    """Success rate of a checkpointed model on fresh grasp attempts.

    Pure greedy by default; cfg.eval_epsilon > 0 mixes in uniform random
    actions, which at 1.0 measures the agent's pre-training behavior.
    """
    if not cfg.checkpoint:
        raise ConfigError("no checkpoint given; set checkpoint=<model.gqn>")
    ckpt_path = Path(cfg.checkpoint)
    try:
        payload = ckpt_path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {ckpt_path}: {exc}") from exc
    net = load_weights(payload)
    sidecar = ckpt_path.with_name(ckpt_path.stem + "_config.csv")
    agent_cfg = read_agent_sidecar(sidecar)
    n_actions = agent_cfg.n_actions
    if net.output_shape != (n_actions,):
        raise DataError(
            f"checkpoint outputs {net.output_shape} but sidecar says {n_actions} actions"
        )
    table = action_angles(n_actions)
    eval_seed, policy_seed = _derived_seeds(cfg.seed + 1, 2)
    env = GraspEnv(_env_config(cfg, n_actions, eval_seed))
    policy_rng = np.random.default_rng(policy_seed)
    state = env.reset()
    outcomes = []
    for _ in range(cfg.attempts):
        action = select_action(net.forward_one(state), cfg.eval_epsilon, policy_rng)
        result = env.step(table[action])
        outcomes.append(result.reward)
        state = result.next_state
    rows = []
    for start in range(0, len(outcomes), 10):
        chunk = outcomes[start:start + 10]
        rows.append((start // 10, len(chunk), sum(chunk), sum(chunk) / len(chunk)))
    successes = sum(outcomes)
    rate = successes / cfg.attempts if cfg.attempts else float("nan")
    out = _outdir(cfg)
    path = out / "eval_blocks.csv"
    gio.write_table(path, ("block", "attempts", "successes", "rate"), rows, cfg.comment())
    return {"paths": {"table": path}, "attempts": cfg.attempts,
            "successes": successes, "rate": rate,
            "table": ResultTable(("block", "attempts", "successes", "rate"), rows)}
