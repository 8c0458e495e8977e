"""Hybrid-action PPO for the replanning policy.

The discrete head picks keep-vs-replan, the continuous head emits cone
parameters, and one critic scores states. Both actor heads are trained
with clipped surrogates on the same advantages; the continuous surrogate
only sees transitions where a replan was actually taken. All gradients
are exact reverse-mode passes through the fully connected networks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .elastic import (
    CorridorBreakError,
    KinematicLimits,
    OptimizationError,
    generate_human_trajectory,
)
from .nets import LOG_STD_MAX, LOG_STD_MIN, Adam, PolicyBundle
from .replan import PlanningError
from .rl_env import (
    CROP_WIDTH,
    HISTORY_LEN,
    OBS_DIM,
    POOL_CELLS,
    MdpAction,
    RewardConfig,
    TrainingEnv,
    squash_params,
)
from .voronoi import RouteError
from .worldmap import generate_random_world

LOG_2PI = math.log(2.0 * math.pi)

RETRYABLE = (RouteError, CorridorBreakError, OptimizationError, PlanningError)


@dataclass(frozen=True)
class TrainHyper:
    """PPO knobs; defaults are the usual ones."""

    epsilon: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    lr: float = 3e-4
    epochs: int = 4
    minibatch: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    rollout_steps: int = 512
    checkpoint_every: int = 50


@dataclass(frozen=True)
class EpisodeConfig:
    """World and reference-trajectory recipe for one training episode."""

    side: float = 5.0
    n_obstacles: int = 5
    radius_range: tuple[float, float] = (0.3, 0.5)
    start: tuple[float, float] = (-1.5, -1.5)
    goal: tuple[float, float] = (1.5, 1.5)
    resolution: float = 0.1
    robot_radius: float = 0.15
    border_walls: bool = True
    v_max: float = 0.5
    omega_max: float = 1.5
    a_max: float = 1.0
    sample_dt: float = 0.1
    decision_period: float = 0.5

    def kinematics(self) -> KinematicLimits:
        return KinematicLimits(self.v_max, self.omega_max, self.a_max)


def clipped_surrogate(ratio, adv, epsilon):
    """Elementwise min of the plain and clipped surrogate terms."""
    ratio = np.asarray(ratio, dtype=float)
    adv = np.asarray(adv, dtype=float)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * adv)


def _surrogate_grad_mask(ratio, adv, epsilon):
    # gradient flows only while the unclipped branch is the active min
    pos = (adv >= 0.0) & (ratio <= 1.0 + epsilon)
    neg = (adv < 0.0) & (ratio >= 1.0 - epsilon)
    return (pos | neg).astype(float)


def gaussian_logp(x, mean, log_std):
    """Diagonal Gaussian log-density, summed over the last axis."""
    x = np.asarray(x, dtype=float)
    z = (x - mean) / np.exp(log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def compute_gae(rewards, values, dones, last_value, gamma, lam):
    """Generalized advantage estimates and value targets.

    `last_value` bootstraps the state after the final transition; a done
    flag cuts both the bootstrap and the advantage recursion.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    cont = 1.0 - np.asarray(dones, dtype=float)
    n = len(rewards)
    adv = np.zeros(n)
    next_value = float(last_value)
    running = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * cont[t] - values[t]
        running = delta + gamma * lam * cont[t] * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def policy_heads(policy: PolicyBundle, obs: np.ndarray):
    """Batched forward through all three networks.

    Returns (logits, mean, log_std, values); log_std comes back clipped
    to the stable range.
    """
    x = np.atleast_2d(np.asarray(obs, dtype=policy.discrete.dtype))
    logits = np.asarray(policy.discrete.forward(x), dtype=float)
    cont = np.asarray(policy.continuous.forward(x), dtype=float)
    values = np.asarray(policy.value.forward(x), dtype=float)[:, 0]
    mean = cont[:, :2]
    log_std = np.clip(cont[:, 2:], LOG_STD_MIN, LOG_STD_MAX)
    return logits, mean, log_std, values


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def sample_decision(policy: PolicyBundle, obs: np.ndarray, rng: np.random.Generator):
    """Draw one hybrid action and the stats PPO needs to learn from it.

    Returns (MdpAction, record) where the record holds the raw Gaussian
    sample, both log-probabilities, and the critic value.
    """
    logits, mean, log_std, values = policy_heads(policy, obs)
    logp_all = _log_softmax(logits)[0]
    a = int(rng.random() < math.exp(logp_all[1]))
    rec = {
        "action": a,
        "raw": np.zeros(2),
        "logp_d": float(logp_all[a]),
        "logp_c": 0.0,
        "value": float(values[0]),
    }
    if a == 0:
        return MdpAction(0), rec
    raw = mean[0] + np.exp(log_std[0]) * rng.standard_normal(2)
    rec["raw"] = raw
    rec["logp_c"] = float(gaussian_logp(raw, mean[0], log_std[0]))
    h, r = squash_params(raw[0], raw[1])
    return MdpAction(1, h, r), rec


def loss_and_grads(policy: PolicyBundle, batch: dict, hyper: TrainHyper):
    """Total PPO loss and exact flat gradients for the three networks.

    `batch` carries obs, actions, raw, logp_d, logp_c, advantages,
    returns. The continuous surrogate and its entropy average over the
    replan rows only. Raises on a non-finite loss, reporting every
    component, rather than silently corrupting the parameters.
    """
    obs = np.asarray(batch["obs"], dtype=float)
    act = np.asarray(batch["actions"], dtype=int)
    raw = np.asarray(batch["raw"], dtype=float)
    old_d = np.asarray(batch["logp_d"], dtype=float)
    old_c = np.asarray(batch["logp_c"], dtype=float)
    adv = np.asarray(batch["advantages"], dtype=float)
    ret = np.asarray(batch["returns"], dtype=float)
    n = len(act)
    rows = np.arange(n)
    eps = hyper.epsilon

    logits = np.asarray(policy.discrete.forward(obs.astype(policy.discrete.dtype)), dtype=float)
    logp_all = _log_softmax(logits)
    probs = np.exp(logp_all)
    logp_a = logp_all[rows, act]
    ratio_d = np.exp(logp_a - old_d)
    loss_d = -float(np.mean(clipped_surrogate(ratio_d, adv, eps)))
    dlogp_a = -_surrogate_grad_mask(ratio_d, adv, eps) * adv * ratio_d / n

    onehot = np.zeros((n, 2))
    onehot[rows, act] = 1.0
    dlogits = dlogp_a[:, None] * (onehot - probs)

    ent_d = -np.sum(probs * logp_all, axis=1)
    entropy_d = float(np.mean(ent_d))
    # d entropy / d logits, folded straight into the logits gradient
    dlogits += hyper.entropy_coef / n * probs * (logp_all + ent_d[:, None])

    cont = np.asarray(policy.continuous.forward(obs.astype(policy.continuous.dtype)), dtype=float)
    mean = cont[:, :2]
    log_std_raw = cont[:, 2:]
    log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
    in_bounds = ((log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX)).astype(float)
    mask = act == 1
    m = int(mask.sum())
    dcont = np.zeros_like(cont)
    loss_c = 0.0
    entropy_c = 0.0
    if m > 0:
        std = np.exp(log_std[mask])
        zscore = (raw[mask] - mean[mask]) / std
        logp_c = np.sum(-0.5 * zscore * zscore - log_std[mask] - 0.5 * LOG_2PI, axis=1)
        ratio_c = np.exp(logp_c - old_c[mask])
        adv_m = adv[mask]
        loss_c = -float(np.mean(clipped_surrogate(ratio_c, adv_m, eps)))
        dlogp_c = -_surrogate_grad_mask(ratio_c, adv_m, eps) * adv_m * ratio_c / m
        dmean = dlogp_c[:, None] * zscore / std
        dstd_log = dlogp_c[:, None] * (zscore * zscore - 1.0)
        ent_c = np.sum(log_std[mask], axis=1) + (1.0 + LOG_2PI)
        entropy_c = float(np.mean(ent_c))
        dstd_log -= hyper.entropy_coef / m
        dcont[np.where(mask)[0], :2] = dmean
        dcont[np.where(mask)[0], 2:] = dstd_log * in_bounds[mask]

    vals = np.asarray(policy.value.forward(obs.astype(policy.value.dtype)), dtype=float)[:, 0]
    err = vals - ret
    loss_v = 0.5 * float(np.mean(err * err))
    dvals = (hyper.value_coef * err / n)[:, None]

    loss = (
        loss_d
        + loss_c
        + hyper.value_coef * loss_v
        - hyper.entropy_coef * (entropy_d + entropy_c)
    )
    parts = {
        "loss": loss,
        "policy_d": loss_d,
        "policy_c": loss_c,
        "value": loss_v,
        "entropy_d": entropy_d,
        "entropy_c": entropy_c,
    }
    if not math.isfinite(loss):
        raise RuntimeError(f"non-finite PPO loss, components: {parts}")

    grads = {
        "discrete": policy.discrete.backward(dlogits.astype(policy.discrete.dtype)),
        "continuous": policy.continuous.backward(dcont.astype(policy.continuous.dtype)),
        "value": policy.value.backward(dvals.astype(policy.value.dtype)),
    }
    return loss, parts, grads


def make_adams(hyper: TrainHyper) -> dict:
    return {name: Adam(lr=hyper.lr) for name in ("discrete", "continuous", "value")}


def ppo_update(
    policy: PolicyBundle,
    data: dict,
    hyper: TrainHyper,
    adams: dict | None = None,
    rng: np.random.Generator | None = None,
):
    """Run the clipped-surrogate epochs over one rollout, in place.

    Returns (policy, mean component losses over all minibatches).
    Optimizer state and the shuffling rng are injectable so a training
    loop can keep both across updates.
    """
    if adams is None:
        adams = make_adams(hyper)
    if rng is None:
        rng = np.random.default_rng(0)
    n = len(data["actions"])
    keys = ("obs", "actions", "raw", "logp_d", "logp_c", "advantages", "returns")
    sums: dict[str, float] = {}
    batches = 0
    for _ in range(hyper.epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, hyper.minibatch):
            idx = perm[lo : lo + hyper.minibatch]
            sub = {k: data[k][idx] for k in keys}
            _, parts, grads = loss_and_grads(policy, sub, hyper)
            for name, net in (
                ("discrete", policy.discrete),
                ("continuous", policy.continuous),
                ("value", policy.value),
            ):
                adams[name].step(net.theta, grads[name])
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v
            batches += 1
    return policy, {k: v / batches for k, v in sums.items()}


def make_episode_env(
    world_cfg: EpisodeConfig,
    reward_cfg: RewardConfig,
    rng: np.random.Generator,
    max_tries: int = 50,
) -> TrainingEnv:
    """Fresh random world plus synthesized reference, retried on rough draws.

    World generation can produce layouts whose route graph or corridor
    fails; those raise retryable errors and simply cost another seed.
    """
    for _ in range(max_tries):
        world_seed = int(rng.integers(2**63))
        traj_seed = int(rng.integers(2**63))
        try:
            grid = generate_random_world(
                world_seed,
                side=world_cfg.side,
                n_obstacles=world_cfg.n_obstacles,
                radius_range=world_cfg.radius_range,
                start=world_cfg.start,
                goal=world_cfg.goal,
                resolution=world_cfg.resolution,
                robot_radius=world_cfg.robot_radius,
                border_walls=world_cfg.border_walls,
            )
            traj = generate_human_trajectory(
                grid,
                world_cfg.start,
                world_cfg.goal,
                world_cfg.sample_dt,
                traj_seed,
                robot_radius=world_cfg.robot_radius,
                kinematics=world_cfg.kinematics(),
            )
            env = TrainingEnv(
                grid,
                traj.points,
                world_cfg.goal,
                reward_cfg,
                robot_radius=world_cfg.robot_radius,
                decision_period=world_cfg.decision_period,
                sample_dt=world_cfg.sample_dt,
                v_max=world_cfg.v_max,
            )
        except RETRYABLE:
            continue
        if not env.done:
            return env
    raise RuntimeError(f"no viable training episode after {max_tries} worlds")


LOG_FIELDS = (
    "update",
    "env_steps",
    "mean_reward",
    "mean_task_reward",
    "loss_policy_disc",
    "loss_policy_cont",
    "loss_value",
    "entropy",
    "mean_two_phi_deg",
    "trigger_rate",
)


class NonFiniteLossError(RuntimeError):
    """A training update produced a NaN or infinite loss."""


def train(
    world_cfg: EpisodeConfig,
    reward_cfg: RewardConfig,
    hyper: TrainHyper,
    total_steps: int,
    seed: int,
    out_dir: str | Path | None = None,
    *,
    resume_policy: PolicyBundle | None = None,
    resume_steps: int = 0,
    resume_update: int = 0,
):
    """Full training loop: episodes, rollouts, updates, logging.

    Returns (policy, log rows). Each log row is one dict per update with
    LOG_FIELDS keys. When out_dir is given, writes training_log.csv plus
    periodic and final checkpoints there. Reproducible under seed up to
    floating-point associativity. A resume continues the step and update
    counters from a saved policy; optimizer moments restart fresh.
    total_steps counts new steps on top of resume_steps.
    """
    ss = np.random.SeedSequence(seed)
    s_policy, s_actions, s_worlds, s_shuffle = ss.spawn(4)
    if resume_policy is not None:
        policy = resume_policy
    else:
        policy = PolicyBundle.create(OBS_DIM, seed=int(s_policy.generate_state(1)[0]))
    log_rows: list[dict] = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if total_steps <= 0:
        if out is not None:
            _write_log(out / "training_log.csv", log_rows)
            policy.save(
                out / "policy_final.ckpt",
                meta=_meta(seed, world_cfg, reward_cfg, hyper, resume_update, resume_steps),
            )
        return policy, log_rows

    act_rng = np.random.default_rng(s_actions)
    world_rng = np.random.default_rng(s_worlds)
    shuffle_rng = np.random.default_rng(s_shuffle)
    adams = make_adams(hyper)

    env = make_episode_env(world_cfg, reward_cfg, world_rng)
    obs = env.observe()
    steps_done = resume_steps
    update_i = resume_update
    total_steps = resume_steps + total_steps
    while steps_done < total_steps:
        n = min(hyper.rollout_steps, total_steps - steps_done)
        buf = {
            "obs": np.zeros((n, OBS_DIM), dtype=np.float32),
            "actions": np.zeros(n, dtype=int),
            "raw": np.zeros((n, 2)),
            "logp_d": np.zeros(n),
            "logp_c": np.zeros(n),
            "values": np.zeros(n),
            "rewards": np.zeros(n),
            "dones": np.zeros(n, dtype=bool),
        }
        task_sum = 0.0
        phi_sum = 0.0
        n_trig = 0
        for t in range(n):
            action, rec = sample_decision(policy, obs, act_rng)
            nobs, reward, done, info = env.step(action)
            buf["obs"][t] = obs
            buf["actions"][t] = rec["action"]
            buf["raw"][t] = rec["raw"]
            buf["logp_d"][t] = rec["logp_d"]
            buf["logp_c"][t] = rec["logp_c"]
            buf["values"][t] = rec["value"]
            buf["rewards"][t] = reward
            buf["dones"][t] = done
            task_sum += info["r_task"]
            if info["phi"] is not None:
                phi_sum += info["phi"]
                n_trig += 1
            if done:
                env = make_episode_env(world_cfg, reward_cfg, world_rng)
                obs = env.observe()
            else:
                obs = nobs
        steps_done += n

        if buf["dones"][-1]:
            last_value = 0.0
        else:
            last_value = float(policy_heads(policy, obs)[3][0])
        adv, ret = compute_gae(
            buf["rewards"], buf["values"], buf["dones"], last_value,
            hyper.gamma, hyper.gae_lambda,
        )
        spread = float(adv.std())
        if spread > 1e-8:
            adv = (adv - adv.mean()) / spread
        data = {
            "obs": buf["obs"],
            "actions": buf["actions"],
            "raw": buf["raw"],
            "logp_d": buf["logp_d"],
            "logp_c": buf["logp_c"],
            "advantages": adv,
            "returns": ret,
        }
        policy, parts = ppo_update(policy, data, hyper, adams, shuffle_rng)
        losses = (parts["policy_d"], parts["policy_c"], parts["value"])
        if not all(math.isfinite(x) for x in losses):
            raise NonFiniteLossError(
                f"non-finite loss at update {update_i + 1}: {losses}"
            )
        update_i += 1
        row = {
            "update": update_i,
            "env_steps": steps_done,
            "mean_reward": float(buf["rewards"].mean()),
            "mean_task_reward": task_sum / n,
            "loss_policy_disc": parts["policy_d"],
            "loss_policy_cont": parts["policy_c"],
            "loss_value": parts["value"],
            "entropy": parts["entropy_d"] + parts["entropy_c"],
            "mean_two_phi_deg": (
                math.degrees(2.0 * phi_sum / n_trig) if n_trig else float("nan")
            ),
            "trigger_rate": n_trig / n,
        }
        log_rows.append(row)
        if out is not None:
            _write_log(out / "training_log.csv", log_rows)
            if update_i % hyper.checkpoint_every == 0:
                policy.save(
                    out / f"checkpoint_{update_i:05d}.ckpt",
                    meta=_meta(seed, world_cfg, reward_cfg, hyper, update_i, steps_done),
                )
    if out is not None:
        policy.save(out / "policy_final.ckpt", meta=_meta(seed, world_cfg, reward_cfg, hyper, update_i, steps_done))
    return policy, log_rows


def _meta(seed, world_cfg, reward_cfg, hyper, update_i, steps_done) -> dict:
    # Full recipe in the header so downstream consumers can refuse a
    # checkpoint whose observation geometry mismatches their world.
    return {
        "seed": seed,
        "update": update_i,
        "env_steps": steps_done,
        "hyper": asdict(hyper),
        "world": asdict(world_cfg),
        "reward": asdict(reward_cfg),
        "obs": {
            "crop_width": CROP_WIDTH,
            "pool_cells": POOL_CELLS,
            "history_len": HISTORY_LEN,
            "obs_dim": OBS_DIM,
        },
    }


def _write_log(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
