"""Alternating adversarial training: lower rounds vs. sampled adversarial
motions, upper rounds vs. sampled adversarial commands.

Round k trains the lower policy when k is odd and the upper policy when k
is even.  The first lower round plays the upper body open loop (reference
targets straight through); later lower rounds use the frozen trained upper
policy.  Curriculum state advances at episode terminations, once per PPO
iteration, and the motion library is re-scored by survival length at the
start of every lower round.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import checkpoint as ckpt
from .curriculum import (CommandCurriculumState, LowerCurriculumState,
                         sample_adversarial_motion, sample_command,
                         save_curriculum, scale_motion, update_command_curriculum,
                         update_lower_curriculum)
from .env import N_LOWER_ACT, N_UPPER_ACT, EnvConfig, SurrogateBatch, IDX_QU
from .motions import MotionLibrary, build_library
from .nets import MlpPolicy
from .obs import (OBS_LOWER_DIM, OBS_UPPER_DIM, OpenLoopUpper,
                  PolicyLowerController, PolicyUpperController, ScriptedLower,
                  obs_lower, obs_upper, privileged)
from .ppo import PpoConfig, PpoLearner, RolloutBatch, gae
from .rewards import (RewardParams, lower_reward_batch, tracking_score,
                      upper_reward_batch)


@dataclass
class TrainConfig:
    n_envs: int = 128
    episode_steps: int = 1000          # l_sl_max during training
    dr_enabled: bool = True
    terrain_max: int = 6
    push_prob: float = 0.5
    cmd_vx: tuple = (-1.0, 1.0)
    cmd_vy: tuple = (-0.3, 0.3)
    cmd_yaw: tuple = (-0.5, 0.5)
    score_episode_steps: int = 300
    score_episodes_per_clip: int = 1
    seed: int = 0


@dataclass
class IterationLog:
    iteration: int
    mean_reward: float
    mean_survival: float
    episodes_done: int
    alpha_d: int
    alpha_s: float
    tracking_score: float
    kl: float
    lr: float

    HEADER = ["iteration", "mean_reward", "mean_survival", "episodes_done",
              "alpha_d", "alpha_s", "tracking_score", "kl", "lr"]

    def row(self):
        return [self.iteration, self.mean_reward, self.mean_survival,
                self.episodes_done, self.alpha_d, self.alpha_s,
                self.tracking_score, self.kl, self.lr]


def write_stats_csv(path, logs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(IterationLog.HEADER)
        for log in logs:
            w.writerow(log.row())


def make_lower_policy(seed: int = 0, recurrent: bool = False) -> MlpPolicy:
    return MlpPolicy(OBS_LOWER_DIM, OBS_LOWER_DIM + 3, N_LOWER_ACT,
                     seed=seed, recurrent=recurrent)


def make_upper_policy(seed: int = 0, recurrent: bool = False) -> MlpPolicy:
    return MlpPolicy(OBS_UPPER_DIM, OBS_UPPER_DIM + 3, N_UPPER_ACT,
                     seed=seed, recurrent=recurrent)


def _sample_train_command(rng, tc: TrainConfig) -> np.ndarray:
    return np.array([
        rng.uniform(*tc.cmd_vx),
        rng.uniform(*tc.cmd_vy),
        rng.uniform(*tc.cmd_yaw),
        float(rng.integers(0, tc.terrain_max + 1)),
        1.0 if rng.random() < tc.push_prob else 0.0,
    ])


class _EpisodeRunner:
    """Batched env with per-env episode bookkeeping shared by both trainees."""

    def __init__(self, env_cfg: EnvConfig, tc: TrainConfig, seed_tag: int):
        self.env_cfg = env_cfg
        self.tc = tc
        self.batch = SurrogateBatch(env_cfg, tc.n_envs)
        self.rng = np.random.default_rng((tc.seed, seed_tag))
        self.ep_step = np.zeros(tc.n_envs, dtype=np.int64)
        self.commands = np.zeros((tc.n_envs, 5))
        self.frames = [None] * tc.n_envs      # per-env scaled reference frames
        self.prev_a_l = np.zeros((tc.n_envs, N_LOWER_ACT))
        self.prev_a_u = np.zeros((tc.n_envs, N_UPPER_ACT))
        self._seed_counter = 0

    def _next_seed(self) -> int:
        self._seed_counter += 1
        return int(self.rng.integers(2 ** 62)) + self._seed_counter

    def reset_env(self, i: int, command: np.ndarray, frames: np.ndarray) -> None:
        self.batch.reset_env(i, self._next_seed(), self.tc.dr_enabled)
        self.commands[i] = command
        self.frames[i] = frames
        self.ep_step[i] = 0
        self.prev_a_l[i] = 0.0
        self.prev_a_u[i] = 0.0

    def refs_now(self) -> np.ndarray:
        out = np.empty((self.tc.n_envs, N_UPPER_ACT))
        for i in range(self.tc.n_envs):
            f = self.frames[i]
            out[i] = f[self.ep_step[i] % f.shape[0]]
        return out


def _collect_lower(runner: _EpisodeRunner, policy: MlpPolicy, upper_ctrl,
                   steps: int, reward_params: RewardParams,
                   resample, rng: np.random.Generator):
    """Roll the lower policy for `steps`; returns stacked arrays + episode stats."""
    tc = runner.tc
    N = tc.n_envs
    T = steps
    obs_buf = np.empty((T, N, OBS_LOWER_DIM))
    priv_buf = np.empty((T, N, OBS_LOWER_DIM + 3))
    act_buf = np.empty((T, N, N_LOWER_ACT))
    logp_buf = np.empty((T, N))
    mean_buf = np.empty((T, N, N_LOWER_ACT))
    std_buf = np.empty((T, N, N_LOWER_ACT))
    rew_buf = np.empty((T, N))
    val_buf = np.empty((T + 1, N))
    done_buf = np.zeros((T, N))
    survivals = []
    for t in range(T):
        state = runner.batch.state
        o = obs_lower(state, runner.commands[:, :3], runner.prev_a_l)
        p = privileged(o, state)
        actions, logp, value, mean, std = policy.act(o, p, rng)
        refs = runner.refs_now()
        a_u = upper_ctrl.act(state, refs, runner.prev_a_u)
        prev_state = state.copy()
        new_state, info = runner.batch.step(actions, a_u, runner.commands)
        rew = lower_reward_batch(prev_state, new_state, actions, runner.prev_a_l,
                                 runner.commands[:, :3], info, reward_params,
                                 runner.env_cfg)
        obs_buf[t], priv_buf[t] = o, p
        act_buf[t], logp_buf[t] = actions, logp
        mean_buf[t], std_buf[t] = mean, std
        val_buf[t] = value
        rew_buf[t] = rew
        runner.ep_step += 1
        runner.prev_a_l = actions
        runner.prev_a_u = a_u
        fallen = info[:, 0] > 0.5
        capped = runner.ep_step >= tc.episode_steps
        done = fallen | capped
        done_buf[t] = done
        for i in np.nonzero(done)[0]:
            survivals.append(int(runner.ep_step[i]) if fallen[i]
                             else int(tc.episode_steps))
            cmd, frames = resample(runner.rng)
            runner.reset_env(i, cmd, frames)
    state = runner.batch.state
    o = obs_lower(state, runner.commands[:, :3], runner.prev_a_l)
    _, _, value, _, _ = policy.act(o, privileged(o, state), rng)
    val_buf[T] = value
    return (obs_buf, priv_buf, act_buf, logp_buf, mean_buf, std_buf,
            rew_buf, val_buf, done_buf, survivals)


def _collect_upper(runner: _EpisodeRunner, policy: MlpPolicy, lower_ctrl,
                   steps: int, reward_params: RewardParams,
                   resample, rng: np.random.Generator):
    tc = runner.tc
    N = tc.n_envs
    T = steps
    obs_buf = np.empty((T, N, OBS_UPPER_DIM))
    priv_buf = np.empty((T, N, OBS_UPPER_DIM + 3))
    act_buf = np.empty((T, N, N_UPPER_ACT))
    logp_buf = np.empty((T, N))
    mean_buf = np.empty((T, N, N_UPPER_ACT))
    std_buf = np.empty((T, N, N_UPPER_ACT))
    rew_buf = np.empty((T, N))
    val_buf = np.empty((T + 1, N))
    done_buf = np.zeros((T, N))
    survivals = []
    track_sum, track_count = 0.0, 0
    for t in range(T):
        state = runner.batch.state
        refs = runner.refs_now()
        o = obs_upper(state, refs, runner.prev_a_u)
        p = privileged(o, state)
        actions, logp, value, mean, std = policy.act(o, p, rng)
        a_l = lower_ctrl.act(state, runner.commands, runner.prev_a_l)
        prev_state = state.copy()
        new_state, info = runner.batch.step(a_l, actions, runner.commands)
        rew = upper_reward_batch(prev_state, new_state, actions, runner.prev_a_u,
                                 refs, info, reward_params, runner.env_cfg)
        dq = refs - new_state[:, IDX_QU:IDX_QU + 5]
        track_sum += float(np.exp(-0.5 * (dq ** 2).sum(axis=1)).sum())
        track_count += N
        obs_buf[t], priv_buf[t] = o, p
        act_buf[t], logp_buf[t] = actions, logp
        mean_buf[t], std_buf[t] = mean, std
        val_buf[t] = value
        rew_buf[t] = rew
        runner.ep_step += 1
        runner.prev_a_u = actions
        runner.prev_a_l = a_l
        fallen = info[:, 0] > 0.5
        capped = runner.ep_step >= tc.episode_steps
        done = fallen | capped
        done_buf[t] = done
        for i in np.nonzero(done)[0]:
            survivals.append(int(runner.ep_step[i]) if fallen[i]
                             else int(tc.episode_steps))
            cmd, frames = resample(runner.rng)
            runner.reset_env(i, cmd, frames)
    state = runner.batch.state
    refs = runner.refs_now()
    o = obs_upper(state, refs, runner.prev_a_u)
    _, _, value, _, _ = policy.act(o, privileged(o, state), rng)
    val_buf[T] = value
    mean_track = track_sum / max(track_count, 1)
    return (obs_buf, priv_buf, act_buf, logp_buf, mean_buf, std_buf,
            rew_buf, val_buf, done_buf, survivals, mean_track)


def _to_batch(pieces, gamma, lam) -> RolloutBatch:
    obs, priv, act, logp, mean, std, rew, val, done = pieces
    adv, ret = gae(rew, val, done, gamma, lam)
    T, N = rew.shape
    flat = lambda a: a.reshape(T * N, *a.shape[2:])
    return RolloutBatch(obs=flat(obs), priv=flat(priv), actions=flat(act),
                        logp=logp.reshape(-1), mean_old=flat(mean),
                        std_old=flat(std), advantages=adv.reshape(-1),
                        returns=ret.reshape(-1))


# ---------------------------------------------------------------------------
# Motion scoring
# ---------------------------------------------------------------------------

def score_library_survival(library: MotionLibrary, lower_ctrl, upper_ctrl,
                           env_cfg: EnvConfig, tc: TrainConfig, seed: int,
                           basic_command=(0.5, 0.0, 0.0)) -> list:
    """Mean survival per clip under full-scale playback and a basic command.

    All clips run in one batched pass per scoring episode; returns the clip
    ids sorted by ascending difficulty (descending survival, ties by id).
    """
    n = len(library)
    clips = list(library)
    steps = tc.score_episode_steps
    totals = np.zeros(n)
    for e in range(tc.score_episodes_per_clip):
        batch = SurrogateBatch(env_cfg, n)
        batch.reset_all([seed * 1000 + e * n + i for i in range(n)], tc.dr_enabled)
        cmd = np.tile([basic_command[0], basic_command[1], basic_command[2],
                       0.0, 0.0], (n, 1))
        alive = np.ones(n, dtype=bool)
        surv = np.full(n, steps, dtype=np.int64)
        prev_a_l = np.zeros((n, N_LOWER_ACT))
        prev_a_u = np.zeros((n, N_UPPER_ACT))
        for t in range(steps):
            state = batch.state
            refs = np.stack([c.frame_at(t) for c in clips])
            a_l = lower_ctrl.act(state, cmd, prev_a_l)
            a_u = upper_ctrl.act(state, refs, prev_a_u)
            _, info = batch.step(a_l, a_u, cmd)
            fallen = info[:, 0] > 0.5
            newly = alive & fallen
            surv[newly] = t + 1
            alive &= ~fallen
            prev_a_l, prev_a_u = a_l, a_u
            if not alive.any():
                break
        totals += surv
    means = totals / tc.score_episodes_per_clip
    order = sorted(range(n), key=lambda i: (-means[i], clips[i].clip_id))
    return [clips[i].clip_id for i in order]


# ---------------------------------------------------------------------------
# Rounds
# ---------------------------------------------------------------------------

def train_lower_round(policy_l: MlpPolicy, upper_ctrl, lower_curr: LowerCurriculumState,
                      library: MotionLibrary, env_cfg: EnvConfig, ppo_cfg: PpoConfig,
                      tc: TrainConfig, iters: int, reward_params: RewardParams,
                      seed_tag: int = 1, curriculum_enabled: bool = True):
    """One lower-body PPO round against sampled adversarial motions."""
    runner = _EpisodeRunner(env_cfg, tc, seed_tag)
    q0 = np.asarray(env_cfg.q_u_default)

    def resample(rng):
        cmd = _sample_train_command(rng, tc)
        if curriculum_enabled:
            _, scaled = sample_adversarial_motion(lower_curr, library,
                                                  int(rng.integers(2 ** 62)), q0)
            return cmd, scaled.frames
        clip = library.clips[int(rng.integers(len(library)))]
        return cmd, clip.frames    # no curriculum: full scale, random motion

    for i in range(tc.n_envs):
        cmd, frames = resample(runner.rng)
        runner.reset_env(i, cmd, frames)
    learner = PpoLearner(policy_l, ppo_cfg)
    act_rng = np.random.default_rng((tc.seed, seed_tag, 7))
    steps_per_iter = max(1, ppo_cfg.batch_steps // tc.n_envs)
    logs = []
    episodes_done = 0
    for it in range(iters):
        out = _collect_lower(runner, policy_l, upper_ctrl, steps_per_iter,
                             reward_params, resample, act_rng)
        survivals = out[-1]
        batch = _to_batch(out[:-1], ppo_cfg.gamma, ppo_cfg.lam)
        stats = learner.update(batch)
        if stats.aborted:
            raise RuntimeError(f"PPO update aborted (NaN loss) at iteration {it}")
        episodes_done += len(survivals)
        if survivals and curriculum_enabled:
            l_msl = float(np.mean(survivals))
            lower_curr = update_lower_curriculum(lower_curr, l_msl,
                                                 tc.episode_steps, len(library))
        logs.append(IterationLog(it, float(batch.returns.mean()),
                                 float(np.mean(survivals)) if survivals else float("nan"),
                                 episodes_done, lower_curr.alpha_d,
                                 lower_curr.alpha_s, float("nan"),
                                 stats.kl, stats.lr))
    return policy_l, lower_curr, logs


def train_upper_round(policy_u: MlpPolicy, lower_ctrl, cmd_curr: CommandCurriculumState,
                      library: MotionLibrary, env_cfg: EnvConfig, ppo_cfg: PpoConfig,
                      tc: TrainConfig, iters: int, reward_params: RewardParams,
                      seed_tag: int = 2):
    """One upper-body PPO round against sampled adversarial commands."""
    runner = _EpisodeRunner(env_cfg, tc, seed_tag)
    curr_box = {"cmd": cmd_curr}

    def resample(rng):
        c = sample_command(curr_box["cmd"], int(rng.integers(2 ** 62)),
                           terrain_level=int(rng.integers(0, tc.terrain_max + 1)),
                           push_enabled=bool(rng.random() < tc.push_prob))
        clip = library.clips[int(rng.integers(len(library)))]
        return c.as_array(), clip.frames

    for i in range(tc.n_envs):
        cmd, frames = resample(runner.rng)
        runner.reset_env(i, cmd, frames)
    learner = PpoLearner(policy_u, ppo_cfg)
    act_rng = np.random.default_rng((tc.seed, seed_tag, 7))
    steps_per_iter = max(1, ppo_cfg.batch_steps // tc.n_envs)
    logs = []
    episodes_done = 0
    for it in range(iters):
        out = _collect_upper(runner, policy_u, lower_ctrl, steps_per_iter,
                             reward_params, resample, act_rng)
        mean_track = out[-1]
        survivals = out[-2]
        batch = _to_batch(out[:-2], ppo_cfg.gamma, ppo_cfg.lam)
        stats = learner.update(batch)
        if stats.aborted:
            raise RuntimeError(f"PPO update aborted (NaN loss) at iteration {it}")
        episodes_done += len(survivals)
        curr_box["cmd"] = update_command_curriculum(curr_box["cmd"], mean_track)
        logs.append(IterationLog(it, float(batch.returns.mean()),
                                 float(np.mean(survivals)) if survivals else float("nan"),
                                 episodes_done, 0, float("nan"), mean_track,
                                 stats.kl, stats.lr))
    return policy_u, curr_box["cmd"], logs


@dataclass
class RoundPlan:
    index: int                 # 1-based
    trainee: str               # "lower" | "upper"
    upper_controller: str      # "open-loop" | "policy" (lower rounds)
    iters: int

    @staticmethod
    def schedule(n_rounds: int, lower_iters: int, upper_iters: int) -> list:
        plans = []
        for k in range(1, n_rounds + 1):
            if k % 2 == 1:
                plans.append(RoundPlan(k, "lower",
                                       "open-loop" if k == 1 else "policy",
                                       lower_iters))
            else:
                plans.append(RoundPlan(k, "upper", "-", upper_iters))
        return plans


@dataclass
class AlternationResult:
    policy_l: MlpPolicy
    policy_u: MlpPolicy
    lower_curr: LowerCurriculumState
    cmd_curr: CommandCurriculumState
    round_logs: list
    checkpoint_paths: list
    eval_reports: list


def run_alternation(n_rounds: int, env_cfg: EnvConfig, ppo_cfg: PpoConfig,
                    tc: TrainConfig, lower_iters: int = 300, upper_iters: int = 200,
                    out_dir: str | None = None, library: MotionLibrary | None = None,
                    reward_params: RewardParams | None = None,
                    start_round: int = 1, policy_l: MlpPolicy | None = None,
                    policy_u: MlpPolicy | None = None,
                    lower_curr: LowerCurriculumState | None = None,
                    cmd_curr: CommandCurriculumState | None = None,
                    curriculum_enabled: bool = True,
                    eval_levels: tuple = (), eval_fn=None) -> AlternationResult:
    """Execute the round schedule; checkpoints and manifests land in out_dir.

    Per-round seeds derive from (tc.seed, round index), so a run resumed
    from the round-k checkpoint replays rounds k+1.. bit-exactly.
    """
    library = library or build_library(env_cfg)
    reward_params = reward_params or RewardParams()
    policy_l = policy_l or make_lower_policy(seed=tc.seed)
    policy_u = policy_u or make_upper_policy(seed=tc.seed + 1)
    if lower_curr is None:
        order = [c.clip_id for c in library]
        window = min(40, max(0, len(library) - 1))
        lower_curr = LowerCurriculumState(sorted_order=order, window=window)
    cmd_curr = cmd_curr or CommandCurriculumState()
    plans = RoundPlan.schedule(n_rounds, lower_iters, upper_iters)
    round_logs, paths, reports = [], [], []
    for plan in plans:
        if plan.index < start_round:
            continue
        round_seed = int(np.random.default_rng((tc.seed, plan.index)).integers(2 ** 31))
        tc_round = replace(tc, seed=round_seed)
        if plan.trainee == "lower":
            if plan.upper_controller == "open-loop":
                upper_ctrl = OpenLoopUpper()
            else:
                upper_ctrl = PolicyUpperController(policy_u.clone())
            if curriculum_enabled:
                order = score_library_survival(
                    library, PolicyLowerController(policy_l.clone()), upper_ctrl,
                    env_cfg, tc_round, seed=round_seed)
                lower_curr = LowerCurriculumState(
                    sorted_order=order, alpha_d=lower_curr.alpha_d,
                    alpha_s=lower_curr.alpha_s, window=lower_curr.window,
                    l_msl=lower_curr.l_msl)
            policy_l, lower_curr, logs = train_lower_round(
                policy_l, upper_ctrl, lower_curr, library, env_cfg, ppo_cfg,
                tc_round, plan.iters, reward_params, seed_tag=plan.index,
                curriculum_enabled=curriculum_enabled)
        else:
            lower_ctrl = PolicyLowerController(policy_l.clone())
            policy_u, cmd_curr, logs = train_upper_round(
                policy_u, lower_ctrl, cmd_curr, library, env_cfg, ppo_cfg,
                tc_round, plan.iters, reward_params, seed_tag=plan.index)
        round_logs.append((plan, logs))
        if eval_fn is not None and eval_levels:
            for level in eval_levels:
                reports.append((plan.index, level, eval_fn(policy_l, policy_u, level)))
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            pl_path = os.path.join(out_dir, f"round{plan.index}_lower.bin")
            pu_path = os.path.join(out_dir, f"round{plan.index}_upper.bin")
            cur_path = os.path.join(out_dir, f"round{plan.index}_curriculum.json")
            ckpt.save_policy(pl_path, policy_l, extra={"round": plan.index,
                                                       "trainee": plan.trainee})
            ckpt.save_policy(pu_path, policy_u, extra={"round": plan.index,
                                                       "trainee": plan.trainee})
            save_curriculum(cur_path, lower_curr, cmd_curr)
            stats_path = os.path.join(out_dir, f"round{plan.index}_stats.csv")
            write_stats_csv(stats_path, logs)
            manifest = {
                "schema": "advgait-round-v1",
                "round": plan.index,
                "trainee": plan.trainee,
                "upper_controller": plan.upper_controller,
                "iters": plan.iters,
                "seed": tc.seed,
                "round_seed": round_seed,
                "files": {"lower": pl_path, "upper": pu_path,
                          "curriculum": cur_path, "stats": stats_path},
            }
            man_path = os.path.join(out_dir, f"round{plan.index}_manifest.json")
            with open(man_path, "w") as fh:
                json.dump(manifest, fh, indent=1)
            paths.append(man_path)
    return AlternationResult(policy_l, policy_u, lower_curr, cmd_curr,
                             round_logs, paths, reports)
