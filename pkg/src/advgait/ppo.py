"""Generalized advantage estimation and clipped PPO.

The update follows the standard clipped surrogate with a value term and an
entropy bonus, L = L_policy + w_v L_value - w_s S, run for a fixed number of
epochs over shuffled mini-batches, with global gradient-norm clipping and a
KL-adaptive learning rate held near the desired KL.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, Tensor, clip_grad_norm, zero_grads
from .nets import MlpPolicy, gaussian_entropy, gaussian_kl_np, gaussian_logp


@dataclass
class PpoConfig:
    lr: float = 1e-3
    desired_kl: float = 0.01
    gamma: float = 0.998
    lam: float = 0.95
    clip: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 1.0
    max_grad_norm: float = 1.0
    batch_steps: int = 4096
    minibatches: int = 4
    epochs: int = 8
    lr_min: float = 1e-5
    lr_max: float = 1e-2
    normalize_advantages: bool = True
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.lam <= 1.0):
            raise ValueError("gamma and lam must lie in (0, 1]")
        if self.clip <= 0:
            raise ValueError("clip must be positive")


def gae(rewards, values, dones, gamma: float, lam: float):
    """GAE over (T,) or (T, N) arrays; ``values`` has one bootstrap row extra.

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}

    Episode boundaries (done_t = 1) reset both the bootstrap and the
    recursion, so no advantage leaks across episodes.  Returns (advantages,
    returns) with returns = advantages + values[:-1].
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if v.shape[0] != r.shape[0] + 1:
        raise ValueError("values must have T+1 entries (bootstrap row)")
    adv = np.zeros_like(r)
    carry = np.zeros_like(r[0] if r.ndim > 1 else np.float64(0.0))
    for t in range(r.shape[0] - 1, -1, -1):
        not_done = 1.0 - d[t]
        delta = r[t] + gamma * v[t + 1] * not_done - v[t]
        carry = delta + gamma * lam * not_done * carry
        adv[t] = carry
    return adv, adv + v[:-1]


@dataclass
class RolloutBatch:
    """Flattened on-policy data for one PPO update."""

    obs: np.ndarray          # (B, obs_dim)
    priv: np.ndarray         # (B, priv_dim)
    actions: np.ndarray      # (B, act_dim)
    logp: np.ndarray         # (B,)
    mean_old: np.ndarray     # (B, act_dim)
    std_old: np.ndarray      # (B, act_dim)
    advantages: np.ndarray   # (B,)
    returns: np.ndarray      # (B,)
    hidden: np.ndarray | None = None

    def __post_init__(self):
        n = self.obs.shape[0]
        for name in ("priv", "actions", "logp", "mean_old", "std_old",
                     "advantages", "returns"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"batch field {name} length mismatch")

    @property
    def size(self) -> int:
        return self.obs.shape[0]


@dataclass
class PpoStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    kl: float = 0.0
    grad_norm: float = 0.0
    lr: float = 0.0
    aborted: bool = False


class PpoLearner:
    """Owns a policy plus its Adam state; update() is one PPO iteration."""

    def __init__(self, policy: MlpPolicy, cfg: PpoConfig):
        self.policy = policy
        self.cfg = cfg
        self.opt = Adam(policy.parameters(), lr=cfg.lr)
        self._update_count = 0

    def update(self, batch: RolloutBatch) -> PpoStats:
        cfg = self.cfg
        pol = self.policy
        snapshot = pol.get_flat()
        opt_snapshot = self.opt.state_dict()
        rng = np.random.default_rng((cfg.seed, self._update_count))
        self._update_count += 1
        stats = PpoStats(lr=self.opt.lr)
        n = batch.size
        mb_size = n // cfg.minibatches
        last = None
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            for m in range(cfg.minibatches):
                idx = order[m * mb_size:(m + 1) * mb_size]
                adv = batch.advantages[idx]
                if cfg.normalize_advantages:
                    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
                hidden = batch.hidden[idx] if batch.hidden is not None else None
                mean, std, value = pol.forward(batch.obs[idx], batch.priv[idx],
                                               hidden)
                logp = gaussian_logp(batch.actions[idx], mean, std)
                ratio = (logp - Tensor(batch.logp[idx])).exp()
                adv_t = Tensor(adv)
                surrogate = (ratio * adv_t).minimum(
                    ratio.clip(1.0 - cfg.clip, 1.0 + cfg.clip) * adv_t)
                policy_loss = -surrogate.mean()
                value_loss = ((value[:, 0] - Tensor(batch.returns[idx])) ** 2).mean()
                entropy = gaussian_entropy(std, len(idx))
                total = (policy_loss + cfg.value_coef * value_loss
                         - cfg.entropy_coef * entropy)
                if not np.isfinite(total.data):
                    pol.set_flat(snapshot)
                    self.opt.load_state_dict(opt_snapshot)
                    stats.aborted = True
                    return stats
                params = pol.parameters()
                zero_grads(params)
                total.backward()
                stats.grad_norm = clip_grad_norm(params, cfg.max_grad_norm)
                self.opt.step()
                last = (float(policy_loss.data), float(value_loss.data),
                        float(entropy.data))
                kl = gaussian_kl_np(batch.mean_old[idx], batch.std_old[idx],
                                    mean.data,
                                    np.broadcast_to(std.data, mean.data.shape))
                stats.kl = kl
                # Learning-rate adaptation toward the desired KL.
                if kl > 2.0 * cfg.desired_kl:
                    self.opt.lr = max(cfg.lr_min, self.opt.lr / 2.0)
                elif kl < 0.5 * cfg.desired_kl:
                    self.opt.lr = min(cfg.lr_max, self.opt.lr * 2.0)
        if last is not None:
            stats.policy_loss, stats.value_loss, stats.entropy = last
        stats.lr = self.opt.lr
        return stats


def ppo_update(policy: MlpPolicy, batch: RolloutBatch, cfg: PpoConfig,
               learner: PpoLearner | None = None):
    """Functional wrapper: returns (updated policy, stats).

    A persistent PpoLearner carries Adam/learning-rate state across calls;
    without one, a fresh learner is used (cold optimizer).
    """
    if learner is None:
        learner = PpoLearner(policy, cfg)
    stats = learner.update(batch)
    return learner.policy, stats
