"""Independent two-timescale policy gradient on tabular zero-sum games.

Both players run projected REINFORCE simultaneously on the same sampled
episodes, each oblivious to the other's actions: the max player ascends
with rate eta_max, the min player (the adversary being best-responded
against) descends on the faster timescale eta_min > eta_max.  Exploitability
is measured every K episodes with the exact dynamic-programming best
responses, giving a Nash-gap trace that can be checked against the Shapley
oracle value.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import backend
from ._purepy import UniformStream
from .games import DirectPolicy, MarkovGame, nash_gap, value_of


@dataclass
class TwoTimescaleConfig:
    """Learning-rate pair and episode budget for an independent PG run.

    The min player must move on the faster timescale (eta_min/eta_max >= 10)
    unless ``enforce_two_timescale`` is cleared for a documented control run.
    Rates can decay as eta(t) = eta0 / (1 + t/decay_tau)^decay_power; the
    constant schedule (decay_power = 0) is the default.
    """

    eta_max: float
    eta_min: float
    n_episodes: int
    seed: int = 0
    decay_power: float = 0.0
    decay_tau: float = 1.0
    gap_interval: int = 1000
    enforce_two_timescale: bool = True

    def __post_init__(self):
        if self.eta_max <= 0 or self.eta_min <= 0:
            raise ValueError("learning rates must be positive")
        if self.n_episodes < 0:
            raise ValueError("n_episodes must be >= 0")
        if self.enforce_two_timescale:
            if not self.eta_min > self.eta_max:
                raise ValueError("two-timescale rule requires eta_min > eta_max")
            if self.eta_min / self.eta_max < 10.0:
                raise ValueError("two-timescale ratio eta_min/eta_max must be >= 10")
        if self.decay_power < 0 or self.decay_tau <= 0:
            raise ValueError("bad decay schedule")
        if self.gap_interval < 1:
            raise ValueError("gap_interval must be >= 1")


@dataclass
class NashGapTrace:
    """Gap/value checkpoints of one run, plus the final policy pair."""

    episodes: np.ndarray        # checkpoint episode indices (0 = initial)
    gaps: np.ndarray
    values: np.ndarray
    policy_max: DirectPolicy
    policy_min: DirectPolicy
    diverged: bool = False

    def tail_mean_gap(self, frac: float = 0.1) -> float:
        """Mean gap over the last ``frac`` of checkpoints."""
        n = max(1, int(round(frac * len(self.gaps))))
        return float(np.mean(self.gaps[-n:]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "gap", "value"])
            for e, g, v in zip(self.episodes, self.gaps, self.values):
                w.writerow([int(e), repr(float(g)), repr(float(v))])


def reinforce_gradient(game: MarkovGame, pi_max: DirectPolicy, pi_min: DirectPolicy,
                       batch: int, seed: int):
    """Batch-mean REINFORCE gradients of V_rho for both players.

    Per episode the estimate is R_T * sum_t d log pi(a_t|s_t) / d params,
    taken with respect to the direct (pre-exploration) parameters; it is
    unbiased for the gradient of value_of.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    k = backend.kernels()
    stream = UniformStream.from_seed(seed)
    g_max, g_min = k.game_reinforce(game.transition, game.stop, game.reward,
                                    pi_min.x, pi_max.x,
                                    pi_max.epsilon, pi_min.epsilon,
                                    game.initial_dist, batch, stream)
    return g_max / batch, g_min / batch


def independent_pg_run(game: MarkovGame, cfg: TwoTimescaleConfig,
                       eps_max: float, eps_min: float,
                       init_max: np.ndarray | None = None,
                       init_min: np.ndarray | None = None) -> NashGapTrace:
    """Simultaneous projected REINFORCE for cfg.n_episodes episodes.

    Exploitability (exact best-response gap) and the exact pair value are
    recorded every cfg.gap_interval episodes.  Divergence (gap exceeding 100x
    the initial gap) is flagged on the trace, not fatal.
    """
    if not (0.0 < eps_max <= 1.0 and 0.0 < eps_min <= 1.0):
        raise ValueError("exploration factors must lie in (0, 1]")
    S = game.n_states
    y = (np.full((S, game.actions_max), 1.0 / game.actions_max)
         if init_max is None else np.array(init_max, dtype=np.float64))
    x = (np.full((S, game.actions_min), 1.0 / game.actions_min)
         if init_min is None else np.array(init_min, dtype=np.float64))
    k = backend.kernels()
    stream = UniformStream.from_seed(cfg.seed)

    def checkpoint():
        pm = DirectPolicy(y.copy(), eps_max)
        pn = DirectPolicy(x.copy(), eps_min)
        return nash_gap(game, pm, pn), value_of(game, pm, pn)

    episodes = [0]
    g0, v0 = checkpoint()
    gaps = [g0]
    values = [v0]
    diverged = False
    done = 0
    while done < cfg.n_episodes:
        chunk = min(cfg.gap_interval, cfg.n_episodes - done)
        k.game_pg_chunk(game.transition, game.stop, game.reward, x, y,
                        eps_max, eps_min, game.initial_dist, chunk, done,
                        cfg.eta_max, cfg.eta_min,
                        cfg.decay_power, cfg.decay_tau, stream)
        done += chunk
        g, v = checkpoint()
        episodes.append(done)
        gaps.append(g)
        values.append(v)
        if g0 > 0 and g > 100.0 * g0:
            diverged = True
    return NashGapTrace(np.asarray(episodes), np.asarray(gaps), np.asarray(values),
                        DirectPolicy(y, eps_max), DirectPolicy(x, eps_min),
                        diverged=diverged)


def mc_value_estimate(game: MarkovGame, pi_max, pi_min, n_episodes: int,
                      seed: int) -> tuple[float, float]:
    """Monte-Carlo estimate of V_rho with its standard error."""
    from .games import _as_effective
    eff_max = _as_effective(pi_max, game.n_states, game.actions_max)
    eff_min = _as_effective(pi_min, game.n_states, game.actions_min)
    k = backend.kernels()
    stream = UniformStream.from_seed(seed)
    rets = k.game_returns(game.transition, game.stop, game.reward,
                          eff_max, eff_min, game.initial_dist, n_episodes, stream)
    return float(rets.mean()), float(rets.std(ddof=1) / np.sqrt(n_episodes))
