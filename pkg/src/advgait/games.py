"""Tabular two-player zero-sum Markov games with exact solvers.

A game couples a maximizing player (actions ``a_max``) and a minimizing
player (actions ``a_min``) on a finite state set.  Every step yields a
bounded reward r(s, a_max, a_min) to the max player (minus that to the min
player), then the episode stops with probability ``stop[s, a_max, a_min]``
or moves to a next state drawn from ``transition[s, a_max, a_min]``.  The
per-step stopping probability is bounded away from zero, so the undiscounted
episodic value is finite and every fixed policy pair induces a linear
system that can be solved exactly.

Exact machinery implemented here:

* ``value_of``       -- V_rho of a fixed policy pair (linear solve, no sampling)
* ``solve_matrix_game`` -- minimax value + optimal mixed strategies of a payoff
  matrix (linear program)
* ``shapley_solve``  -- equilibrium values/policies by value iteration with a
  matrix-game backup per state
* ``best_response_value`` / ``nash_gap`` -- exact exploitability via dynamic
  programming against a frozen opponent
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

GAME_SCHEMA = "advgait-game-v1"

# Validation tolerances for the game tables.
_PROB_TOL = 1e-12


class GameValidationError(ValueError):
    """A game table violates its invariants."""


@dataclass
class MarkovGame:
    """Transition/reward tables of a zero-sum stopping game.

    transition[s, a, b, s'] holds continuation probabilities; together with
    stop[s, a, b] each (s, a, b) row sums to one.  Rewards lie in [-1, 1].
    """

    transition: np.ndarray     # (S, A_max, A_min, S)
    stop: np.ndarray           # (S, A_max, A_min)
    reward: np.ndarray         # (S, A_max, A_min)
    initial_dist: np.ndarray   # (S,)
    name: str = "unnamed"

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.stop = np.asarray(self.stop, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.initial_dist = np.asarray(self.initial_dist, dtype=np.float64)
        self.validate()

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def actions_max(self) -> int:
        return self.transition.shape[1]

    @property
    def actions_min(self) -> int:
        return self.transition.shape[2]

    @property
    def min_stop(self) -> float:
        return float(self.stop.min())

    def validate(self) -> None:
        S, Am, An, S2 = self.transition.shape
        if S != S2:
            raise GameValidationError("transition table is not square in states")
        if self.stop.shape != (S, Am, An) or self.reward.shape != (S, Am, An):
            raise GameValidationError("stop/reward shape mismatch with transition")
        if self.initial_dist.shape != (S,):
            raise GameValidationError("initial_dist has wrong length")
        total = self.transition.sum(axis=3) + self.stop
        if np.abs(total - 1.0).max() > _PROB_TOL:
            raise GameValidationError(
                "continuation + stop must sum to 1 per (s,a,b); worst residual "
                f"{np.abs(total - 1.0).max():.3e}"
            )
        if (self.transition < -_PROB_TOL).any() or (self.stop < -_PROB_TOL).any():
            raise GameValidationError("negative probabilities")
        if self.stop.min() <= 0.0:
            raise GameValidationError("stopping probability must be > 0 everywhere")
        if np.abs(self.reward).max() > 1.0 + _PROB_TOL:
            raise GameValidationError("rewards must lie in [-1, 1]")
        if abs(self.initial_dist.sum() - 1.0) > _PROB_TOL or (self.initial_dist < 0).any():
            raise GameValidationError("initial_dist is not a distribution")


@dataclass
class DirectPolicy:
    """Direct simplex parameterization with epsilon-greedy exploration.

    The effective policy mixes the table with a uniform distribution:
    pi(a|s) = (1 - eps) * x[s, a] + eps / n_actions.
    """

    x: np.ndarray          # (S, A), rows on the probability simplex
    epsilon: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if not 0.0 <= self.epsilon <= 1.0:
            raise GameValidationError("epsilon must lie in [0, 1]")
        rows = self.x.sum(axis=1)
        if np.abs(rows - 1.0).max() > _PROB_TOL or (self.x < -_PROB_TOL).any():
            raise GameValidationError("policy rows must lie on the simplex")

    @property
    def n_actions(self) -> int:
        return self.x.shape[1]

    def effective(self) -> np.ndarray:
        return (1.0 - self.epsilon) * self.x + self.epsilon / self.n_actions

    @staticmethod
    def uniform(n_states: int, n_actions: int, epsilon: float = 0.0) -> "DirectPolicy":
        return DirectPolicy(np.full((n_states, n_actions), 1.0 / n_actions), epsilon)


# ---------------------------------------------------------------------------
# Exact evaluation of a fixed pair
# ---------------------------------------------------------------------------

def _joint_tables(game: MarkovGame, pi_max: np.ndarray, pi_min: np.ndarray):
    """Per-state expected reward and continuation matrix under a fixed pair."""
    joint = np.einsum("sa,sb->sab", pi_max, pi_min)
    r_pi = np.einsum("sab,sab->s", joint, game.reward)
    p_pi = np.einsum("sab,sabt->st", joint, game.transition)
    return r_pi, p_pi


def _as_effective(policy, n_states, n_actions) -> np.ndarray:
    if isinstance(policy, DirectPolicy):
        eff = policy.effective()
    else:
        eff = np.asarray(policy, dtype=np.float64)
    if eff.shape != (n_states, n_actions):
        raise GameValidationError(
            f"policy shape {eff.shape} does not match game ({n_states}, {n_actions})"
        )
    return eff


def value_of(game: MarkovGame, pi_max, pi_min) -> float:
    """Exact V_rho of the pair: rho . (I - P_pi)^-1 r_pi."""
    pm = _as_effective(pi_max, game.n_states, game.actions_max)
    pn = _as_effective(pi_min, game.n_states, game.actions_min)
    r_pi, p_pi = _joint_tables(game, pm, pn)
    v = np.linalg.solve(np.eye(game.n_states) - p_pi, r_pi)
    return float(game.initial_dist @ v)


def state_values_of(game: MarkovGame, pi_max, pi_min) -> np.ndarray:
    pm = _as_effective(pi_max, game.n_states, game.actions_max)
    pn = _as_effective(pi_min, game.n_states, game.actions_min)
    r_pi, p_pi = _joint_tables(game, pm, pn)
    return np.linalg.solve(np.eye(game.n_states) - p_pi, r_pi)


# ---------------------------------------------------------------------------
# Matrix games
# ---------------------------------------------------------------------------

def solve_matrix_game(payoff) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact minimax of a payoff matrix (row player maximizes x^T M y).

    Solved as a linear program: maximize v subject to M^T x >= v per column,
    x on the simplex.  The column player's optimal strategy is recovered from
    the dual variables of the column constraints.
    """
    M = np.asarray(payoff, dtype=np.float64)
    if M.ndim != 2 or M.size == 0:
        raise ValueError("payoff must be a nonempty 2-D matrix")
    if not np.isfinite(M).all():
        raise ValueError("payoff must be finite")
    n_rows, n_cols = M.shape
    # Variables z = [v, x_0..x_{n_rows-1}]; minimize -v.
    c = np.zeros(n_rows + 1)
    c[0] = -1.0
    a_ub = np.hstack([np.ones((n_cols, 1)), -M.T])
    b_ub = np.zeros(n_cols)
    a_eq = np.zeros((1, n_rows + 1))
    a_eq[0, 1:] = 1.0
    bounds = [(None, None)] + [(0.0, 1.0)] * n_rows
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                  bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"matrix-game LP failed: {res.message}")
    value = -res.fun
    x = np.clip(res.x[1:], 0.0, None)
    x /= x.sum()
    # Dual of the <=0 column constraints gives the column mixed strategy.
    y = np.asarray(res.ineqlin.marginals, dtype=np.float64)
    y = np.clip(-y, 0.0, None)
    total = y.sum()
    y = np.full(n_cols, 1.0 / n_cols) if total <= 0 else y / total
    return float(value), x, y


# ---------------------------------------------------------------------------
# Shapley value iteration
# ---------------------------------------------------------------------------

@dataclass
class ShapleySolution:
    state_values: np.ndarray
    policy_max: np.ndarray
    policy_min: np.ndarray
    iterations: int
    tol: float

    @property
    def nash_pair(self):
        return self.policy_max, self.policy_min


def shapley_solve(game: MarkovGame, tol: float = 1e-9,
                  max_iter: int = 100_000) -> ShapleySolution:
    """Equilibrium of the stopping game by minimax value iteration.

    Backup per state: Q_V(s)[a, b] = r + sum_{s'} P(s'|s,a,b) V(s'), then
    V'(s) = minimax(Q_V(s)).  Contraction factor is (1 - min stop), so the
    iteration converges geometrically; it is run until the sup-norm change
    drops below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if game.min_stop <= 0.0:
        raise GameValidationError("game is not contracting (zero stop probability)")
    S = game.n_states
    v = np.zeros(S)
    pol_max = np.full((S, game.actions_max), 1.0 / game.actions_max)
    pol_min = np.full((S, game.actions_min), 1.0 / game.actions_min)
    for it in range(1, max_iter + 1):
        q = game.reward + np.einsum("sabt,t->sab", game.transition, v)
        v_new = np.empty(S)
        for s in range(S):
            val, x, y = solve_matrix_game(q[s])
            v_new[s] = val
            pol_max[s] = x
            pol_min[s] = y
        delta = np.abs(v_new - v).max()
        v = v_new
        if delta < tol:
            return ShapleySolution(v, pol_max, pol_min, it, tol)
    raise RuntimeError(f"shapley_solve did not reach tol={tol} in {max_iter} iterations")


# ---------------------------------------------------------------------------
# Best responses and the Nash gap
# ---------------------------------------------------------------------------

def _br_iterate(game: MarkovGame, opponent: np.ndarray, maximize: bool,
                rel_tol: float = 1e-13) -> np.ndarray:
    """State values of the exact best response against a frozen opponent.

    The frozen opponent reduces the game to a single-agent MDP whose optimal
    values are found by value iteration (contraction 1 - min stop).
    """
    if maximize:
        # Q[s, a] = sum_b pi_min(b|s) (r + P V)
        reduce_r = np.einsum("sab,sb->sa", game.reward, opponent)
        reduce_p = np.einsum("sabt,sb->sat", game.transition, opponent)
    else:
        reduce_r = np.einsum("sab,sa->sb", game.reward, opponent)
        reduce_p = np.einsum("sabt,sa->sbt", game.transition, opponent)
    v = np.zeros(game.n_states)
    scale = 1.0 / game.min_stop  # value magnitude bound for |r| <= 1
    stop_at = rel_tol * max(scale, 1.0)
    for _ in range(1_000_000):
        q = reduce_r + np.einsum("sat,t->sa", reduce_p, v)
        v_new = q.max(axis=1) if maximize else q.min(axis=1)
        if np.abs(v_new - v).max() < stop_at:
            return v_new
        v = v_new
    raise RuntimeError("best-response value iteration failed to converge")


def best_response_value(game: MarkovGame, opponent, maximize: bool) -> float:
    """rho-weighted value of the exact best response to ``opponent``."""
    n_act = game.actions_min if maximize else game.actions_max
    opp = _as_effective(opponent, game.n_states, n_act)
    v = _br_iterate(game, opp, maximize)
    return float(game.initial_dist @ v)


def nash_gap(game: MarkovGame, pi_max, pi_min) -> float:
    """Exploitability: max_pi V(pi, pi_min) - min_pi V(pi_max, pi) >= 0."""
    hi = best_response_value(game, pi_min, maximize=True)
    lo = best_response_value(game, pi_max, maximize=False)
    return hi - lo


# ---------------------------------------------------------------------------
# Construction helpers and JSON round trip
# ---------------------------------------------------------------------------

def matching_pennies() -> MarkovGame:
    """Single-state one-shot matching pennies (+1 match / -1 mismatch)."""
    reward = np.array([[[1.0, -1.0], [-1.0, 1.0]]])
    stop = np.ones((1, 2, 2))
    transition = np.zeros((1, 2, 2, 1))
    return MarkovGame(transition, stop, reward, np.array([1.0]), name="matching-pennies")


def random_game(n_states: int, actions_max: int, actions_min: int, seed: int,
                min_stop: float = 0.05, max_stop: float = 0.5) -> MarkovGame:
    """Seeded random game with rewards in [-1, 1] and bounded stop probability."""
    rng = np.random.default_rng(seed)
    stop = rng.uniform(min_stop, max_stop, size=(n_states, actions_max, actions_min))
    raw = rng.uniform(0.05, 1.0, size=(n_states, actions_max, actions_min, n_states))
    raw /= raw.sum(axis=3, keepdims=True)
    transition = raw * (1.0 - stop)[..., None]
    reward = rng.uniform(-1.0, 1.0, size=(n_states, actions_max, actions_min))
    rho = rng.uniform(0.1, 1.0, size=n_states)
    rho /= rho.sum()
    return MarkovGame(transition, stop, reward, rho,
                      name=f"random-s{n_states}-seed{seed}")


def game_to_json(game: MarkovGame) -> dict:
    entries = []
    for s in range(game.n_states):
        for a in range(game.actions_max):
            for b in range(game.actions_min):
                nxt = {str(t): game.transition[s, a, b, t]
                       for t in range(game.n_states)
                       if game.transition[s, a, b, t] != 0.0}
                entries.append({
                    "state": s, "a_max": a, "a_min": b,
                    "reward": game.reward[s, a, b],
                    "stop": game.stop[s, a, b],
                    "next": nxt,
                })
    return {
        "schema": GAME_SCHEMA,
        "name": game.name,
        "n_states": game.n_states,
        "actions_max": game.actions_max,
        "actions_min": game.actions_min,
        "initial_dist": game.initial_dist.tolist(),
        "entries": entries,
    }


def game_from_json(obj: dict) -> MarkovGame:
    if obj.get("schema") != GAME_SCHEMA:
        raise GameValidationError(f"unknown game schema {obj.get('schema')!r}")
    S = int(obj["n_states"])
    Am = int(obj["actions_max"])
    An = int(obj["actions_min"])
    transition = np.zeros((S, Am, An, S))
    stop = np.zeros((S, Am, An))
    reward = np.zeros((S, Am, An))
    seen = np.zeros((S, Am, An), dtype=bool)
    for entry in obj["entries"]:
        s, a, b = int(entry["state"]), int(entry["a_max"]), int(entry["a_min"])
        if seen[s, a, b]:
            raise GameValidationError(f"duplicate entry for (s={s}, a={a}, b={b})")
        seen[s, a, b] = True
        reward[s, a, b] = float(entry["reward"])
        stop[s, a, b] = float(entry["stop"])
        for t, p in entry.get("next", {}).items():
            transition[s, a, b, int(t)] = float(p)
    if not seen.all():
        raise GameValidationError("missing (state, a_max, a_min) entries")
    return MarkovGame(transition, stop, reward,
                      np.asarray(obj["initial_dist"], dtype=np.float64),
                      name=obj.get("name", "unnamed"))


def save_game(game: MarkovGame, path) -> None:
    with open(path, "w") as fh:
        json.dump(game_to_json(game), fh, indent=1)


def load_game(path) -> MarkovGame:
    with open(path) as fh:
        return game_from_json(json.load(fh))
