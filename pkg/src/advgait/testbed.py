"""Frozen tabular-game testbed for the convergence experiments.

Three seeded games with tuned two-timescale settings; the same table drives
the CLI presets and the acceptance suite.  Matching pennies (fully mixed
equilibrium) needs heavy adversary exploration to pin the fast player near
uniform; the random games have vertex equilibria and run with symmetric
small exploration.  All runs use 2e5 episodes and a 1:50 rate ratio with a
decaying schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

from .games import MarkovGame, matching_pennies, random_game
from .pg import TwoTimescaleConfig


@dataclass
class TestbedEntry:
    name: str
    make_game: object
    eta_max: float
    ratio: float
    eps_max: float
    eps_min: float
    decay_power: float
    decay_tau: float
    n_episodes: int = 200_000
    gap_interval: int = 1000

    def game(self) -> MarkovGame:
        return self.make_game()

    def config(self, seed: int = 0, ratio: float | None = None) -> TwoTimescaleConfig:
        r = self.ratio if ratio is None else ratio
        return TwoTimescaleConfig(
            eta_max=self.eta_max, eta_min=self.eta_max * r,
            n_episodes=self.n_episodes, seed=seed,
            decay_power=self.decay_power, decay_tau=self.decay_tau,
            gap_interval=self.gap_interval,
            enforce_two_timescale=(r > 1.0))


THEOREM_TESTBED = [
    TestbedEntry("matching-pennies", matching_pennies,
                 eta_max=2e-3, ratio=50.0, eps_max=0.3, eps_min=0.95,
                 decay_power=1.0, decay_tau=1000.0),
    TestbedEntry("rand-2state",
                 lambda: random_game(2, 2, 2, seed=0, min_stop=0.35, max_stop=0.8),
                 eta_max=5e-4, ratio=50.0, eps_max=0.05, eps_min=0.05,
                 decay_power=1.0, decay_tau=2000.0),
    TestbedEntry("rand-5state",
                 lambda: random_game(5, 2, 2, seed=0, min_stop=0.35, max_stop=0.8),
                 eta_max=5e-4, ratio=50.0, eps_max=0.05, eps_min=0.05,
                 decay_power=1.0, decay_tau=2000.0),
]


def testbed_by_name(name: str) -> TestbedEntry:
    for entry in THEOREM_TESTBED:
        if entry.name == name:
            return entry
    raise KeyError(name)
