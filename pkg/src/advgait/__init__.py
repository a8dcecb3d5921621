"""advgait: adversarial locomotion / motion-imitation training at desk scale.

Subsystems:
  games, pg       -- exact tabular zero-sum Markov games and the independent
                     two-timescale policy-gradient testbed
  env             -- reduced-order humanoid surrogate (gait phase, pendulum
                     torso, velocity-tracked base)
  rewards         -- lower/upper reward banks, term by term
  motions, curriculum -- procedural motion library and the dual/command curricula
  autodiff, nets, ppo -- self-contained networks and clipped PPO
  training, evaluation -- alternating adversarial rounds and the metric suite
  dataset         -- annotated trajectory generation and the record format
  fm              -- text-conditioned autoregressive controller
  cli             -- command-line entry point
"""

__version__ = "0.1.0"

from . import backend

__all__ = ["backend", "__version__"]
