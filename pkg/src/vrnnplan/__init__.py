"""Goal-directed planning laboratory on a 2D branching task.

Variational multiple-timescale RNN with latent-inference planning, plus
forward-model and stochastic-initial-state baselines, a deterministic
synthetic dataset generator, and an experiment harness with a CLI.
"""

__version__ = "0.1.0"
