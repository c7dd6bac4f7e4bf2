"""
Hyperparameter defaults for experiments.

Step counts are total environment steps of a single rollout; the
Predator & Prey length is scaled down unless --full-length is given.
"""


TABULAR_LEARNING_RATE = 0.05
"""
Default step size of the tabular quantile update.
"""

MATRIX_TOTAL_STEPS = 20_000
MATRIX_WARMUP_STEPS = 0

PREDATOR_PREY_TOTAL_STEPS = 200_000
"""
Desk-scale training length. --full-length switches to FULL_LENGTH_TOTAL_STEPS.
"""

FULL_LENGTH_TOTAL_STEPS = 800_000
PREDATOR_PREY_WARMUP_STEPS = 50_000

EVAL_EVERY = 5_000
EVAL_EPISODES = 10

DEFAULT_SEEDS = [0]

FINAL_WINDOW_FRACTION = 0.1
"""
Share of training (by step) averaged into a run's final return in sweeps.
"""
