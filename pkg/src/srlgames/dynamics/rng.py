"""Per-run random streams derived from a single 64-bit master seed.

Every run owns independent Philox streams keyed by (master seed, run index,
purpose), so a run's draws never depend on which worker or batch integrates
it.
"""
import numpy as np

NOISE = 0
PAYOFF_STREAM = 1
INITIAL = 2

MAX_SEED = 2 ** 64


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < MAX_SEED:
        raise ValueError("master seed must be a 64-bit unsigned integer")
    return seed


def run_generator(master_seed: int, run: int, purpose: int = NOISE) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(master_seed), spawn_key=(int(run), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))
