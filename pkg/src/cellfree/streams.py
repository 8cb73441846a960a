"""Counter-style random substreams keyed by (seed, purpose, indices)."""

import numpy as np

TOPOLOGY = 1
SHADOWING = 2
KMEANS = 3
CHANNEL = 4
PILOT_NOISE = 5


def substream(seed: int, purpose: int, *indices: int) -> np.random.Generator:
    """Generator whose output depends only on its key, never on call order."""
    key = [int(seed), int(purpose), *(int(i) for i in indices)]
    if min(key) < 0:
        raise ValueError(f"substream keys must be non-negative, got {key}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian samples, E|x|^2 = 1."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
