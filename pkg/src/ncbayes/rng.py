"""Seeded random streams with reproducible splitting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RandomStream", "as_generator", "spawn_seeds", "sample_inv_gamma"]


def spawn_seeds(master_seed: int, n: int) -> list[int]:
    """Derive ``n`` independent integer seeds from one master seed.

    Uses ``numpy.random.SeedSequence`` state expansion, so the mapping
    (master_seed, n) -> seeds is fixed across runs and platforms.
    """
    if n < 1:
        raise ValueError("need at least one child seed")
    state = np.random.SeedSequence(master_seed).generate_state(n, np.uint64)
    return [int(s) for s in state]


@dataclass
class RandomStream:
    """A seed plus the numpy Generator it deterministically produces.

    Two streams built from equal seeds yield bit-identical draw sequences.
    ``spawn`` gives child streams whose seeds depend only on the parent seed,
    not on how much the parent has been consumed.
    """

    seed: int
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not isinstance(self.seed, (int, np.integer)):
            raise ValueError("seed must be an integer")
        self.seed = int(self.seed)
        self.generator = np.random.default_rng(self.seed)

    def spawn(self, n: int) -> list["RandomStream"]:
        return [RandomStream(s) for s in spawn_seeds(self.seed, n)]


def sample_inv_gamma(shape, scale, rng, size=None):
    """Inverse-gamma draws: X = scale / Gamma(shape, 1)."""
    gen = as_generator(rng)
    shape = np.asarray(shape, float)
    scale = np.asarray(scale, float)
    if np.any(shape <= 0) or np.any(scale <= 0):
        raise ValueError("inverse-gamma parameters must be positive")
    return scale / gen.gamma(shape, 1.0, size=size)


def as_generator(rng) -> np.random.Generator:
    """Accept a RandomStream, Generator, or integer seed; return a Generator."""
    if isinstance(rng, RandomStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng))
    raise ValueError(f"cannot interpret {rng!r} as a random source")
