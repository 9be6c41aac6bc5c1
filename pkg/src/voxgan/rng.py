"""Deterministic random streams.

One ``Rng`` per run; every sample (latents, interpolate mixing, shuffles,
weight init) flows from it so a seed fully determines a trajectory. State
snapshots are plain JSON-able dicts, which is what lets checkpoints resume
bit-identically.
"""

import numpy as np

from .tensor import Tensor, default_dtype


class Rng:
    """PCG64 stream addressed by a 64-bit seed."""

    algorithm = "pcg64"

    def __init__(self, seed=0):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, shape=()):
        return self._gen.standard_normal(size=shape, dtype=np.float64)

    def uniform(self, shape=()):
        return self._gen.random(size=shape, dtype=np.float64)

    def integers(self, low, high, shape=()):
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def truncated_normal(self, shape, std=0.02, clip=2.0):
        """N(0, std) resampled until every draw is within clip standard deviations."""
        out = self._gen.standard_normal(size=shape, dtype=np.float64)
        bad = np.abs(out) > clip
        while bad.any():
            out[bad] = self._gen.standard_normal(size=int(bad.sum()), dtype=np.float64)
            bad = np.abs(out) > clip
        return out * std

    def child(self, key):
        """Independent stream derived deterministically from (seed, key)."""
        r = Rng.__new__(Rng)
        r.seed = self.seed
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(int(key),))
        r._gen = np.random.Generator(np.random.PCG64(seq))
        return r

    def state(self):
        return {"seed": self.seed, "algorithm": self.algorithm, "pcg64": self._gen.bit_generator.state}

    def set_state(self, state):
        if state.get("algorithm", self.algorithm) != self.algorithm:
            raise ValueError(f"rng algorithm mismatch: {state.get('algorithm')}")
        self.seed = int(state["seed"])
        self._gen.bit_generator.state = state["pcg64"]


def sample_normal(rng, shape):
    """I.i.d. standard-normal tensor; advances the stream."""
    return Tensor(rng.normal(shape).astype(default_dtype()))


def sample_uniform(rng, shape):
    """I.i.d. U[0,1) tensor; advances the stream."""
    return Tensor(rng.uniform(shape).astype(default_dtype()))
