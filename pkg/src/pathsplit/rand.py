"""Seed-stream derivation shared by every randomized component.

A stream is identified by a user-facing seed plus a tuple of small integers
naming the consumer (module tag, trace index, repetition, ...). Identical
identifiers always produce identical generators, and distinct identifiers
produce independent streams, so datasets and experiments are reproducible
trace by trace.
"""

from __future__ import annotations

import numpy as np

_SEED_MOD = 2**63


def stream_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a Generator for the stream named by (seed, *stream)."""
    entropy = (int(seed) % _SEED_MOD,) + tuple(int(s) % _SEED_MOD for s in stream)
    return np.random.default_rng(np.random.SeedSequence(entropy))
