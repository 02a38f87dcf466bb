#!/usr/bin/env python3
"""
Seed management for reproducible runs.

One master seed is split into independent named streams (env, mask, init,
batch, eval) so that toggling one stage never perturbs the random draws of
another.
"""

import zlib

import numpy as np

STREAM_NAMES = ('env', 'eval_env', 'mask', 'init', 'batch', 'eval')


def stream_seed(master_seed: int, name: str) -> np.random.SeedSequence:
    """Derive the seed sequence of a named stream from the master seed."""
    return np.random.SeedSequence([int(master_seed), zlib.crc32(name.encode('utf-8'))])


class SeedStreams:
    """
    Named random streams derived from one master seed.

    Each call to rng(name) returns a fresh generator positioned at the start
    of that stream, so callers that need a persistent stream hold on to it.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)

    def rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng(stream_seed(self.master_seed, name))

    def __repr__(self) -> str:
        return f"SeedStreams(master_seed={self.master_seed})"
