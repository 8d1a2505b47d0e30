"""Derivation of per-stage sub-seeds from a single master seed.

Every random decision in a run draws from ``numpy.random.default_rng(sub_seed(master, stage, *counters))``.
The sub-seed is a pure function of the master seed, a fixed stage number and
integer counters (repetition, fold, config index, ...), so any stage can be
replayed on its own.
"""
from __future__ import annotations

import zlib

import numpy as np

HOLDOUT = 1
SELECTION = 2
CV_FOLDS = 3
CONFIGS = 4
MODEL = 5
EXPLAIN = 6
DATASET = 7
SYNTHETIC = 8


def sub_seed(master: int, stage: int, *counters: int) -> int:
    seq = np.random.SeedSequence([int(master) & 0xFFFFFFFF, stage, *[int(c) & 0xFFFFFFFF for c in counters]])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def name_counter(name: str) -> int:
    """Stable integer for a dataset name, independent of its position in a list."""
    return zlib.crc32(name.encode("utf-8"))


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
