"""Deterministic substream management.

A single master seed drives every random draw in the package. Substreams are
derived as ``SeedSequence([seed, purpose, index])`` where ``purpose`` is a
stable hash of a short label, so results are reproducible regardless of
thread count or scheduling order.
"""

from __future__ import annotations

import zlib

import numpy as np


def _purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def substream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Generator for the (purpose, index) substream of a master seed."""
    ss = np.random.SeedSequence([int(seed), _purpose_key(purpose), int(index)])
    return np.random.Generator(np.random.PCG64(ss))
