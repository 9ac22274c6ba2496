"""Counter-based random streams.

All randomness in the package (parameter initialization, random target
phases) flows through Philox streams keyed by a (tag, seed) pair.  Philox
is counter-based, so the draws are reproducible across platforms and
independent of draw order elsewhere in the process.  Distinct tags give
independent streams for the same user-facing seed.
"""

from __future__ import annotations

import hashlib

import numpy as np

TAG_INIT = "param-init"
TAG_PHASE = "target-phase"


def stream(tag: str, seed: int) -> np.random.Generator:
    """Philox generator keyed by a domain tag and an integer seed."""
    digest = hashlib.sha256(f"{tag}:{seed}".encode()).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def normal(tag: str, seed: int, n: int, sigma: float) -> np.ndarray:
    """n i.i.d. draws from N(0, sigma^2)."""
    return stream(tag, seed).normal(0.0, sigma, size=n)


def uniform_angles(tag: str, seed: int, n: int) -> np.ndarray:
    """n i.i.d. draws from U[0, 2*pi)."""
    return stream(tag, seed).uniform(0.0, 2.0 * np.pi, size=n)
