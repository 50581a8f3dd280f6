"""Seeded random streams and Box-Muller Gaussian sampling."""
from __future__ import annotations

import math

import numpy as np

from adamo.errors import ConfigError
from adamo.numerics.autodiff import Tensor


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; the only source of randomness in adamo."""
    return np.random.Generator(np.random.Philox(int(seed)))


def standard_normal(n: int, rng: np.random.Generator) -> np.ndarray:
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1]: keeps log finite
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * math.pi * u2
    return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]


def sample_gaussian(shape, sigma: float, rng: np.random.Generator, dtype=np.float64) -> Tensor:
    """I.i.d. Normal(0, sigma^2) draws. sigma == 0 yields exact zeros without touching ``rng``."""
    if sigma < 0:
        raise ConfigError(f"sigma must be non-negative, got {sigma}")
    shape = tuple(int(s) for s in shape)
    if sigma == 0:
        return Tensor(np.zeros(shape, dtype=dtype))
    n = math.prod(shape)
    return Tensor((sigma * standard_normal(n, rng)).reshape(shape).astype(dtype))
