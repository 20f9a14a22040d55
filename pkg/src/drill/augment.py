"""Input corruption for vector data: random masking and Gaussian noise.

Weak augmentation is a single masking pass; strong augmentation applies
several masking rounds followed by additive Gaussian noise.  All randomness
comes from an explicit generator, so augmentation is reproducible bit-exactly
given a fixed stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["AugmentConfig", "weak_augment", "strong_augment"]


@dataclass(frozen=True)
class AugmentConfig:
    mask_fraction: float = 0.05
    strong_rounds: int = 2
    noise_variance: float = 0.02
    mask_value: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.mask_fraction < 1.0:
            raise ValueError(f"mask_fraction must be in [0, 1), got {self.mask_fraction}")
        if self.strong_rounds < 1:
            raise ValueError(f"strong_rounds must be at least 1, got {self.strong_rounds}")
        if self.noise_variance < 0.0:
            raise ValueError(f"noise_variance must be nonnegative, got {self.noise_variance}")


def _mask_once(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    mask = rng.random(x.shape) < cfg.mask_fraction
    return np.where(mask, cfg.mask_value, x)


def weak_augment(inputs, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """One pass of elementwise random masking."""
    x = np.asarray(inputs, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs must be finite")
    return _mask_once(x, cfg, rng)


def strong_augment(inputs, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """``strong_rounds`` masking passes, then additive zero-mean Gaussian noise."""
    x = np.asarray(inputs, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs must be finite")
    out = x
    for _ in range(cfg.strong_rounds):
        out = _mask_once(out, cfg, rng)
    return out + rng.normal(0.0, math.sqrt(cfg.noise_variance), size=out.shape)
