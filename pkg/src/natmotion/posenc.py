"""Sinusoidal positional embeddings with tunable scale and wavelength base.

Dimension 2i carries sin(alpha * t / beta^(2i/d)), dimension 2i+1 the
matching cosine. alpha widens the phase step between consecutive frames,
beta spreads the per-dimension wavelengths.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PosEncConfig:
    d_model: int = 256
    alpha: float = 10.0
    beta: float = 500.0

    def __post_init__(self):
        if self.d_model < 2 or self.d_model % 2 != 0:
            raise ValueError(f"d_model must be even and at least 2, got {self.d_model}")
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 1.0:
            raise ValueError(f"beta must exceed 1, got {self.beta}")


def _angles(t, cfg):
    i = np.arange(cfg.d_model // 2)
    return cfg.alpha * t / cfg.beta ** (2.0 * i / cfg.d_model)


def positional_embedding(t, cfg):
    """Embedding vector (d_model,) for integer frame index t (1-based; 0 allowed)."""
    ang = _angles(t, cfg)
    out = np.empty(cfg.d_model)
    out[0::2] = np.sin(ang)
    out[1::2] = np.cos(ang)
    return out


def embedding_table(cfg, m):
    """Rows t = 1..m stacked into an (m, d_model) table."""
    if m < 1:
        raise ValueError(f"table length must be at least 1, got {m}")
    return np.stack([positional_embedding(t, cfg) for t in range(1, m + 1)])
