"""Deterministic sinusoidal feature encodings for time and position inputs.

Layout: with D input dims and L levels, the output is
``[raw inputs (if include_input)] + per dim [sin(2^0 pi x), cos(2^0 pi x),
..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]`` where x is the scaled input.
Total length D * (include_input + 2 L).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ValidationError


@dataclass(frozen=True)
class EncodingConfig:
    levels: int
    include_input: bool = True
    input_scale: float = 1.0

    def __post_init__(self):
        if self.levels < 1:
            raise ValidationError(f"encoding levels must be >= 1, got {self.levels}")
        if not self.input_scale > 0.0:
            raise ValidationError(f"encoding input_scale must be > 0, got {self.input_scale}")

    def output_dim(self, input_dim: int) -> int:
        return input_dim * (int(self.include_input) + 2 * self.levels)


def fourier_encode(x, cfg: EncodingConfig) -> NDArray[np.float64]:
    """Encode scalars or vectors; input shape (..., D) or scalar, output (..., D*(inc+2L))."""
    arr = np.asarray(x, dtype=np.float64)
    scalar_input = arr.ndim == 0
    if scalar_input:
        arr = arr.reshape(1)
    if not np.all(np.isfinite(arr * cfg.input_scale)):
        raise ValidationError("fourier_encode: non-finite input")
    scaled = arr * cfg.input_scale
    freqs = (2.0 ** np.arange(cfg.levels)) * np.pi  # (L,)
    ang = scaled[..., None] * freqs  # (..., D, L)
    trig = np.stack([np.sin(ang), np.cos(ang)], axis=-1)  # (..., D, L, 2)
    blocks = trig.reshape(*scaled.shape, 2 * cfg.levels)  # (..., D, 2L) interleaved sin/cos
    parts = []
    if cfg.include_input:
        parts.append(scaled)
    parts.append(blocks.reshape(*arr.shape[:-1], -1))
    return np.concatenate(parts, axis=-1)


def normalized_input(raw, center: float, half_span: float, clamp: bool = True):
    """Map raw units into roughly [-1, 1]; clamps and reports if out of span."""
    x = (np.asarray(raw, dtype=np.float64) - center) / half_span
    clipped = False
    if clamp:
        clipped = bool(np.any(np.abs(x) > 1.0))
        x = np.clip(x, -1.0, 1.0)
    return x, clipped
