"""Sinusoidal positional encoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EncodingConfig:
    m_pos: int = 10
    m_dir: int = 4
    include_input: bool = True

    def __post_init__(self):
        if self.m_pos < 0 or self.m_dir < 0:
            raise ValueError("frequency counts must be >= 0")

    def dim(self, k: int, m: int) -> int:
        return (k if self.include_input else 0) + 2 * m * k

    @property
    def pos_dim(self) -> int:
        return self.dim(3, self.m_pos)

    @property
    def dir_dim(self) -> int:
        return self.dim(3, self.m_dir)


def positional_encode(v, m: int, include_input: bool = True) -> np.ndarray:
    """Encode the last axis of ``v`` with ``m`` octaves of sin/cos.

    Layout along the last axis: the raw input (if kept), then for each
    frequency ``2**j * pi`` (j = 0..m-1) the sines of all components followed by
    their cosines.  A length-k input gives ``k + 2*m*k`` outputs.
    """
    v = np.asarray(v, dtype=np.float64)
    parts = [v] if include_input else []
    for j in range(m):
        arg = (2.0 ** j) * np.pi * v
        parts.append(np.sin(arg))
        parts.append(np.cos(arg))
    if not parts:
        return np.zeros(v.shape[:-1] + (0,))
    return np.concatenate(parts, axis=-1)
