"""Classic spike-to-intensity reconstructions: TFI, TFP and long-term rate."""

from __future__ import annotations

import numpy as np

from .stream import SpikeStream, window_bounds


def _nth_spike(cum, dense, n):
    """Time index of the n-th spike (1-based) per pixel; -1 where absent."""
    hit = (cum == n[None]) & (dense != 0)
    idx = hit.argmax(axis=0)
    return np.where(hit.any(axis=0), idx, -1)


def tfi(stream: SpikeStream, t: int, theta: float, return_mask: bool = False):
    """Texture from inter-spike interval: ``theta / (n - m)`` around step ``t``.

    The pair of adjacent spikes (m, n) whose interval contains ``t`` is used;
    when ``t`` falls on a spike the earlier pair wins.  Before the first or
    after the last spike the nearest (first or last) pair is used.  Pixels with
    fewer than two spikes output 0 and are cleared in the optional mask.
    """
    if not 0 <= t < stream.steps:
        raise IndexError(f"t={t} outside [0, {stream.steps})")
    dense = stream.dense
    cum = np.cumsum(dense, axis=0, dtype=np.int32)
    total = cum[-1]
    valid = total >= 2

    # spikes strictly before t, and the first spike at or after t
    before = cum[t - 1] if t > 0 else np.zeros_like(total)
    m_in = _nth_spike(cum, dense, before)
    n_in = _nth_spike(cum, dense, before + 1)

    one = np.ones_like(total)
    first, second = _nth_spike(cum, dense, one), _nth_spike(cum, dense, one * 2)
    last, penult = _nth_spike(cum, dense, total), _nth_spike(cum, dense, total - 1)

    head = before == 0           # t at or before the first spike
    tail = before == total       # no spike at or after t
    m = np.where(head, first, np.where(tail, penult, m_in))
    n = np.where(head, second, np.where(tail, last, n_in))

    gap = np.where(valid, n - m, 1)
    out = np.where(valid, theta / gap, 0.0)
    if return_mask:
        return out, valid
    return out


def tfp(stream: SpikeStream, t: int, w: int, theta: float) -> np.ndarray:
    """Texture from playback: ``theta * count / window`` over the window centred at ``t``."""
    if w < 1:
        raise ValueError("window must be >= 1")
    lo, hi = window_bounds(stream.steps, t, w)
    if hi <= lo:
        return np.zeros((stream.height, stream.width))
    return theta * stream.counts(lo, hi) / (hi - lo)


def long_term_rate(stream: SpikeStream, theta: float) -> np.ndarray:
    """``theta * count / steps`` over the whole stream."""
    return theta * stream.counts() / stream.steps
