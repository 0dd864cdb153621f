"""Spike stream container, the ``.spk`` / ``.spm`` binary formats and stream queries.

A stream is a binary tensor of shape (steps, height, width).  On disk (and in
memory) every frame is packed row-major, MSB-first, and padded to a whole byte::

    offset  size  field
    0       4     magic b"SPK1"
    4       4     width        (uint32, little-endian)
    8       4     height       (uint32, little-endian)
    12      4     steps        (uint32, little-endian)
    16      8     clock period (uint64 nanoseconds, little-endian)
    24      ...   steps * ceil(width*height/8) payload bytes

Per-pixel maps (dark current, nonuniformity) use the same 24-byte prefix with
magic b"SPM1", steps = 1, clock = 0, followed by width*height float32 values
(little-endian, row-major).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BadMagic, EmptyWindow, OutOfBounds, TruncatedPayload, ZeroDimension

SPK_MAGIC = b"SPK1"
SPM_MAGIC = b"SPM1"
_HEADER = struct.Struct("<4sIIIQ")
HEADER_SIZE = _HEADER.size  # 24

DEFAULT_CLOCK_NS = 50_000  # 50 us, i.e. a 20 kHz readout


def frame_nbytes(width: int, height: int) -> int:
    return (width * height + 7) // 8


@dataclass(frozen=True, eq=False)
class SpikeStream:
    """Immutable bit-packed spike stream.

    ``packed`` has shape (steps, frame_nbytes) and dtype uint8; padding bits at
    the end of each frame are always zero.  Use :meth:`from_dense` to build one
    from a boolean (steps, height, width) array.
    """

    width: int
    height: int
    steps: int
    clock_ns: int
    packed: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.steps < 1:
            raise ZeroDimension(f"stream dimensions must be >= 1, got {self.width}x{self.height}x{self.steps}")
        if self.clock_ns <= 0:
            raise ValueError("clock period must be positive")
        packed = np.ascontiguousarray(self.packed, dtype=np.uint8)
        expected = (self.steps, frame_nbytes(self.width, self.height))
        if packed.shape != expected:
            raise TruncatedPayload(f"packed payload has shape {packed.shape}, expected {expected}")
        pad = expected[1] * 8 - self.width * self.height
        if pad:
            packed = packed.copy()
            packed[:, -1] &= np.uint8((0xFF << pad) & 0xFF)
        packed.flags.writeable = False
        object.__setattr__(self, "packed", packed)

    @classmethod
    def from_dense(cls, bits, clock_period: float | None = None, clock_ns: int | None = None) -> "SpikeStream":
        """Pack a (steps, height, width) array of 0/1 values."""
        bits = np.asarray(bits)
        if bits.ndim != 3:
            raise ValueError(f"expected a (steps, height, width) array, got shape {bits.shape}")
        if clock_ns is None:
            clock_ns = DEFAULT_CLOCK_NS if clock_period is None else int(round(clock_period * 1e9))
        steps, height, width = bits.shape
        if steps == 0 or height == 0 or width == 0:
            raise ZeroDimension(f"stream dimensions must be >= 1, got {width}x{height}x{steps}")
        flat = (bits.reshape(steps, height * width) != 0)
        return cls(width, height, steps, clock_ns, np.packbits(flat, axis=1))

    @property
    def clock_period(self) -> float:
        """Seconds per step."""
        return self.clock_ns / 1e9

    @property
    def shape(self):
        return (self.steps, self.height, self.width)

    @cached_property
    def dense(self) -> np.ndarray:
        """Read-only uint8 array of shape (steps, height, width)."""
        n = self.width * self.height
        out = np.unpackbits(self.packed, axis=1, count=n).reshape(self.steps, self.height, self.width)
        out.flags.writeable = False
        return out

    def counts(self, t_begin: int = 0, t_end: int | None = None) -> np.ndarray:
        """Per-pixel spike counts over [t_begin, t_end) as an int64 (height, width) array."""
        t_end = self.steps if t_end is None else t_end
        return self.dense[t_begin:t_end].sum(axis=0, dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, SpikeStream):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.clock_ns == other.clock_ns
            and np.array_equal(self.packed, other.packed)
        )

    def __hash__(self):
        return hash((self.shape, self.clock_ns, self.packed.tobytes()))

    def __repr__(self):
        return f"SpikeStream({self.width}x{self.height}x{self.steps}, clock={self.clock_ns}ns)"


def _check_pixel(stream: SpikeStream, p) -> tuple[int, int]:
    x, y = int(p[0]), int(p[1])
    if not (0 <= x < stream.width and 0 <= y < stream.height):
        raise OutOfBounds(f"pixel ({x},{y}) outside {stream.width}x{stream.height} stream")
    return x, y


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def _open(target, mode):
    if isinstance(target, (str, os.PathLike)):
        return open(target, mode), True
    return target, False


def encode_spk(stream: SpikeStream) -> bytes:
    header = _HEADER.pack(SPK_MAGIC, stream.width, stream.height, stream.steps, stream.clock_ns)
    return header + stream.packed.tobytes()


def write_spk(stream: SpikeStream, sink) -> int:
    """Write ``stream`` to a path or binary file object; return the byte count."""
    data = encode_spk(stream)
    fh, owned = _open(sink, "wb")
    try:
        fh.write(data)
    finally:
        if owned:
            fh.close()
    return len(data)


def _parse_header(data: bytes, magic: bytes):
    if len(data) < 4 or data[:4] != magic:
        raise BadMagic(f"expected magic {magic!r}, got {bytes(data[:4])!r}")
    if len(data) < HEADER_SIZE:
        raise TruncatedPayload(f"header needs {HEADER_SIZE} bytes, got {len(data)}")
    _, width, height, steps, clock_ns = _HEADER.unpack_from(data)
    if width == 0 or height == 0 or steps == 0:
        raise ZeroDimension(f"zero dimension in header: {width}x{height}x{steps}")
    return width, height, steps, clock_ns


def decode_spk(data: bytes) -> SpikeStream:
    width, height, steps, clock_ns = _parse_header(data, SPK_MAGIC)
    nbytes = frame_nbytes(width, height)
    expected = HEADER_SIZE + steps * nbytes
    if len(data) != expected:
        raise TruncatedPayload(
            f"{width}x{height}x{steps} stream needs {steps * nbytes} payload bytes, "
            f"got {len(data) - HEADER_SIZE}"
        )
    if clock_ns == 0:
        raise ZeroDimension("clock period of 0 ns")
    payload = np.frombuffer(data, dtype=np.uint8, offset=HEADER_SIZE).reshape(steps, nbytes)
    return SpikeStream(width, height, steps, clock_ns, payload)


def read_spk(source) -> SpikeStream:
    """Parse a ``.spk`` stream from a path, a binary file object or raw bytes."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        return decode_spk(bytes(source))
    fh, owned = _open(source, "rb")
    try:
        data = fh.read()
    finally:
        if owned:
            fh.close()
    return decode_spk(data)


def write_spm(values, sink) -> int:
    """Write a per-pixel (height, width) map as float32 ``.spm``."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"map must be 2-D, got shape {values.shape}")
    height, width = values.shape
    data = _HEADER.pack(SPM_MAGIC, width, height, 1, 0) + values.astype("<f4").tobytes()
    fh, owned = _open(sink, "wb")
    try:
        fh.write(data)
    finally:
        if owned:
            fh.close()
    return len(data)


def read_spm(source) -> np.ndarray:
    """Read a ``.spm`` map; returns a float64 (height, width) array."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        data = bytes(source)
    else:
        fh, owned = _open(source, "rb")
        try:
            data = fh.read()
        finally:
            if owned:
                fh.close()
    width, height, _, _ = _parse_header(data, SPM_MAGIC)
    if len(data) != HEADER_SIZE + 4 * width * height:
        raise TruncatedPayload(f"{width}x{height} map needs {4 * width * height} payload bytes")
    values = np.frombuffer(data, dtype="<f4", offset=HEADER_SIZE).reshape(height, width)
    return values.astype(np.float64)


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------

def spike_count(stream: SpikeStream, p, t_begin: int = 0, t_end: int | None = None) -> int:
    """Number of spikes at pixel ``p = (x, y)`` in [t_begin, t_end)."""
    x, y = _check_pixel(stream, p)
    t_end = stream.steps if t_end is None else t_end
    if not (0 <= t_begin <= t_end <= stream.steps):
        raise OutOfBounds(f"time range [{t_begin},{t_end}) outside [0,{stream.steps}]")
    return int(stream.dense[t_begin:t_end, y, x].sum())


def spike_times(stream: SpikeStream, p) -> np.ndarray:
    x, y = _check_pixel(stream, p)
    return np.flatnonzero(stream.dense[:, y, x])


def inter_spike_intervals(stream: SpikeStream, p) -> list[tuple[int, int]]:
    """Adjacent spike-time pairs ``(prev_t, next_t)`` at pixel ``p``."""
    times = spike_times(stream, p).tolist()
    return list(zip(times[:-1], times[1:]))


def window_bounds(steps: int, t_center: int, w: int) -> tuple[int, int]:
    """Clip the length-``w`` window centred at ``t_center`` to [0, steps)."""
    lo = max(t_center - w // 2, 0)
    hi = min(t_center + (w + 1) // 2, steps)
    return lo, hi


def slice_window(stream: SpikeStream, t_center: int, w: int) -> SpikeStream:
    lo, hi = window_bounds(stream.steps, t_center, w)
    if w <= 0 or hi <= lo:
        raise EmptyWindow(f"window of length {w} at t={t_center} is empty in a {stream.steps}-step stream")
    return SpikeStream(stream.width, stream.height, hi - lo, stream.clock_ns, stream.packed[lo:hi])


def mean_intervals(stream: SpikeStream) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel mean inter-spike interval and spike count.

    The mean of all adjacent gaps telescopes to (last - first) / (n - 1); pixels
    with fewer than two spikes get NaN.
    """
    dense = stream.dense
    counts = dense.sum(axis=0, dtype=np.int64)
    t = np.arange(stream.steps)[:, None, None]
    first = np.where(dense, t, stream.steps).min(axis=0)
    last = np.where(dense, t, -1).max(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts >= 2, (last - first) / np.maximum(counts - 1, 1), np.nan)
    return mean.astype(np.float64), counts

