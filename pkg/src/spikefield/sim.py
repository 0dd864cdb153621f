"""Integrate-and-fire spike camera simulator and two-scene sensor calibration.

Units: intensities are "accumulation per clock tick"; a pixel fires when its
accumulated charge reaches ``theta * R(x, y)``.  Dark current is an equivalent
intensity added to the scene before integration.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateInterval, DimensionMismatch, InsufficientSpikes
from .stream import DEFAULT_CLOCK_NS, SpikeStream, mean_intervals


class ResetMode(str, enum.Enum):
    SUBTRACT = "subtract"
    ZERO = "zero"

    @classmethod
    def parse(cls, value) -> "ResetMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "subtract": cls.SUBTRACT, "subtractthreshold": cls.SUBTRACT, "soft": cls.SUBTRACT,
            "zero": cls.ZERO, "resettozero": cls.ZERO, "hard": cls.ZERO,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown reset mode {value!r}") from None


@dataclass(frozen=True)
class NonuniformityMap:
    """Per-pixel multiplicative threshold deviation.

    ``reference`` is the (x, y) pixel whose value is exactly 1 when the map was
    obtained by calibration; synthetic maps leave it as None.
    """

    r: np.ndarray
    reference: tuple[int, int] | None = None

    def __post_init__(self):
        r = np.array(self.r, dtype=np.float64)
        if r.ndim != 2:
            raise ValueError(f"nonuniformity map must be 2-D, got shape {r.shape}")
        if not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise ValueError("nonuniformity values must be positive and finite")
        r.flags.writeable = False
        object.__setattr__(self, "r", r)

    @property
    def shape(self):
        return self.r.shape

    @classmethod
    def uniform(cls, height: int, width: int) -> "NonuniformityMap":
        return cls(np.ones((height, width)))

    @classmethod
    def random(cls, height: int, width: int, sigma: float, seed=0) -> "NonuniformityMap":
        """Gaussian deviation ``1 + sigma * z`` clipped to [0.5, 1.5]."""
        rng = np.random.default_rng(seed)
        return cls(np.clip(1.0 + sigma * rng.standard_normal((height, width)), 0.5, 1.5))


@dataclass(frozen=True)
class SpikeCameraModel:
    theta: float
    dark_current: np.ndarray
    nonuniformity: NonuniformityMap
    clock_ns: int = DEFAULT_CLOCK_NS
    reset_mode: ResetMode = ResetMode.SUBTRACT
    shot_noise: bool = False
    photon_scale: float = 100.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not self.photon_scale > 0:
            raise ValueError("photon_scale must be positive")
        dark = np.array(self.dark_current, dtype=np.float64)
        if dark.shape != self.nonuniformity.shape:
            raise DimensionMismatch(
                f"dark current map {dark.shape} does not match nonuniformity map {self.nonuniformity.shape}"
            )
        if np.any(dark < 0) or not np.all(np.isfinite(dark)):
            raise ValueError("dark current must be non-negative and finite")
        dark.flags.writeable = False
        object.__setattr__(self, "dark_current", dark)
        object.__setattr__(self, "reset_mode", ResetMode.parse(self.reset_mode))

    @property
    def shape(self):
        return self.dark_current.shape

    @property
    def thresholds(self) -> np.ndarray:
        return self.theta * self.nonuniformity.r

    @classmethod
    def ideal(cls, height: int, width: int, theta: float = 1.0, **kw) -> "SpikeCameraModel":
        """Noise-free sensor: no dark current, uniform thresholds, no shot noise."""
        return cls(theta, np.zeros((height, width)), NonuniformityMap.uniform(height, width), **kw)

    def with_(self, **changes) -> "SpikeCameraModel":
        return replace(self, **changes)


# named sensor noise levels used by the builtin scenes and the CLI
NOISE_PRESETS = {
    "none": dict(dark=0.0, sigma=0.0, shot_noise=False, photon_scale=100.0),
    "low": dict(dark=0.002, sigma=0.05, shot_noise=True, photon_scale=50.0),
    "medium": dict(dark=0.005, sigma=0.1, shot_noise=True, photon_scale=20.0),
    "high": dict(dark=0.01, sigma=0.15, shot_noise=True, photon_scale=8.0),
}


def preset_model(name: str, height: int, width: int, theta: float = 1.0, seed=0, **kw) -> SpikeCameraModel:
    p = NOISE_PRESETS[name]
    return SpikeCameraModel(
        theta=theta,
        dark_current=np.full((height, width), p["dark"]),
        nonuniformity=NonuniformityMap.random(height, width, p["sigma"], seed=seed),
        shot_noise=p["shot_noise"],
        photon_scale=p["photon_scale"],
        **kw,
    )


def simulate_stream(frames, model: SpikeCameraModel, steps_per_frame: int, seed=0) -> SpikeStream:
    """Integrate each frame for ``steps_per_frame`` ticks and emit spikes.

    ``frames`` is a (height, width) array or a sequence of them.  In subtract
    mode the potential is tracked as total charge minus ``n * threshold``, so a
    constant noiseless input ``a`` yields ``floor(a * T / threshold)`` spikes
    exactly.  At most one spike is emitted per pixel and tick.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 2:
        frames = frames[None]
    if frames.ndim != 3 or frames.shape[1:] != model.shape:
        raise DimensionMismatch(f"frames of shape {frames.shape[1:]} do not match sensor {model.shape}")
    if steps_per_frame < 1:
        raise ValueError("steps_per_frame must be >= 1")
    if np.any(frames < 0) or not np.all(np.isfinite(frames)):
        raise ValueError("intensities must be non-negative and finite")

    rng = np.random.default_rng(seed)
    thr = model.thresholds
    height, width = model.shape
    out = np.zeros((frames.shape[0] * steps_per_frame, height, width), dtype=bool)
    subtract = model.reset_mode is ResetMode.SUBTRACT

    charge_base = np.zeros((height, width))   # charge accumulated before the current frame
    charge = np.zeros((height, width))
    fired = np.zeros((height, width))         # spikes emitted so far
    reset_charge = np.zeros((height, width))  # charge at last reset (zero-reset mode)
    t = 0
    for frame in frames:
        rate = frame + model.dark_current
        for k in range(1, steps_per_frame + 1):
            if model.shot_noise:
                charge = charge + rng.poisson(model.photon_scale * rate) / model.photon_scale
            else:
                # closed form within a frame keeps the floor rate law exact
                charge = charge_base + rate * k
            if subtract:
                spike = charge / thr >= fired + 1
            else:
                spike = charge - reset_charge >= thr
                reset_charge = np.where(spike, charge, reset_charge)
            fired += spike
            out[t] = spike
            t += 1
        charge_base = charge
    return SpikeStream.from_dense(out, clock_ns=model.clock_ns)


def firing_rate_expectation(intensity, theta, r=1.0, dark=0.0):
    """Asymptotic spikes per tick ``(intensity + dark) / (theta * r)``."""
    return (np.asarray(intensity) + dark) / (theta * np.asarray(r))


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

@dataclass
class CalibrationRecord:
    """Everything measured and derived during a two-scene calibration.

    Interval maps are in ticks.  ``theta_ref`` is the reference pixel's firing
    threshold in intensity units, ``(l2 + L_d) * T2`` at that pixel, so that
    ``theta_ref * r`` reproduces each pixel's threshold.
    """

    l1: float
    l2: float
    t_d: np.ndarray
    t1: np.ndarray
    t2_map: np.ndarray
    ld_map: np.ndarray
    nonuniformity: NonuniformityMap | None = None
    theta_ref: float | None = None
    literal: bool = False
    notes: dict = field(default_factory=dict)

    def model(self, **kw) -> SpikeCameraModel:
        """Sensor model that reproduces the calibration captures."""
        return SpikeCameraModel(self.theta_ref, self.ld_map, self.nonuniformity, **kw)


def _intervals_or_raise(stream: SpikeStream) -> np.ndarray:
    mean, counts = mean_intervals(stream)
    bad = np.argwhere(counts < 2)
    if bad.size:
        raise InsufficientSpikes([(int(x), int(y)) for y, x in bad])
    return mean


def calibrate_dark_current(dark_stream: SpikeStream, lit_stream: SpikeStream, l1: float) -> np.ndarray:
    """Equivalent dark-current intensity per pixel, ``L1 * T1 / (Td - T1)``."""
    if dark_stream.shape[1:] != lit_stream.shape[1:]:
        raise DimensionMismatch("dark and lit streams differ in size")
    if not l1 > 0:
        raise ValueError("l1 must be positive")
    t_d = _intervals_or_raise(dark_stream)
    t1 = _intervals_or_raise(lit_stream)
    return dark_from_intervals(t_d, t1, l1)


def dark_from_intervals(t_d, t1, l1):
    t_d = np.asarray(t_d, dtype=np.float64)
    t1 = np.asarray(t1, dtype=np.float64)
    gap = t_d - t1
    if np.any(gap <= 0):
        raise DegenerateInterval(
            f"dark interval must exceed lit interval at every pixel ({int(np.sum(gap <= 0))} violations)"
        )
    return l1 * t1 / gap


def nonuniformity_from_intervals(t2, l2, ld_map, literal: bool = False):
    """Return ``(r, reference, response)`` from per-pixel mean intervals.

    The response of a pixel is ``(l2 + L_d) * T2``, proportional to its firing
    threshold.  The reference is the pixel whose response is closest to the
    map-wide mean (ties go to the lowest row-major index).  By default
    ``r = response / response_ref``; ``literal=True`` returns the reciprocal.
    """
    t2 = np.asarray(t2, dtype=np.float64)
    ld_map = np.asarray(ld_map, dtype=np.float64)
    if t2.shape != ld_map.shape:
        raise DimensionMismatch(f"interval map {t2.shape} does not match dark map {ld_map.shape}")
    response = (l2 + ld_map) * t2
    idx = int(np.argmin(np.abs(response - response.mean())))
    ref_y, ref_x = np.unravel_index(idx, response.shape)
    ref = response[ref_y, ref_x]
    r = ref / response if literal else response / ref
    return r, (int(ref_x), int(ref_y)), response


def calibrate_nonuniformity(stream_l2: SpikeStream, l2: float, ld_map, literal: bool = False) -> NonuniformityMap:
    if not l2 > 0:
        raise ValueError("l2 must be positive")
    ld_map = np.asarray(ld_map, dtype=np.float64)
    if ld_map.shape != stream_l2.shape[1:]:
        raise DimensionMismatch(f"dark map {ld_map.shape} does not match stream {stream_l2.shape[1:]}")
    t2 = _intervals_or_raise(stream_l2)
    r, ref, _ = nonuniformity_from_intervals(t2, l2, ld_map, literal)
    return NonuniformityMap(r, reference=ref)


def calibrate(dark_stream, lit1_stream, l1, lit2_stream, l2, literal: bool = False) -> CalibrationRecord:
    """Full two-scene calibration: dark current from (dark, L1), nonuniformity from L2."""
    t_d = _intervals_or_raise(dark_stream)
    t1 = _intervals_or_raise(lit1_stream)
    if lit2_stream.shape[1:] != dark_stream.shape[1:] or lit1_stream.shape[1:] != dark_stream.shape[1:]:
        raise DimensionMismatch("calibration streams differ in size")
    ld_map = dark_from_intervals(t_d, t1, l1)
    t2 = _intervals_or_raise(lit2_stream)
    r, ref, response = nonuniformity_from_intervals(t2, l2, ld_map, literal)
    return CalibrationRecord(
        l1=float(l1), l2=float(l2), t_d=t_d, t1=t1, t2_map=t2, ld_map=ld_map,
        nonuniformity=NonuniformityMap(r, reference=ref),
        theta_ref=float(response[ref[1], ref[0]]), literal=literal,
    )


def capture_calibration_set(model: SpikeCameraModel, l1: float, l2: float, steps: int, seed=0):
    """Simulate the dark, L1 and L2 uniform captures used by :func:`calibrate`."""
    ss = np.random.SeedSequence(seed)
    s_dark, s1, s2 = (int(c.generate_state(1)[0]) for c in ss.spawn(3))
    zeros = np.zeros(model.shape)
    dark = simulate_stream(zeros, model, steps, seed=s_dark)
    lit1 = simulate_stream(zeros + l1, model, steps, seed=s1)
    lit2 = simulate_stream(zeros + l2, model, steps, seed=s2)
    return dark, lit1, lit2
