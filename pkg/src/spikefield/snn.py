"""Differentiable integrate-and-fire layer and the long-term spike rendering loss.

The layer turns a rendered ray intensity into a spike count over ``steps``
ticks.  The forward pass is an exact IF simulation (bit-compatible with
:func:`spikefield.sim.simulate_stream` in the noiseless case); the backward
pass unrolls the dynamics and replaces dS/dV by the constant ``1 / v_th``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeIntensity, TraceMismatch
from .sim import ResetMode


@dataclass(frozen=True)
class IFLayerConfig:
    v_th: float = 1.0
    steps: int = 256
    reset_mode: ResetMode = ResetMode.SUBTRACT
    detach_reset: bool = True
    # multiply the summed count by r instead of scaling the threshold
    literal_scale_output: bool = False

    def __post_init__(self):
        if not self.v_th > 0:
            raise ValueError("v_th must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        object.__setattr__(self, "reset_mode", ResetMode.parse(self.reset_mode))

    @property
    def surrogate_scale(self) -> float:
        return 1.0 / self.v_th


@dataclass
class IFTrace:
    """Unrolled state of a batch of IF neurons.

    ``v`` holds the potential after charging and before reset at every step,
    ``s`` the emitted spikes; both have shape (rays, steps).
    """

    inputs: np.ndarray
    v: np.ndarray
    s: np.ndarray
    theta_eff: np.ndarray
    r: np.ndarray
    cfg: IFLayerConfig

    @property
    def counts(self) -> np.ndarray:
        return self.s.sum(axis=1)


def if_forward(intensity, r=1.0, cfg: IFLayerConfig = IFLayerConfig(), inputs=None):
    """Run ``cfg.steps`` ticks of IF dynamics for each ray.

    ``intensity`` is a scalar or a (rays,) array fed as a constant input at
    every step.  ``inputs`` optionally overrides it with an explicit per-step
    sequence of shape (steps,) or (rays, steps); this varying-input mode is
    meant for tests.  Returns ``(count, trace)`` where count is r-scaled (and
    hence real-valued) when ``cfg.literal_scale_output`` is set.
    """
    scalar = np.ndim(intensity) == 0 and (inputs is None or np.ndim(inputs) == 1)
    T = cfg.steps
    if inputs is None:
        x = np.atleast_1d(np.asarray(intensity, dtype=np.float64))
        ticks = np.arange(1, T + 1, dtype=np.float64)
        charge = x[:, None] * ticks[None, :]
        inputs_arr = np.broadcast_to(x[:, None], charge.shape)
    else:
        inputs_arr = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if inputs_arr.shape[1] != T:
            raise TraceMismatch(f"{inputs_arr.shape[1]} inputs for a {T}-step layer")
        charge = np.cumsum(inputs_arr, axis=1)
    if np.any(inputs_arr < 0):
        raise NegativeIntensity("IF layer input must be non-negative")
    n = charge.shape[0]
    r_arr = np.broadcast_to(np.asarray(r, dtype=np.float64), (n,)).copy()
    if np.any(r_arr <= 0):
        raise ValueError("nonuniformity must be positive")
    theta_eff = cfg.v_th if cfg.literal_scale_output else cfg.v_th * r_arr
    theta_eff = np.broadcast_to(np.asarray(theta_eff, dtype=np.float64), (n,)).copy()

    v = np.empty_like(charge)
    s = np.zeros_like(charge)
    fired = np.zeros(n)
    last_reset = np.zeros(n)
    subtract = cfg.reset_mode is ResetMode.SUBTRACT
    for t in range(T):
        q = charge[:, t]
        if subtract:
            # potential = charge - fired * theta; compare in threshold units
            spike = q / theta_eff >= fired + 1
            v[:, t] = q - fired * theta_eff
        else:
            v[:, t] = q - last_reset
            spike = v[:, t] >= theta_eff
            last_reset = np.where(spike, q, last_reset)
        s[:, t] = spike
        fired += spike

    trace = IFTrace(np.array(inputs_arr), v, s, theta_eff, r_arr, cfg)
    count = trace.counts
    count = count * r_arr if cfg.literal_scale_output else count.astype(np.int64)
    if scalar:
        return count[0].item(), trace
    return count, trace


def count_gradient(trace: IFTrace) -> np.ndarray:
    """d(count)/d(intensity) per ray via BPTT with the constant surrogate."""
    cfg = trace.cfg
    T = cfg.steps
    if trace.s.shape[1] != T or trace.v.shape != trace.s.shape:
        raise TraceMismatch(f"trace with {trace.s.shape[1]} steps does not match a {T}-step config")
    h = cfg.surrogate_scale
    subtract = cfg.reset_mode is ResetMode.SUBTRACT
    n = trace.s.shape[0]
    if subtract and cfg.detach_reset:
        grad = np.full(n, T * (T + 1) / 2 * h)
    else:
        grad = np.zeros(n)
        du = np.zeros(n)  # d(post-reset potential)/dX
        for t in range(T):
            dv = du + 1.0
            ds = h * dv
            grad += ds
            if subtract:
                du = dv - trace.theta_eff * ds
            else:
                keep = 1.0 - trace.s[:, t]
                du = dv * keep
                if not cfg.detach_reset:
                    du = du - trace.v[:, t] * ds
    if cfg.literal_scale_output:
        grad = grad * trace.r
    return grad


def if_backward(trace: IFTrace, upstream_grad):
    """Gradient of the loss w.r.t. the ray intensity given d(loss)/d(count)."""
    g = count_gradient(trace)
    out = np.asarray(upstream_grad, dtype=np.float64) * g
    return out.item() if out.size == 1 and np.ndim(upstream_grad) == 0 else out


def spike_render_loss(rendered_intensity, observed_counts, r=1.0, cfg: IFLayerConfig = IFLayerConfig()):
    """Squared spike-count mismatch ``(generated - observed)**2`` per ray.

    Returns ``(loss, grad)`` with grad the derivative w.r.t. the rendered
    intensity (``2 * D * d(count)/dI``).
    """
    rendered = np.asarray(rendered_intensity, dtype=np.float64)
    if np.any(rendered < 0) or not np.all(np.isfinite(rendered)):
        raise NegativeIntensity("rendered intensity must be non-negative and finite")
    count, trace = if_forward(np.atleast_1d(rendered), r, cfg)
    d = count - np.atleast_1d(np.asarray(observed_counts, dtype=np.float64))
    loss = d * d
    grad = 2.0 * d * count_gradient(trace)
    if rendered.ndim == 0:
        return loss[0].item(), grad[0].item()
    return loss, grad
