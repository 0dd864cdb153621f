"""Alpha-compositing volume renderer and ray sample placement."""

from __future__ import annotations

import numpy as np

from ..errors import CacheMismatch, NegativeDensity

PDF_FLOOR = 1e-5


def volume_render(sigma, c, delta):
    """Composite samples along rays.

    ``sigma`` and ``delta`` have shape (..., N); ``c`` has shape (..., N, ch) or
    (..., N) for a single channel.  Returns ``(C, weights, cache)`` with
    ``weights[i] = T_i * (1 - exp(-sigma_i * delta_i))``.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    squeeze = c.shape == sigma.shape
    if squeeze:
        c = c[..., None]
    if np.any(sigma < 0):
        raise NegativeDensity("densities must be non-negative")
    if np.any(delta < 0):
        raise ValueError("sample spacings must be non-negative")
    tau = sigma * delta
    acc = np.cumsum(tau, axis=-1)
    trans = np.exp(-(acc - tau))       # transmittance before each sample
    trans_after = np.exp(-acc)
    alpha = -np.expm1(-tau)
    w = trans * alpha
    C = np.einsum("...n,...nc->...c", w, c)
    cache = dict(sigma=sigma, delta=delta, c=c, w=w, trans_after=trans_after, squeeze=squeeze)
    if squeeze:
        C = C[..., 0]
    return C, w, cache


def volume_render_backward(cache, grad_C):
    """Gradients of the composite w.r.t. every density and colour sample.

    dC/dc_i = w_i and
    dC/dsigma_k = delta_k * (T_{k+1} c_k - sum_{i>k} w_i c_i).
    """
    c, w = cache["c"], cache["w"]
    grad_C = np.asarray(grad_C, dtype=np.float64)
    if cache["squeeze"]:
        grad_C = grad_C[..., None]
    if grad_C.shape != c.shape[:-2] + c.shape[-1:]:
        raise CacheMismatch(f"grad of shape {grad_C.shape} does not match the rendered output")
    gc = np.einsum("...nc,...c->...n", c, grad_C)
    wgc = w * gc
    after = wgc.sum(axis=-1, keepdims=True) - np.cumsum(wgc, axis=-1)
    grad_sigma = cache["delta"] * (cache["trans_after"] * gc - after)
    grad_c = w[..., None] * grad_C[..., None, :]
    if cache["squeeze"]:
        grad_c = grad_c[..., 0]
    return grad_sigma, grad_c


def _deltas(depths, far):
    far = np.broadcast_to(np.asarray(far, dtype=np.float64), depths.shape[:-1])
    last = far[..., None] - depths[..., -1:]
    return np.concatenate([np.diff(depths, axis=-1), last], axis=-1)


def stratified_samples(near, far, n: int, rng=None, batch: int | None = None):
    """One depth per equal-width bin of [near, far).

    ``near``/``far`` are scalars or (B,) arrays.  With ``rng=None`` the bin
    midpoints are used (deterministic test-time sampling).  Returns
    ``(depths, deltas, edges)`` with shapes (B, n), (B, n), (B, n+1); the last
    delta runs to ``far``.
    """
    if n < 2:
        raise ValueError("need at least 2 coarse samples")
    near = np.asarray(near, dtype=np.float64)
    far = np.asarray(far, dtype=np.float64)
    b = batch if batch is not None else max(near.size, far.size)
    near_b = np.broadcast_to(near, (b,))[:, None]
    far_b = np.broadcast_to(far, (b,))[:, None]
    frac = np.linspace(0.0, 1.0, n + 1)
    edges = near_b + (far_b - near_b) * frac
    u = np.full((b, n), 0.5) if rng is None else rng.random((b, n))
    depths = edges[:, :-1] + (edges[:, 1:] - edges[:, :-1]) * u
    return depths, _deltas(depths, far_b[:, 0]), edges


def hierarchical_sample(weights, edges, n_fine: int, rng=None):
    """Inverse-CDF draws from the piecewise-constant PDF given by ``weights``.

    ``weights`` is (B, n) over the bins delimited by ``edges`` (B, n+1).  A
    floor of 1e-5 is added to every bin, so all-zero weights degrade to uniform
    sampling.  With ``rng=None`` the quantiles ``(i + 0.5) / n_fine`` are used.
    Returns sorted depths of shape (B, n_fine).
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    edges = np.atleast_2d(np.asarray(edges, dtype=np.float64))
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    b, n = weights.shape
    edges = np.broadcast_to(edges, (b, n + 1))
    pdf = weights + PDF_FLOOR
    pdf = pdf / pdf.sum(axis=1, keepdims=True)
    cdf = np.concatenate([np.zeros((b, 1)), np.cumsum(pdf, axis=1)], axis=1)
    cdf[:, -1] = 1.0
    if rng is None:
        u = np.broadcast_to((np.arange(n_fine) + 0.5) / n_fine, (b, n_fine))
    else:
        u = np.sort(rng.random((b, n_fine)), axis=1)
    # row-wise searchsorted: offset each row into its own disjoint range
    offset = 2.0 * np.arange(b)[:, None]
    idx = np.searchsorted((cdf + offset).ravel(), (u + offset).ravel(), side="right").reshape(b, n_fine)
    idx = idx - (n + 1) * np.arange(b)[:, None]
    bin_ = np.clip(idx - 1, 0, n - 1)
    rows = np.arange(b)[:, None]
    c0 = cdf[rows, bin_]
    p = pdf[rows, bin_]
    frac = np.clip((u - c0) / p, 0.0, 1.0)
    lo = edges[rows, bin_]
    hi = edges[rows, bin_ + 1]
    return np.sort(lo + frac * (hi - lo), axis=1)


def merge_samples(coarse, fine, far):
    """Sorted union of coarse and fine depths with matching deltas."""
    depths = np.sort(np.concatenate([coarse, fine], axis=-1), axis=-1)
    return depths, _deltas(depths, far)
