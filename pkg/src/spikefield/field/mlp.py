"""Radiance field MLP with a hand-written reverse pass, plus checkpoint I/O.

Architecture (defaults in brackets)::

    gamma(pos) -> [depth=4] ReLU layers of [width=96]; gamma(pos) is concatenated
    back in before layer [skip=3] (1-based)
    -> sigma = softplus(linear)                      density, >= 0
    -> feature = linear(h); concat gamma(dir) -> ReLU(width // 2)
    -> c = sigmoid(linear)                           [channels=1]

Weights are stored as (fan_in, fan_out) so a layer computes ``x @ W + b``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import BadMagic, CacheMismatch, DimensionMismatch, TruncatedPayload
from .encoding import EncodingConfig, positional_encode

NRF_MAGIC = b"NRF1"
_CONFIG = struct.Struct("<4s8I")


@dataclass(frozen=True)
class FieldConfig:
    enc: EncodingConfig = field(default_factory=EncodingConfig)
    depth: int = 4
    width: int = 96
    skip: int = 3
    channels: int = 1
    color_hidden: int = 0  # 0 means width // 2

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.channels < 1:
            raise ValueError("depth, width and channels must be >= 1")
        if not 0 <= self.skip <= self.depth:
            raise ValueError("skip must name a hidden layer (1-based) or be 0 for none")
        if not self.color_hidden:
            object.__setattr__(self, "color_hidden", max(self.width // 2, 1))

    @property
    def hidden_color(self) -> int:
        return self.color_hidden

    def layer_shapes(self) -> list[tuple[str, tuple[int, int]]]:
        """(name, (fan_in, fan_out)) for every dense layer in declared order."""
        pd, dd, w = self.enc.pos_dim, self.enc.dir_dim, self.width
        shapes = []
        for i in range(self.depth):
            fan_in = pd if i == 0 else w
            if self.skip and i == self.skip - 1 and i > 0:
                fan_in += pd
            shapes.append((f"h{i}", (fan_in, w)))
        shapes += [
            ("sigma", (w, 1)),
            ("feat", (w, w)),
            ("dir", (w + dd, self.hidden_color)),
            ("color", (self.hidden_color, self.channels)),
        ]
        return shapes


class RadianceFieldParams:
    """Ordered mapping of parameter name -> float64 array for one network.

    Names are ``<layer>.W`` and ``<layer>.b``; iteration order matches the
    checkpoint layout.
    """

    def __init__(self, cfg: FieldConfig, arrays: dict[str, np.ndarray]):
        self.cfg = cfg
        self.arrays = {}
        for name, (fi, fo) in cfg.layer_shapes():
            W = np.asarray(arrays[f"{name}.W"], dtype=np.float64)
            b = np.asarray(arrays[f"{name}.b"], dtype=np.float64)
            if W.shape != (fi, fo) or b.shape != (fo,):
                raise DimensionMismatch(f"layer {name}: got {W.shape}/{b.shape}, expected {(fi, fo)}/{(fo,)}")
            self.arrays[f"{name}.W"] = W
            self.arrays[f"{name}.b"] = b

    @classmethod
    def init(cls, cfg: FieldConfig, rng, density_bias: float = -1.0) -> "RadianceFieldParams":
        """Glorot-uniform weights, zero biases, density bias set to ``density_bias``."""
        arrays = {}
        for name, (fi, fo) in cfg.layer_shapes():
            limit = np.sqrt(6.0 / (fi + fo))
            arrays[f"{name}.W"] = rng.uniform(-limit, limit, size=(fi, fo))
            arrays[f"{name}.b"] = np.zeros(fo)
        arrays["sigma.b"][:] = density_bias
        return cls(cfg, arrays)

    @classmethod
    def zeros(cls, cfg: FieldConfig) -> "RadianceFieldParams":
        return cls(cfg, {
            k: np.zeros(s) for name, (fi, fo) in cfg.layer_shapes()
            for k, s in ((f"{name}.W", (fi, fo)), (f"{name}.b", (fo,)))
        })

    def __getitem__(self, key):
        return self.arrays[key]

    def __iter__(self):
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self) -> "RadianceFieldParams":
        return RadianceFieldParams(self.cfg, {k: v.copy() for k, v in self.arrays.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    def __eq__(self, other):
        if not isinstance(other, RadianceFieldParams):
            return NotImplemented
        return self.cfg == other.cfg and all(np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items())


def softplus(x):
    return np.logaddexp(0.0, x)


def field_forward(params: RadianceFieldParams, pos, dirs, enc: EncodingConfig | None = None):
    """Evaluate the field at N points.

    ``pos`` and ``dirs`` are (N, 3) (a single 3-vector is accepted too).
    Returns ``(sigma (N,), c (N, channels), cache)``.
    """
    cfg = params.cfg
    enc = cfg.enc if enc is None else enc
    if enc != cfg.enc:
        raise DimensionMismatch(f"encoding {enc} does not match the parameters' {cfg.enc}")
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    if pos.shape[-1] != 3 or dirs.shape != pos.shape:
        raise DimensionMismatch(f"expected matching (N, 3) positions and directions, got {pos.shape}, {dirs.shape}")
    p = params.arrays
    xp = positional_encode(pos, enc.m_pos, enc.include_input)
    xd = positional_encode(dirs, enc.m_dir, enc.include_input)

    inputs, pre = [], []
    h = xp
    for i in range(cfg.depth):
        if cfg.skip and i == cfg.skip - 1 and i > 0:
            h = np.concatenate([h, xp], axis=1)
        inputs.append(h)
        z = h @ p[f"h{i}.W"] + p[f"h{i}.b"]
        pre.append(z)
        h = np.maximum(z, 0.0)
    z_sigma = (h @ p["sigma.W"] + p["sigma.b"])[:, 0]
    sigma = softplus(z_sigma)
    feat = h @ p["feat.W"] + p["feat.b"]
    u = np.concatenate([feat, xd], axis=1)
    z_dir = u @ p["dir.W"] + p["dir.b"]
    a_dir = np.maximum(z_dir, 0.0)
    c = expit(a_dir @ p["color.W"] + p["color.b"])
    cache = dict(n=pos.shape[0], cfg=cfg, inputs=inputs, pre=pre, h=h, z_sigma=z_sigma,
                 u=u, z_dir=z_dir, a_dir=a_dir, c=c, xp_dim=xp.shape[1])
    return sigma, c, cache


def field_backward(params: RadianceFieldParams, cache, grad_sigma, grad_c):
    """Reverse pass; returns ``(param_grads, input_grads)``.

    ``param_grads`` maps every parameter name to an array of its shape, summed
    over the N points.  ``input_grads`` has the gradients w.r.t. the encoded
    position and direction features.
    """
    cfg = params.cfg
    if cache.get("cfg") != cfg:
        raise CacheMismatch("cache was produced by a network with a different configuration")
    n = cache["n"]
    grad_sigma = np.asarray(grad_sigma, dtype=np.float64).reshape(n)
    grad_c = np.asarray(grad_c, dtype=np.float64).reshape(n, cfg.channels)
    p = params.arrays
    g = {}

    c = cache["c"]
    dz_c = grad_c * c * (1.0 - c)
    g["color.W"] = cache["a_dir"].T @ dz_c
    g["color.b"] = dz_c.sum(axis=0)
    dz_dir = (dz_c @ p["color.W"].T) * (cache["z_dir"] > 0)
    g["dir.W"] = cache["u"].T @ dz_dir
    g["dir.b"] = dz_dir.sum(axis=0)
    du = dz_dir @ p["dir.W"].T
    w = cfg.width
    dfeat, dxd = du[:, :w], du[:, w:]
    h = cache["h"]
    g["feat.W"] = h.T @ dfeat
    g["feat.b"] = dfeat.sum(axis=0)
    dh = dfeat @ p["feat.W"].T

    dz_sigma = (grad_sigma * expit(cache["z_sigma"]))[:, None]
    g["sigma.W"] = h.T @ dz_sigma
    g["sigma.b"] = dz_sigma.sum(axis=0)
    dh = dh + dz_sigma @ p["sigma.W"].T

    dxp = np.zeros((n, cache["xp_dim"]))
    for i in reversed(range(cfg.depth)):
        dz = dh * (cache["pre"][i] > 0)
        g[f"h{i}.W"] = cache["inputs"][i].T @ dz
        g[f"h{i}.b"] = dz.sum(axis=0)
        dx = dz @ p[f"h{i}.W"].T
        if cfg.skip and i == cfg.skip - 1 and i > 0:
            dxp += dx[:, w:]
            dx = dx[:, :w]
        if i == 0:
            dxp += dx
        dh = dx

    ordered = {k: g[k] for k in params.arrays}
    return ordered, {"pos": dxp, "dir": dxd}


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _pack_one(params: RadianceFieldParams) -> bytes:
    cfg = params.cfg
    header = _CONFIG.pack(
        NRF_MAGIC, cfg.enc.m_pos, cfg.enc.m_dir, int(cfg.enc.include_input),
        cfg.depth, cfg.width, cfg.skip, cfg.channels, cfg.hidden_color,
    )
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in params.arrays.values())
    return header + body


def encode_checkpoint(nets) -> bytes:
    if isinstance(nets, RadianceFieldParams):
        nets = [nets]
    return b"".join(_pack_one(n) for n in nets)


def decode_checkpoint(data: bytes) -> list[RadianceFieldParams]:
    nets, off = [], 0
    while off < len(data):
        if data[off:off + 4] != NRF_MAGIC:
            raise BadMagic(f"expected {NRF_MAGIC!r} at offset {off}")
        if len(data) - off < _CONFIG.size:
            raise TruncatedPayload("checkpoint header truncated")
        _, m_pos, m_dir, inc, depth, width, skip, ch, hid = _CONFIG.unpack_from(data, off)
        off += _CONFIG.size
        cfg = FieldConfig(EncodingConfig(m_pos, m_dir, bool(inc)), depth, width, skip, ch, hid)
        arrays = {}
        for name, (fi, fo) in cfg.layer_shapes():
            for key, shape in ((f"{name}.W", (fi, fo)), (f"{name}.b", (fo,))):
                nbytes = 8 * int(np.prod(shape))
                if len(data) - off < nbytes:
                    raise TruncatedPayload(f"checkpoint truncated inside {key}")
                arrays[key] = np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=off).reshape(shape).copy()
                off += nbytes
        nets.append(RadianceFieldParams(cfg, arrays))
    if not nets:
        raise TruncatedPayload("empty checkpoint")
    return nets


def save_checkpoint(path, nets) -> int:
    data = encode_checkpoint(nets)
    with open(os.fspath(path), "wb") as fh:
        fh.write(data)
    return len(data)


def load_checkpoint(path) -> list[RadianceFieldParams]:
    with open(os.fspath(path), "rb") as fh:
        return decode_checkpoint(fh.read())
