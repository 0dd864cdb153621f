"""Radiance-field optimisation from spike streams.

Each iteration samples a batch of (view, pixel) rays from the training views,
renders them with a coarse and a fine network, scores both renders against
the pixel's supervision and takes one Adam step on each network.  The
supervision depends on ``TrainConfig.loss_mode``:

``spike``    squared difference between the IF layer's spike count for the
             rendered intensity plus the pixel's calibrated dark current
             (threshold ``v_th * R`` of that pixel) and the observed count
             over the stream
``tfi``      squared error against the TFI reconstruction of the view
``tfi_r``    as ``tfi`` with the reconstruction multiplied by R, less the
             dark current
``tfp``      squared error against TFP with window ``tfp_window``
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .errors import DatasetEmpty, NonFiniteLoss, ShapeMismatch
from .field.encoding import EncodingConfig
from .field.mlp import FieldConfig, RadianceFieldParams, field_backward, field_forward
from .field.rays import Camera, camera_rays
from .field.render import hierarchical_sample, merge_samples, stratified_samples, volume_render, \
    volume_render_backward
from .metrics import psnr, ssim
from .recon import tfi, tfp
from .scenegen import SceneDataset, parse_kv
from .snn import IFLayerConfig, spike_render_loss
from .sim import ResetMode

log = logging.getLogger(__name__)


class LossMode(str, enum.Enum):
    SPIKE = "spike"
    TFI = "tfi"
    TFI_CORRECTED = "tfi_r"
    TFP = "tfp"

    @classmethod
    def parse(cls, value) -> "LossMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"spike": cls.SPIKE, "spikerender": cls.SPIKE, "spike_render": cls.SPIKE,
                   "tfi": cls.TFI, "intensitymse_tfi": cls.TFI,
                   "tfi_r": cls.TFI_CORRECTED, "tfi_corrected": cls.TFI_CORRECTED,
                   "tfp": cls.TFP, "intensitymse_tfp": cls.TFP}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown loss mode {value!r}") from None


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_rays: int = 1024
    n_coarse: int = 32
    n_fine: int = 64
    lr_start: float = 5e-4
    lr_end: float = 5e-5
    seed: int = 0
    loss_mode: LossMode = LossMode.SPIKE
    tfp_window: int = 32
    eval_every: int = 0
    # IF layer; v_th and steps of None are taken from the dataset
    snn_v_th: float | None = None
    snn_steps: int | None = None
    snn_reset: ResetMode = ResetMode.SUBTRACT
    snn_detach_reset: bool = True
    snn_literal_scale_output: bool = False
    # add the dataset's calibrated dark current to the IF input (spike mode)
    # and remove it from the corrected TFI target (tfi_r mode)
    snn_dark_input: bool = True
    # network
    m_pos: int = 10
    m_dir: int = 4
    depth: int = 4
    width: int = 96
    skip: int = 3
    channels: int = 1
    density_bias: float = -1.0

    def __post_init__(self):
        if not self.lr_start >= self.lr_end > 0:
            raise ValueError("need lr_start >= lr_end > 0")
        if self.batch_rays < 1 or self.iterations < 0:
            raise ValueError("batch_rays must be >= 1 and iterations >= 0")
        object.__setattr__(self, "loss_mode", LossMode.parse(self.loss_mode))
        object.__setattr__(self, "snn_reset", ResetMode.parse(self.snn_reset))

    @property
    def field(self) -> FieldConfig:
        return FieldConfig(EncodingConfig(self.m_pos, self.m_dir), self.depth, self.width, self.skip, self.channels)

    def snn(self, dataset: SceneDataset | None = None) -> IFLayerConfig:
        v_th = self.snn_v_th if self.snn_v_th is not None else (dataset.theta if dataset else 1.0)
        steps = self.snn_steps if self.snn_steps is not None else (dataset.steps if dataset else 256)
        return IFLayerConfig(v_th, steps, self.snn_reset, self.snn_detach_reset, self.snn_literal_scale_output)

    def lr(self, iteration: int) -> float:
        """Exponential decay from lr_start at 0 to lr_end at ``iterations``."""
        if self.iterations == 0:
            return self.lr_start
        return self.lr_start * (self.lr_end / self.lr_start) ** (iteration / self.iterations)

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


_CONFIG_ALIASES = {
    "snn.v_th": "snn_v_th", "snn.steps": "snn_steps", "snn.reset": "snn_reset",
    "snn.detach_reset": "snn_detach_reset", "snn.literal_scale_output": "snn_literal_scale_output",
    "snn.dark_input": "snn_dark_input",
    "field.m_pos": "m_pos", "field.m_dir": "m_dir", "field.depth": "depth", "field.width": "width",
    "field.skip": "skip", "field.channels": "channels", "field.density_bias": "density_bias",
}


def _convert(name, raw: str):
    ftype = {f.name: f.type for f in fields(TrainConfig)}[name]
    if raw.lower() in ("auto", "none", "") and "None" in str(ftype):
        return None
    if "bool" in str(ftype):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: not a boolean: {raw!r}")
    if "int" in str(ftype) and "float" not in str(ftype):
        return int(raw)
    if "float" in str(ftype):
        return float(raw)
    return raw


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Build a TrainConfig from ``key = value`` text (``#`` comments allowed)."""
    kv = parse_kv(text)
    names = {f.name for f in fields(TrainConfig)}
    changes = {}
    for key, raw in kv.items():
        name = _CONFIG_ALIASES.get(key, key)
        if name not in names:
            raise ValueError(f"unknown config key {key!r}")
        changes[name] = _convert(name, raw)
    return replace(base or TrainConfig(), **changes)


def dump_config(cfg: TrainConfig) -> str:
    inverse = {v: k for k, v in _CONFIG_ALIASES.items()}
    lines = []
    for key, value in asdict(cfg).items():
        if isinstance(value, enum.Enum):
            value = value.value
        lines.append(f"{inverse.get(key, key)} = {'auto' if value is None else value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    if params.keys() != grads.keys():
        raise ShapeMismatch("parameter and gradient names differ")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{k}: gradient {g.shape} vs parameter {p.shape}")
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _eval_field(params, pts, dirs):
    b, n, _ = pts.shape
    d = np.broadcast_to(dirs[:, None, :], pts.shape)
    sigma, c, cache = field_forward(params, pts.reshape(-1, 3), d.reshape(-1, 3))
    return sigma.reshape(b, n), c.reshape(b, n, -1), cache


def render_rays(coarse, fine, origins, dirs, near, far, n_coarse, n_fine, rng=None, keep=False):
    """Render a batch of rays with both networks.

    Returns the coarse and fine composites (B, ch) and, with ``keep``, the
    caches needed by :func:`backprop_rays`.  ``rng=None`` gives deterministic
    midpoint / quantile sampling.
    """
    b = len(origins)
    depths, deltas, edges = stratified_samples(near, far, n_coarse, rng, batch=b)
    pts = origins[:, None, :] + depths[..., None] * dirs[:, None, :]
    sig_c, col_c, fcache_c = _eval_field(coarse, pts, dirs)
    C_c, w_c, vcache_c = volume_render(sig_c, col_c, deltas)

    fine_depths = hierarchical_sample(w_c, edges, n_fine, rng)
    all_depths, all_deltas = merge_samples(depths, fine_depths, far)
    pts_f = origins[:, None, :] + all_depths[..., None] * dirs[:, None, :]
    sig_f, col_f, fcache_f = _eval_field(fine, pts_f, dirs)
    C_f, w_f, vcache_f = volume_render(sig_f, col_f, all_deltas)
    if keep:
        return C_c, C_f, (fcache_c, vcache_c, fcache_f, vcache_f)
    return C_c, C_f


def backprop_rays(coarse, fine, caches, grad_Cc, grad_Cf):
    fcache_c, vcache_c, fcache_f, vcache_f = caches
    out = []
    for params, fcache, vcache, g in ((coarse, fcache_c, vcache_c, grad_Cc), (fine, fcache_f, vcache_f, grad_Cf)):
        gs, gc = volume_render_backward(vcache, g)
        grads, _ = field_backward(params, fcache, gs.reshape(-1), gc.reshape(-1, gc.shape[-1]))
        out.append(grads)
    return out


def render_view(coarse, fine, cam: Camera, cfg: TrainConfig, near: float, far: float, chunk: int = 4096):
    """Full-image fine render (channel 0) with deterministic sampling."""
    origins, dirs = camera_rays(cam)
    out = np.empty(len(origins))
    for s in range(0, len(origins), chunk):
        _, C_f = render_rays(coarse, fine, origins[s:s + chunk], dirs[s:s + chunk], near, far,
                             cfg.n_coarse, cfg.n_fine, rng=None)
        out[s:s + chunk] = C_f[:, 0]
    return out.reshape(cam.height, cam.width)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainLog:
    iteration: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    eval_iteration: list = field(default_factory=list)
    eval_psnr: list = field(default_factory=list)

    def moving_average(self, window: int = 100) -> np.ndarray:
        x = np.asarray(self.loss, dtype=np.float64)
        if len(x) < window:
            return np.array([x.mean()]) if len(x) else x
        c = np.cumsum(np.concatenate([[0.0], x]))
        return (c[window:] - c[:-window]) / window


def supervision_targets(dataset: SceneDataset, cfg: TrainConfig, views) -> np.ndarray:
    """Per-view, per-pixel (flattened) target for the chosen loss mode."""
    snn = cfg.snn(dataset)
    mode = cfg.loss_mode
    out = []
    for i in views:
        s = dataset.spikes[i]
        if mode is LossMode.SPIKE:
            if snn.steps > s.steps:
                raise ValueError(f"snn.steps={snn.steps} exceeds the stream length {s.steps}")
            tgt = s.counts(0, snn.steps).astype(np.float64)
        elif mode in (LossMode.TFI, LossMode.TFI_CORRECTED):
            tgt = tfi(s, s.steps // 2, dataset.theta)
            if mode is LossMode.TFI_CORRECTED:
                tgt = tgt * dataset.nonuniformity.r - _dark(dataset, cfg)
        else:
            tgt = tfp(s, s.steps // 2, cfg.tfp_window, dataset.theta)
        out.append(tgt.ravel())
    return np.stack(out)


def _dark(dataset: SceneDataset, cfg: TrainConfig):
    if cfg.snn_dark_input and dataset.dark_current is not None:
        return np.asarray(dataset.dark_current, dtype=np.float64)
    return np.zeros((dataset.height, dataset.width))


def ray_loss(cfg: TrainConfig, snn: IFLayerConfig, rendered, target, r, dark=0.0):
    """Per-ray loss and d(loss)/d(rendered) for one network's render.

    ``dark`` is added to the IF input only; it shifts the count, not the slope.
    """
    if cfg.loss_mode is LossMode.SPIKE:
        return spike_render_loss(rendered + dark, target, r, snn)
    d = rendered - target
    return d * d, 2.0 * d


def evaluate(coarse, fine, dataset: SceneDataset, cfg: TrainConfig, views=None):
    """Per-view PSNR/SSIM of fine renders against ground truth (full image and object mask)."""
    views = dataset.indices("test") if views is None else views
    rows = []
    for i in views:
        img = render_view(coarse, fine, dataset.cameras[i], cfg, dataset.near, dataset.far)
        gt = dataset.gt_images[i]
        mask = gt > 0
        rows.append(dict(
            view=i,
            psnr_full=psnr(img, gt, dataset.peak),
            psnr_obj=psnr(img, gt, dataset.peak, mask=mask),
            ssim_full=ssim(img, gt, dataset.peak),
            ssim_obj=ssim(img, gt, dataset.peak, mask=mask),
        ))
    return rows


def train(dataset: SceneDataset, cfg: TrainConfig, progress=None):
    """Optimise coarse and fine networks; returns ``(coarse, fine, log)``."""
    train_views = dataset.indices("train")
    if not train_views:
        raise DatasetEmpty("dataset has no training views")
    rng = np.random.default_rng(cfg.seed)
    fcfg = cfg.field
    coarse = RadianceFieldParams.init(fcfg, rng, cfg.density_bias)
    fine = RadianceFieldParams.init(fcfg, rng, cfg.density_bias)
    opt_c, opt_f = AdamState(), AdamState()
    snn = cfg.snn(dataset)

    targets = supervision_targets(dataset, cfg, train_views)
    r_flat = dataset.nonuniformity.r.ravel()
    dark_flat = _dark(dataset, cfg).ravel()
    rays = [camera_rays(dataset.cameras[i]) for i in train_views]
    origins = np.stack([o for o, _ in rays])
    dirs = np.stack([d for _, d in rays])
    n_views, n_pix = targets.shape
    tlog = TrainLog()

    for it in range(cfg.iterations):
        vi = rng.integers(0, n_views, cfg.batch_rays)
        pi = rng.integers(0, n_pix, cfg.batch_rays)
        C_c, C_f, caches = render_rays(coarse, fine, origins[vi, pi], dirs[vi, pi], dataset.near, dataset.far,
                                       cfg.n_coarse, cfg.n_fine, rng=rng, keep=True)
        tgt, r, dk = targets[vi, pi], r_flat[pi], dark_flat[pi]
        loss_c, g_c = ray_loss(cfg, snn, C_c[:, 0], tgt, r, dk)
        loss_f, g_f = ray_loss(cfg, snn, C_f[:, 0], tgt, r, dk)
        per_ray = loss_c + loss_f
        loss = float(per_ray.mean())
        if not math.isfinite(loss):
            bad = int(np.flatnonzero(~np.isfinite(per_ray))[0])
            raise NonFiniteLoss(
                f"non-finite loss at iteration {it}",
                dict(iteration=it, view=int(train_views[vi[bad]]), pixel=int(pi[bad]),
                     coarse=float(C_c[bad, 0]), fine=float(C_f[bad, 0]), target=float(tgt[bad])),
            )
        scale = 1.0 / cfg.batch_rays
        grad_c = np.zeros_like(C_c)
        grad_f = np.zeros_like(C_f)
        grad_c[:, 0] = g_c * scale
        grad_f[:, 0] = g_f * scale
        gc, gf = backprop_rays(coarse, fine, caches, grad_c, grad_f)
        lr = cfg.lr(it)
        adam_step(coarse.arrays, gc, opt_c, lr)
        adam_step(fine.arrays, gf, opt_f, lr)
        tlog.iteration.append(it + 1)
        tlog.loss.append(loss)
        tlog.lr.append(lr)
        if cfg.eval_every and ((it + 1) % cfg.eval_every == 0 or it + 1 == cfg.iterations):
            rows = evaluate(coarse, fine, dataset, cfg)
            if rows:
                tlog.eval_iteration.append(it + 1)
                tlog.eval_psnr.append(float(np.mean([r_["psnr_full"] for r_ in rows])))
                log.info("iter %d loss %.4g test psnr %.2f", it + 1, loss, tlog.eval_psnr[-1])
        if progress is not None:
            progress(it + 1, loss)
    return coarse, fine, tlog
