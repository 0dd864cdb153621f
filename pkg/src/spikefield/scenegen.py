"""Procedural analytic scenes, pose rings and on-disk spike datasets.

A scene is a handful of Lambertian spheres and axis-aligned boxes lit by one
directional light on a black background.  :func:`build_dataset` renders a
ground-truth intensity image per camera, turns it into a spike stream with a
:class:`~spikefield.sim.SpikeCameraModel` and writes the directory layout::

    manifest.txt          key = value lines (dims, steps, split, poses, hashes)
    view_000.spk ...      spike streams
    view_000_gt.pgm ...   16-bit ground truth (value / 65535 * peak)
    nonuniformity.spm     per-pixel threshold map used for training
    dark_current.spm      per-pixel dark-current map
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetEmpty, FormatError, IndivisibleSteps
from .field.rays import Camera, look_at
from .sim import (
    NonuniformityMap,
    SpikeCameraModel,
    calibrate,
    capture_calibration_set,
    nonuniformity_from_intervals,
    preset_model,
    simulate_stream,
)
from .stream import mean_intervals, read_spk, read_spm, write_spk, write_spm


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    albedo: float

    def intersect(self, o, d):
        """Nearest positive hit distance and unit normal per ray (inf where missed)."""
        c = np.asarray(self.center, dtype=np.float64)
        oc = o - c
        b = np.einsum("ij,ij->i", oc, d)
        cc = np.einsum("ij,ij->i", oc, oc) - self.radius ** 2
        disc = b * b - cc
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t0, t1 = -b - sq, -b + sq
        t = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, np.inf))
        t = np.where(hit, t, np.inf)
        p = o + d * np.where(np.isfinite(t), t, 0.0)[:, None]
        n = (p - c) / self.radius
        return t, n


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    albedo: float

    def intersect(self, o, d):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            ta = (lo - o) * inv
            tb = (hi - o) * inv
        tmin = np.nanmax(np.minimum(ta, tb), axis=1)
        tmax = np.nanmin(np.maximum(ta, tb), axis=1)
        hit = (tmax >= tmin) & (tmax > 1e-9)
        t = np.where(tmin > 1e-9, tmin, tmax)
        t = np.where(hit, t, np.inf)
        p = o + d * np.where(np.isfinite(t), t, 0.0)[:, None]
        # normal from the face closest to the hit point
        centre = (lo + hi) / 2
        half = (hi - lo) / 2
        rel = (p - centre) / half
        axis = np.argmax(np.abs(rel), axis=1)
        n = np.zeros_like(p)
        n[np.arange(len(p)), axis] = np.sign(rel[np.arange(len(p)), axis])
        return t, n


@dataclass(frozen=True)
class SceneSpec:
    primitives: tuple
    light_dir: tuple = (0.3, 0.2, 1.0)
    light_intensity: float = 1.0
    exposure: float = 0.4

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("a scene needs at least one primitive")
        for prim in self.primitives:
            if not 0 < prim.albedo <= 1:
                raise ValueError("albedo must be in (0, 1]")
        if not self.light_intensity > 0:
            raise ValueError("light intensity must be positive")
        object.__setattr__(self, "primitives", tuple(self.primitives))

    @property
    def light(self) -> np.ndarray:
        v = np.asarray(self.light_dir, dtype=np.float64)
        return v / np.linalg.norm(v)

    @property
    def peak(self) -> float:
        """Largest intensity any pixel can take."""
        return self.light_intensity * self.exposure

    def with_exposure(self, exposure: float) -> "SceneSpec":
        return SceneSpec(self.primitives, self.light_dir, self.light_intensity, exposure)


# illumination presets with a 1:2:4 intensity ratio
EXPOSURES = {"low": 0.2, "medium": 0.4, "high": 0.8}


def builtin_scene(name: str = "two_spheres", exposure="medium") -> SceneSpec:
    if isinstance(exposure, str):
        exposure = EXPOSURES[exposure]
    if name == "two_spheres":
        prims = (
            Sphere((0.0, -0.45, 0.0), 0.45, 0.9),
            Sphere((0.1, 0.55, -0.1), 0.35, 0.5),
        )
    elif name == "benchmark":
        prims = (
            Sphere((0.0, -0.5, 0.15), 0.45, 0.9),
            Sphere((0.35, 0.5, 0.0), 0.3, 0.45),
            Box((-0.6, 0.05, -0.55), (-0.1, 0.55, -0.05), 0.7),
        )
    else:
        raise KeyError(f"unknown builtin scene {name!r}")
    return SceneSpec(prims, exposure=exposure)


def make_pose_ring(n: int, radius: float, elevation: float = 30.0, look_at_point=(0.0, 0.0, 0.0),
                   width: int = 48, height: int = 48, focal: float | None = None):
    """``n`` cameras evenly spaced in azimuth (degrees from +x), all aimed at ``look_at_point``."""
    if n < 1 or not radius > 0:
        raise ValueError("need n >= 1 and radius > 0")
    if focal is None:
        focal = 0.5 * width / np.tan(np.radians(20.0))
    target = np.asarray(look_at_point, dtype=np.float64)
    el = np.radians(elevation)
    cams = []
    for k in range(n):
        az = 2 * np.pi * k / n
        eye = target + radius * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        cams.append(Camera(look_at(eye, target), focal, width, height))
    return cams


def _rotate_about_z(pose, angle, pivot):
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    shift = np.eye(4)
    shift[:3, 3] = pivot
    unshift = np.eye(4)
    unshift[:3, 3] = -np.asarray(pivot)
    return shift @ rot @ unshift @ pose


def shade(scene: SceneSpec, origins, dirs) -> np.ndarray:
    """Lambertian intensity of the nearest hit along each ray (0 on a miss)."""
    best = np.full(len(origins), np.inf)
    value = np.zeros(len(origins))
    light = scene.light
    for prim in scene.primitives:
        t, n = prim.intersect(origins, dirs)
        closer = t < best
        lit = np.maximum(0.0, n @ light) * prim.albedo * scene.light_intensity * scene.exposure
        value = np.where(closer, lit, value)
        best = np.where(closer, t, best)
    return value


def render_ground_truth(scene: SceneSpec, cam: Camera, subframes: int = 1, arc_deg: float = 5.0,
                        pivot=(0.0, 0.0, 0.0)):
    """Render ``subframes`` images; successive ones rotate the camera by ``arc_deg / subframes``
    about the vertical axis through ``pivot`` (the ring arc toward the next view)."""
    if subframes < 1:
        raise ValueError("subframes must be >= 1")
    images = []
    for j in range(subframes):
        pose = cam.pose if j == 0 else _rotate_about_z(cam.pose, np.radians(arc_deg) * j / subframes, pivot)
        c = Camera(pose, cam.focal, cam.width, cam.height)
        dirs = c.pixel_directions()
        origins = np.broadcast_to(c.position, dirs.shape)
        images.append(shade(scene, origins, dirs).reshape(cam.height, cam.width))
    return images


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class SceneDataset:
    cameras: list
    spikes: list
    gt_images: list
    nonuniformity: NonuniformityMap
    split: list
    theta: float
    near: float
    far: float
    peak: float
    dark_current: np.ndarray | None = None
    root: Path | None = None
    hashes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.cameras:
            raise DatasetEmpty("dataset has no views")
        n = len(self.cameras)
        if not (len(self.spikes) == len(self.gt_images) == len(self.split) == n):
            raise ValueError("per-view lists differ in length")
        steps = {s.steps for s in self.spikes}
        if len(steps) != 1:
            raise ValueError("all views must have the same number of steps")
        for cam, s, g in zip(self.cameras, self.spikes, self.gt_images):
            if (cam.height, cam.width) != (s.height, s.width) or g.shape != (s.height, s.width):
                raise ValueError("view dimensions disagree")
        if self.nonuniformity.shape != (self.height, self.width):
            raise ValueError("nonuniformity map does not match the view size")

    @property
    def steps(self) -> int:
        return self.spikes[0].steps

    @property
    def height(self) -> int:
        return self.spikes[0].height

    @property
    def width(self) -> int:
        return self.spikes[0].width

    def indices(self, tag: str) -> list[int]:
        return [i for i, s in enumerate(self.split) if s == tag]


def split_tags(n: int) -> list[str]:
    """Round-robin 7:1 train/test split."""
    return ["test" if i % 8 == 7 else "train" for i in range(n)]


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_pgm16(path, image, peak):
    img = np.clip(np.asarray(image, dtype=np.float64) / peak, 0.0, 1.0)
    data = np.round(img * 65535).astype(">u2")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm16(path, peak) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    pos += 1
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return data.astype(np.float64) / maxval * peak


def calibrated_nonuniformity(model: SpikeCameraModel, steps: int = 4096, seed=0, l1=None, l2=None):
    """Recover (theta, nonuniformity, dark current) from simulated uniform captures.

    Falls back to an L2-only calibration (zero dark current) when the sensor
    has no dark current, because the dark capture would then contain no spikes.
    """
    l1 = 0.25 * model.theta if l1 is None else l1
    l2 = 0.5 * model.theta if l2 is None else l2
    dark, lit1, lit2 = capture_calibration_set(model, l1, l2, steps, seed=seed)
    if np.all(model.dark_current == 0):
        t2, _ = mean_intervals(lit2)
        zeros = np.zeros(model.shape)
        r, ref, response = nonuniformity_from_intervals(t2, l2, zeros)
        return float(response[ref[1], ref[0]]), NonuniformityMap(r, reference=ref), zeros
    rec = calibrate(dark, lit1, l1, lit2, l2)
    return rec.theta_ref, rec.nonuniformity, rec.ld_map


def build_dataset(scene: SceneSpec, cams, model: SpikeCameraModel, steps: int = 256, subframes: int = 1,
                  seed=0, out_dir=None, near: float = 2.0, far: float = 6.0, arc_deg: float | None = None,
                  calibration_steps: int = 4096) -> SceneDataset:
    """Render, simulate and (optionally) write a dataset.

    With ``calibration_steps > 0`` the threshold map and firing threshold stored
    in the dataset come from calibrating the sensor on simulated uniform
    captures; with 0 the model's true map is stored.  When ``out_dir`` is
    given the files are written and the dataset is loaded back from disk.
    """
    if steps % subframes:
        raise IndivisibleSteps(f"{steps} steps cannot be split into {subframes} subframes")
    cams = list(cams)
    if not cams:
        raise DatasetEmpty("no cameras")
    if arc_deg is None:
        arc_deg = 360.0 / len(cams)
    seeds = np.random.SeedSequence(seed).spawn(len(cams) + 1)
    spikes, gts = [], []
    for cam, ss in zip(cams, seeds[1:]):
        frames = render_ground_truth(scene, cam, subframes, arc_deg)
        gts.append(frames[0])
        spikes.append(simulate_stream(frames, model, steps // subframes, seed=int(ss.generate_state(1)[0])))

    if calibration_steps:
        theta, nonuni, dark = calibrated_nonuniformity(
            model, calibration_steps, seed=int(seeds[0].generate_state(1)[0]))
    else:
        theta, nonuni, dark = model.theta, model.nonuniformity, model.dark_current

    ds = SceneDataset(cams, spikes, gts, nonuni, split_tags(len(cams)), float(theta), near, far,
                      scene.peak, dark_current=np.asarray(dark))
    if out_dir is None:
        return ds
    save_dataset(ds, out_dir)
    return load_dataset(out_dir)


def save_dataset(ds: SceneDataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        "# spikefield dataset manifest",
        f"width = {ds.width}",
        f"height = {ds.height}",
        f"steps = {ds.steps}",
        f"views = {len(ds.cameras)}",
        f"clock_ns = {ds.spikes[0].clock_ns}",
        f"theta = {float(ds.theta)!r}",
        f"near = {float(ds.near)!r}",
        f"far = {float(ds.far)!r}",
        f"peak = {float(ds.peak)!r}",
        f"focal = {float(ds.cameras[0].focal)!r}",
        "nonuniformity = nonuniformity.spm",
    ]
    write_spm(ds.nonuniformity.r, out / "nonuniformity.spm")
    lines.append(f"nonuniformity.sha256 = {_sha256((out / 'nonuniformity.spm').read_bytes())}")
    if ds.nonuniformity.reference is not None:
        lines.append("nonuniformity.reference = {} {}".format(*ds.nonuniformity.reference))
    if ds.dark_current is not None:
        write_spm(ds.dark_current, out / "dark_current.spm")
        lines.append("dark_current = dark_current.spm")
    for i, (cam, s, g, tag) in enumerate(zip(ds.cameras, ds.spikes, ds.gt_images, ds.split)):
        spk_name, gt_name = f"view_{i:03d}.spk", f"view_{i:03d}_gt.pgm"
        write_spk(s, out / spk_name)
        write_pgm16(out / gt_name, g, ds.peak)
        lines += [
            f"view.{i}.split = {tag}",
            f"view.{i}.spikes = {spk_name}",
            f"view.{i}.spikes.sha256 = {_sha256((out / spk_name).read_bytes())}",
            f"view.{i}.gt = {gt_name}",
            f"view.{i}.gt.sha256 = {_sha256((out / gt_name).read_bytes())}",
            f"view.{i}.pose = " + " ".join(repr(float(v)) for v in cam.pose.ravel()),
        ]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    return out


def parse_kv(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_dataset(root, verify: bool = True) -> SceneDataset:
    root = Path(root)
    kv = parse_kv((root / "manifest.txt").read_text())
    n = int(kv["views"])
    if n < 1:
        raise DatasetEmpty(f"{root}: manifest lists no views")
    width, height, peak = int(kv["width"]), int(kv["height"]), float(kv["peak"])
    focal = float(kv["focal"])
    hashes = {}

    def checked(name, key):
        data = (root / name).read_bytes()
        digest = _sha256(data)
        if verify and key in kv and kv[key] != digest:
            raise FormatError(f"{root / name}: content hash does not match manifest")
        hashes[name] = digest
        return data

    ref = tuple(int(v) for v in kv["nonuniformity.reference"].split()) if "nonuniformity.reference" in kv else None
    r = read_spm(checked(kv["nonuniformity"], "nonuniformity.sha256"))
    dark = read_spm(root / kv["dark_current"]) if "dark_current" in kv else None
    cams, spikes, gts, split = [], [], [], []
    for i in range(n):
        pose = np.array([float(v) for v in kv[f"view.{i}.pose"].split()]).reshape(4, 4)
        cams.append(Camera(pose, focal, width, height))
        spikes.append(read_spk(checked(kv[f"view.{i}.spikes"], f"view.{i}.spikes.sha256")))
        checked(kv[f"view.{i}.gt"], f"view.{i}.gt.sha256")
        gts.append(read_pgm16(root / kv[f"view.{i}.gt"], peak))
        split.append(kv[f"view.{i}.split"])
    return SceneDataset(cams, spikes, gts, NonuniformityMap(r, reference=ref), split, float(kv["theta"]),
                        float(kv["near"]), float(kv["far"]), peak, dark_current=dark, root=root, hashes=hashes)


def builtin_dataset(name: str = "benchmark", exposure="medium", noise: str = "medium", size: int = 48,
                    views: int = 16, steps: int = 256, subframes: int = 1, seed=0, out_dir=None,
                    calibration_steps: int = 4096) -> SceneDataset:
    """The builtin benchmark: pose ring at radius 4, 30 degrees elevation, near/far 2/6."""
    scene = builtin_scene(name, exposure)
    cams = make_pose_ring(views, 4.0, 30.0, width=size, height=size)
    model = preset_model(noise, size, size, seed=np.random.SeedSequence([seed, 1]).generate_state(1)[0])
    return build_dataset(scene, cams, model, steps, subframes, seed=seed, out_dir=out_dir,
                         calibration_steps=calibration_steps)


def dataset_exists(path) -> bool:
    return os.path.exists(os.path.join(path, "manifest.txt"))
