import numpy as np
import pytest

from spikefield.errors import FormatError, IndivisibleSteps
from spikefield.field import Camera, look_at
from spikefield.scenegen import (
    Box,
    SceneSpec,
    Sphere,
    build_dataset,
    builtin_dataset,
    builtin_scene,
    load_dataset,
    make_pose_ring,
    read_pgm16,
    render_ground_truth,
    shade,
    split_tags,
    write_pgm16,
)
from spikefield.sim import SpikeCameraModel


def test_pose_ring_azimuths_and_aim():
    cams = make_pose_ring(4, 3.0, elevation=0.0)
    pos = np.array([c.position for c in cams])
    assert np.allclose(pos, [[3, 0, 0], [0, 3, 0], [-3, 0, 0], [0, -3, 0]], atol=1e-12)
    target = np.array([0.2, -0.1, 0.3])
    for cam in make_pose_ring(7, 4.0, 30.0, look_at_point=target):
        to_target = (target - cam.position) / np.linalg.norm(target - cam.position)
        assert np.allclose(cam.forward, to_target, atol=1e-6)
        R = cam.pose[:3, :3]
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert len(make_pose_ring(1, 2.0)) == 1
    with pytest.raises(ValueError):
        make_pose_ring(0, 1.0)


def test_sphere_centre_pixel_shading():
    scene = SceneSpec((Sphere((0.0, 0.0, 0.0), 1.0, 0.8),), light_dir=(0.0, 0.0, 1.0), exposure=1.0)
    cam = Camera(look_at([0.0, 0.0, 5.0], [0.0, 0.0, 0.0], up=(0.0, 1.0, 0.0)), 10.0, 9, 9)
    img = render_ground_truth(scene, cam)[0]
    assert img[4, 4] == pytest.approx(0.8)
    assert img[0, 0] == 0.0


def test_box_face_normal():
    box = Box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0), 0.5)
    t, n = box.intersect(np.array([[0.0, 0.0, 5.0]]), np.array([[0.0, 0.0, -1.0]]))
    assert t[0] == pytest.approx(4.0) and np.allclose(n[0], [0, 0, 1])
    t, _ = box.intersect(np.array([[3.0, 3.0, 5.0]]), np.array([[0.0, 0.0, -1.0]]))
    assert np.isinf(t[0])


def test_scene_validation():
    with pytest.raises(ValueError):
        SceneSpec(())
    with pytest.raises(ValueError):
        SceneSpec((Sphere((0, 0, 0), 1.0, 0.0),))


def test_rigid_transform_invariance():
    rng = np.random.default_rng(0)
    scene = builtin_scene("two_spheres", 1.0)
    cam = make_pose_ring(5, 4.0, 20.0, width=16, height=16)[2]
    dirs = cam.pixel_directions()
    origins = np.broadcast_to(cam.position, dirs.shape)
    base = shade(scene, origins, dirs)
    for _ in range(3):
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        q *= np.sign(np.linalg.det(q))
        shift = rng.normal(size=3)
        moved = SceneSpec(
            tuple(Sphere(tuple(q @ np.asarray(s.center) + shift), s.radius, s.albedo) for s in scene.primitives),
            light_dir=tuple(q @ scene.light), exposure=scene.exposure,
        )
        out = shade(moved, origins @ q.T + shift, dirs @ q.T)
        assert np.allclose(out, base, atol=1e-9)


def test_subframes_vary_smoothly():
    scene = builtin_scene("benchmark")
    cam = make_pose_ring(8, 4.0, width=16, height=16)[0]
    frames = render_ground_truth(scene, cam, subframes=16, arc_deg=45.0)
    assert len(frames) == 16
    steps = [np.abs(a - b).mean() for a, b in zip(frames, frames[1:])]
    assert max(steps) < 5 * np.mean(steps) + 1e-9
    assert np.abs(frames[0] - frames[-1]).mean() > max(steps)


def test_split_tags():
    tags = split_tags(16)
    assert tags.count("test") == 2 and tags[7] == tags[15] == "test"


def test_pgm16_roundtrip(tmp_path):
    img = np.random.default_rng(0).random((5, 7)) * 0.4
    write_pgm16(tmp_path / "a.pgm", img, 0.4)
    back = read_pgm16(tmp_path / "a.pgm", 0.4)
    assert np.max(np.abs(back - img)) <= 0.4 / 65535


def test_flat_wall_rate_law():
    scene = SceneSpec((Box((-5.0, -5.0, -1.0), (5.0, 5.0, 0.0), 0.6),), light_dir=(0.0, 0.0, 1.0), exposure=0.5)
    cams = [Camera(look_at([0.0, 0.0, 4.0], [0.0, 0.0, 0.0], up=(0.0, 1.0, 0.0)), 20.0, 8, 8)]
    model = SpikeCameraModel.ideal(8, 8)
    ds = build_dataset(scene, cams, model, steps=256, calibration_steps=0)
    gt = ds.gt_images[0]
    assert np.allclose(gt, 0.3)
    assert np.array_equal(ds.spikes[0].counts(), np.floor(gt * 256).astype(int))


def test_indivisible_steps():
    with pytest.raises(IndivisibleSteps):
        build_dataset(builtin_scene(), make_pose_ring(2, 4.0, width=8, height=8), SpikeCameraModel.ideal(8, 8),
                      steps=100, subframes=16)


def test_dataset_structure_and_roundtrip(tmp_path):
    ds = builtin_dataset("two_spheres", size=16, views=8, steps=256, out_dir=tmp_path / "d")
    files = sorted(p.name for p in (tmp_path / "d").iterdir())
    assert "manifest.txt" in files and "nonuniformity.spm" in files
    assert sum(f.endswith(".spk") for f in files) == 8
    assert all(s.steps == 256 for s in ds.spikes)
    again = load_dataset(tmp_path / "d")
    assert again.hashes == ds.hashes
    assert again.split == ds.split and again.steps == 256 and (again.height, again.width) == (16, 16)
    assert all(a == b for a, b in zip(again.spikes, ds.spikes))
    assert 0.9 < ds.theta < 1.1
    # tampering is detected
    spk = tmp_path / "d" / "view_000.spk"
    data = bytearray(spk.read_bytes())
    data[-1] ^= 0x80
    spk.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "d")


def test_dataset_deterministic():
    a = builtin_dataset("two_spheres", size=12, views=3, steps=64, calibration_steps=2048, seed=4)
    b = builtin_dataset("two_spheres", size=12, views=3, steps=64, calibration_steps=2048, seed=4)
    assert all(x == y for x, y in zip(a.spikes, b.spikes))
    assert np.array_equal(a.nonuniformity.r, b.nonuniformity.r)


def test_subframe_dataset_steps_per_frame():
    ds = build_dataset(builtin_scene(), make_pose_ring(2, 4.0, width=8, height=8), SpikeCameraModel.ideal(8, 8),
                       steps=256, subframes=16, calibration_steps=0)
    assert ds.steps == 256
