"""Pinhole cameras and ray generation.

Poses are camera-to-world 4x4 matrices.  The camera looks down its local -z
axis with +x to the right and +y up; image rows grow downwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import OutOfBounds


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    near: float
    far: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise ValueError("ray direction must be a unit vector")
        if not self.near < self.far:
            raise ValueError("ray needs near < far")

    def at(self, t):
        return np.asarray(self.origin) + np.multiply.outer(t, np.asarray(self.direction))


@dataclass(frozen=True)
class Camera:
    pose: np.ndarray
    focal: float
    width: int
    height: int

    def __post_init__(self):
        pose = np.array(self.pose, dtype=np.float64)
        if pose.shape != (4, 4):
            raise ValueError("pose must be a 4x4 matrix")
        rot = pose[:3, :3]
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6):
            raise ValueError("pose rotation is not orthonormal")
        if not self.focal > 0:
            raise ValueError("focal length must be positive")
        pose.flags.writeable = False
        object.__setattr__(self, "pose", pose)

    @property
    def position(self) -> np.ndarray:
        return self.pose[:3, 3]

    @property
    def forward(self) -> np.ndarray:
        return -self.pose[:3, 2]

    def pixel_directions(self) -> np.ndarray:
        """Unit world-space directions through every pixel centre, shape (H*W, 3), row-major."""
        xs, ys = np.meshgrid(np.arange(self.width), np.arange(self.height))
        return self._directions(xs.ravel(), ys.ravel())

    def _directions(self, xs, ys):
        local = np.stack([
            (xs + 0.5 - self.width / 2.0) / self.focal,
            -(ys + 0.5 - self.height / 2.0) / self.focal,
            -np.ones(np.shape(xs)),
        ], axis=-1)
        d = local @ self.pose[:3, :3].T
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world pose at ``eye`` whose forward axis points at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    if abs(np.dot(fwd, up)) > 1 - 1e-9:
        up = np.array([0.0, 1.0, 0.0]) if abs(fwd[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    true_up = np.cross(right, fwd)
    pose = np.eye(4)
    pose[:3, 0], pose[:3, 1], pose[:3, 2], pose[:3, 3] = right, true_up, -fwd, eye
    return pose


def generate_ray(cam: Camera, px, near: float, far: float) -> Ray:
    """Ray through the centre of pixel ``px = (x, y)``."""
    x, y = int(px[0]), int(px[1])
    if not (0 <= x < cam.width and 0 <= y < cam.height):
        raise OutOfBounds(f"pixel ({x},{y}) outside {cam.width}x{cam.height} image")
    d = cam._directions(np.array([x]), np.array([y]))[0]
    return Ray(cam.position.copy(), d, near, far)


def camera_rays(cam: Camera, pixels=None):
    """Origins and directions for all pixels (row-major) or for given flat indices."""
    dirs = cam.pixel_directions()
    if pixels is not None:
        dirs = dirs[pixels]
    origins = np.broadcast_to(cam.position, dirs.shape).copy()
    return origins, dirs
