"""Pinhole multi-camera geometry.

Conventions:
    camera frame: x right, y down, z forward (optical axis)
    ego frame:    x forward, y left, z up
    depth:        z-coordinate in the camera frame (distance along the optical axis)

Extrinsics are kept as two 4x4 homogeneous matrices, a rotation ``R`` and a
translation ``T``, both mapping camera coordinates into the ego frame, so that

    P_ego = T @ R @ inv(K) @ [u*d, v*d, d, 1]

with the 4x4 intrinsic matrix ``K``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, DepthOutOfRange, InvalidCamera, InvalidPose

D_MIN = 0.05
D_MAX = 80.0

_ORTHO_TOL = 1e-9


def _check_rotation(rot: np.ndarray, exc: type[Exception], what: str) -> None:
    if not np.allclose(rot.T @ rot, np.eye(3), rtol=0.0, atol=_ORTHO_TOL):
        raise exc(f"{what}: 3x3 block is not orthonormal")
    if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
        raise exc(f"{what}: determinant is not +1")


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera with ego-relative extrinsics."""

    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray
    T: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidCamera("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise InvalidCamera("principal point must lie inside the image")
        R = np.asarray(self.R, dtype=float)
        T = np.asarray(self.T, dtype=float)
        if R.shape != (4, 4) or T.shape != (4, 4):
            raise InvalidCamera("R and T must be 4x4")
        _check_rotation(R[:3, :3], InvalidCamera, "R")
        if np.any(R[3, :3] != 0) or np.any(R[:3, 3] != 0) or R[3, 3] != 1:
            raise InvalidCamera("R must be a pure homogeneous rotation")
        if not np.array_equal(T[:3, :3], np.eye(3)) or np.any(T[3, :3] != 0) or T[3, 3] != 1:
            raise InvalidCamera("T must be a pure homogeneous translation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    @property
    def position(self) -> np.ndarray:
        return self.T[:3, 3].copy()

    @property
    def rotation(self) -> np.ndarray:
        return self.R[:3, :3].copy()

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "R": self.R.tolist(), "T": self.T.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            R=np.array(d["R"], dtype=float), T=np.array(d["T"], dtype=float),
            width=int(d["width"]), height=int(d["height"]),
        )


@dataclass(frozen=True, eq=False)
class EgoPose:
    """Rigid ego->world transform at a timestamp (seconds)."""

    matrix: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise InvalidPose("pose must be 4x4")
        _check_rotation(m[:3, :3], InvalidPose, "pose")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidPose("pose last row must be [0, 0, 0, 1]")
        object.__setattr__(self, "matrix", m)

    def inverse_matrix(self) -> np.ndarray:
        rot = self.matrix[:3, :3]
        inv = np.eye(4)
        inv[:3, :3] = rot.T
        inv[:3, 3] = -rot.T @ self.matrix[:3, 3]
        return inv

    @classmethod
    def from_xy_yaw(cls, x: float, y: float, yaw: float, timestamp: float = 0.0, z: float = 0.0):
        return cls(rigid_transform(yaw_rotation(yaw), [x, y, z]), timestamp)


@dataclass(frozen=True)
class RoiBounds:
    """Axis-aligned detection region in ego coordinates (meters)."""

    mins: tuple = (-61.2, -61.2, -10.0)
    maxs: tuple = (61.2, 61.2, 10.0)

    def __post_init__(self):
        if len(self.mins) != 3 or len(self.maxs) != 3:
            raise ValueError("RoiBounds needs three axes")
        if any(lo >= hi for lo, hi in zip(self.mins, self.maxs)):
            raise ValueError("RoiBounds requires min < max on every axis")

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.mins, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.maxs, dtype=float)

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)


def yaw_rotation(yaw: float) -> np.ndarray:
    """3x3 rotation about +z."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rigid_transform(rotation, translation) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = rotation
    m[:3, 3] = translation
    return m


def camera_rotation_for_heading(yaw: float) -> np.ndarray:
    """4x4 camera->ego rotation for a level camera looking along ego heading ``yaw``."""
    c, s = np.cos(yaw), np.sin(yaw)
    R = np.eye(4)
    # columns: camera x (right), y (down), z (forward) expressed in ego axes
    R[:3, 0] = [s, -c, 0.0]
    R[:3, 1] = [0.0, 0.0, -1.0]
    R[:3, 2] = [c, s, 0.0]
    return R


def translation_matrix(t) -> np.ndarray:
    m = np.eye(4)
    m[:3, 3] = t
    return m


def intrinsic_matrix(camera: CameraModel) -> np.ndarray:
    return np.array(
        [
            [camera.fx, 0.0, camera.cx, 0.0],
            [0.0, camera.fy, camera.cy, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _inverse_intrinsics(camera: CameraModel) -> np.ndarray:
    return np.array(
        [
            [1.0 / camera.fx, 0.0, -camera.cx / camera.fx, 0.0],
            [0.0, 1.0 / camera.fy, -camera.cy / camera.fy, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def unproject(camera: CameraModel, uv, depth, d_min: float = D_MIN, d_max: float = D_MAX) -> np.ndarray:
    """Lift pixel(s) ``uv`` (..., 2) at z-depth ``depth`` (...) into ego coordinates (..., 3).

    Raises DepthOutOfRange if any depth falls outside ``[d_min, d_max]``.
    """
    uv = np.asarray(uv, dtype=float)
    d = np.asarray(depth, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d < d_min) or np.any(d > d_max):
        raise DepthOutOfRange(f"depth outside [{d_min}, {d_max}]")
    d = np.broadcast_to(d, uv.shape[:-1])
    hom = np.stack([uv[..., 0] * d, uv[..., 1] * d, d, np.ones_like(d)], axis=-1)
    M = camera.T @ camera.R @ _inverse_intrinsics(camera)
    out = hom @ M.T
    return out[..., :3] / out[..., 3:4]


def camera_rays(camera: CameraModel, uv) -> tuple[np.ndarray, np.ndarray]:
    """Ego-frame origin and per-pixel direction scaled so that ``origin + d*dir`` has z-depth d."""
    uv = np.asarray(uv, dtype=float)
    cam = np.stack(
        [(uv[..., 0] - camera.cx) / camera.fx, (uv[..., 1] - camera.cy) / camera.fy, np.ones(uv.shape[:-1])],
        axis=-1,
    )
    return camera.position, cam @ camera.rotation.T


def to_camera_frame(camera: CameraModel, points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    return (p - camera.T[:3, 3]) @ camera.R[:3, :3]


def project(camera: CameraModel, points) -> tuple[np.ndarray, np.ndarray]:
    """Project ego-frame point(s) (..., 3) to pixels (..., 2) and z-depth (...).

    Raises BehindCamera if any point has camera-frame z <= 0.
    """
    pc = to_camera_frame(camera, points)
    z = pc[..., 2]
    if np.any(z <= 0):
        raise BehindCamera("point has non-positive depth in camera frame")
    u = camera.fx * pc[..., 0] / z + camera.cx
    v = camera.fy * pc[..., 1] / z + camera.cy
    return np.stack([u, v], axis=-1), z


def in_frame(camera: CameraModel, uv) -> np.ndarray:
    uv = np.asarray(uv, dtype=float)
    return (uv[..., 0] >= 0) & (uv[..., 0] < camera.width) & (uv[..., 1] >= 0) & (uv[..., 1] < camera.height)


def ego_align(points, pose_prev: EgoPose, pose_now: EgoPose) -> np.ndarray:
    """Re-express ego coordinates from the ``pose_prev`` frame in the ``pose_now`` frame."""
    p = np.asarray(points, dtype=float)
    M = pose_now.inverse_matrix() @ pose_prev.matrix
    return p @ M[:3, :3].T + M[:3, 3]


def ego_align_vectors(vectors, pose_prev: EgoPose, pose_now: EgoPose) -> np.ndarray:
    """Rotate free vectors (e.g. velocities) between ego frames; no translation."""
    v = np.asarray(vectors, dtype=float)
    M = pose_now.inverse_matrix() @ pose_prev.matrix
    return v @ M[:3, :3].T


def normalize_point(points, roi: RoiBounds) -> tuple[np.ndarray, np.ndarray]:
    """Min-max normalize into the ROI box.

    Returns ``(normalized, inside)``; ``inside`` is False where any coordinate
    falls outside [0, 1].  Out-of-ROI points are not clipped.
    """
    p = np.asarray(points, dtype=float)
    n = (p - roi.lo) / (roi.hi - roi.lo)
    inside = np.all((n >= 0.0) & (n <= 1.0), axis=-1)
    return n, inside


def denormalize_point(normalized, roi: RoiBounds) -> np.ndarray:
    n = np.asarray(normalized, dtype=float)
    return n * (roi.hi - roi.lo) + roi.lo
