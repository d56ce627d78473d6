"""Deterministic synthetic driving world.

Provides stand-ins for the learned perception stages: an analytic depth
renderer (ray casting against oriented boxes), a noisy 2D detector built from
projected box hulls, and procedural feature maps whose values depend only on
which object a pixel sees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PlacementFailure
from .geometry import (
    D_MAX,
    D_MIN,
    CameraModel,
    EgoPose,
    RoiBounds,
    camera_rays,
    camera_rotation_for_heading,
    ego_align,
    project,
    to_camera_frame,
    translation_matrix,
    yaw_rotation,
)

CLASS_NAMES = ("car", "truck", "pedestrian")
# (width, length, height) in meters; length runs along the object's heading
BASE_SIZES = np.array([[1.9, 4.5, 1.6], [2.5, 8.0, 3.0], [0.7, 0.7, 1.8]])
CLASS_PROBS = np.array([0.6, 0.15, 0.25])
MAX_SPEED = np.array([6.0, 4.0, 1.5])

INVALID_ID = -1


@dataclass(frozen=True)
class NoiseConfig:
    depth_sigma: float = 0.0  # relative depth error
    box_jitter: float = 0.0  # px, per box edge
    drop_prob: float = 0.0
    score_sigma: float = 0.0

    def __post_init__(self):
        for name in ("depth_sigma", "box_jitter", "drop_prob", "score_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"noise.{name} must be >= 0")


@dataclass(frozen=True)
class RigConfig:
    n_cameras: int = 6
    width: int = 800
    height: int = 320
    fov_deg: float = 70.0
    mount_height: float = 1.6
    mount_offset: float = 0.5
    feature_stride: int = 16


@dataclass(frozen=True)
class SceneConfig:
    n_objects: tuple = (8, 15)  # inclusive range
    n_frames: int = 10
    dt: float = 0.5
    ego_speed: float = 5.0
    ego_yaw_rate: float = 0.05
    min_radius: float = 8.0
    max_radius: float = 50.0
    max_attempts: int = 2000
    roi: RoiBounds = field(default_factory=RoiBounds)
    rig: RigConfig = field(default_factory=RigConfig)


@dataclass(frozen=True, eq=False)
class SceneObject:
    id: int
    class_id: int
    center0: np.ndarray  # world frame at t = 0
    size: np.ndarray  # (w, l, h)
    yaw: float
    velocity: np.ndarray  # (vx, vy), world frame, constant

    def center_at(self, t: float) -> np.ndarray:
        return self.center0 + np.array([self.velocity[0] * t, self.velocity[1] * t, 0.0])


@dataclass(frozen=True, eq=False)
class Frame:
    timestamp: float
    pose: EgoPose


@dataclass(frozen=True, eq=False)
class Scene:
    frames: list
    objects: list
    rig: list
    seed: int
    roi: RoiBounds = field(default_factory=RoiBounds)

    @property
    def n_frames(self) -> int:
        return len(self.frames)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Object states of one frame, expressed in that frame's ego coordinates."""

    ids: np.ndarray
    classes: np.ndarray
    centers: np.ndarray
    sizes: np.ndarray
    yaws: np.ndarray
    velocities: np.ndarray

    def __len__(self):
        return len(self.ids)

    @classmethod
    def empty(cls) -> "GroundTruth":
        return cls(np.zeros(0, int), np.zeros(0, int), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 2)))


@dataclass(frozen=True, eq=False)
class Box2D:
    camera_index: int
    u_min: float
    v_min: float
    u_max: float
    v_max: float
    score: float
    class_id: int
    object_id: int = INVALID_ID

    @property
    def area(self) -> float:
        return max(0.0, self.u_max - self.u_min) * max(0.0, self.v_max - self.v_min)

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel z-depth in meters; NaN marks pixels with no surface."""

    camera_index: int
    values: np.ndarray
    d_min: float = D_MIN
    d_max: float = D_MAX

    def lookup(self, uv) -> np.ndarray:
        """Nearest-neighbour depth at continuous pixel coordinates."""
        uv = np.asarray(uv, dtype=float)
        h, w = self.values.shape
        col = np.clip(np.floor(uv[..., 0]).astype(int), 0, w - 1)
        row = np.clip(np.floor(uv[..., 1]).astype(int), 0, h - 1)
        return self.values[row, col]


@dataclass(frozen=True, eq=False)
class FeatureMap:
    camera_index: int
    values: np.ndarray  # (C, H', W')
    stride: int


def surround_rig(cfg: RigConfig = RigConfig()) -> list[CameraModel]:
    f = (cfg.width / 2.0) / math.tan(math.radians(cfg.fov_deg) / 2.0)
    rig = []
    for i in range(cfg.n_cameras):
        heading = 2.0 * math.pi * i / cfg.n_cameras
        pos = [cfg.mount_offset * math.cos(heading), cfg.mount_offset * math.sin(heading), cfg.mount_height]
        rig.append(
            CameraModel(
                fx=f, fy=f, cx=cfg.width / 2.0, cy=cfg.height / 2.0,
                R=camera_rotation_for_heading(heading), T=translation_matrix(pos),
                width=cfg.width, height=cfg.height,
            )
        )
    return rig


def ego_pose_at(t: float, speed: float, yaw_rate: float) -> EgoPose:
    if abs(yaw_rate) < 1e-12:
        x, y = speed * t, 0.0
    else:
        x = speed / yaw_rate * math.sin(yaw_rate * t)
        y = speed / yaw_rate * (1.0 - math.cos(yaw_rate * t))
    return EgoPose.from_xy_yaw(x, y, yaw_rate * t, timestamp=t)


def _footprint_radius(size) -> float:
    return 0.5 * math.hypot(size[0], size[1])


def generate_scene(cfg: SceneConfig = SceneConfig(), seed: int = 0) -> Scene:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 7])))
    lo, hi = cfg.n_objects if isinstance(cfg.n_objects, (tuple, list)) else (cfg.n_objects, cfg.n_objects)
    n = int(rng.integers(lo, hi + 1))
    objects: list[SceneObject] = []
    for oid in range(n):
        for _ in range(cfg.max_attempts):
            cls = int(rng.choice(len(CLASS_NAMES), p=CLASS_PROBS))
            size = BASE_SIZES[cls] * rng.uniform(0.9, 1.1, size=3)
            r = math.sqrt(rng.uniform(cfg.min_radius**2, cfg.max_radius**2))
            phi = rng.uniform(-math.pi, math.pi)
            yaw = float(rng.uniform(-math.pi, math.pi))
            speed = rng.uniform(0.0, MAX_SPEED[cls])
            center = np.array([r * math.cos(phi), r * math.sin(phi), size[2] / 2.0])
            if not cfg.roi.contains(center):
                continue
            rad = _footprint_radius(size)
            if all(np.hypot(*(center[:2] - o.center0[:2])) > rad + _footprint_radius(o.size) + 0.5 for o in objects):
                vel = speed * np.array([math.cos(yaw), math.sin(yaw)])
                objects.append(SceneObject(oid, cls, center, size, yaw, vel))
                break
        else:
            raise PlacementFailure(f"could not place object {oid} after {cfg.max_attempts} attempts")
    frames = [Frame(k * cfg.dt, ego_pose_at(k * cfg.dt, cfg.ego_speed, cfg.ego_yaw_rate)) for k in range(cfg.n_frames)]
    return Scene(frames=frames, objects=objects, rig=surround_rig(cfg.rig), seed=int(seed), roi=cfg.roi)


def _world_pose() -> EgoPose:
    return EgoPose(np.eye(4), 0.0)


def object_states(scene: Scene, frame_index: int) -> tuple[list[SceneObject], np.ndarray, np.ndarray, np.ndarray]:
    """Objects with their ego-frame centers, yaws and ground-plane velocities at a frame."""
    fr = scene.frames[frame_index]
    if not scene.objects:
        return [], np.zeros((0, 3)), np.zeros(0), np.zeros((0, 2))
    world = np.array([o.center_at(fr.timestamp) for o in scene.objects])
    centers = ego_align(world, _world_pose(), fr.pose)
    ego_yaw = math.atan2(fr.pose.matrix[1, 0], fr.pose.matrix[0, 0])
    yaws = np.array([wrap_angle(o.yaw - ego_yaw) for o in scene.objects])
    rot = yaw_rotation(-ego_yaw)[:2, :2]
    vels = np.array([rot @ o.velocity for o in scene.objects])
    return list(scene.objects), centers, yaws, vels


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def frame_ground_truth(scene: Scene, frame_index: int, roi_only: bool = True) -> GroundTruth:
    objs, centers, yaws, vels = object_states(scene, frame_index)
    if not objs:
        return GroundTruth.empty()
    keep = scene.roi.contains(centers) if roi_only else np.ones(len(objs), bool)
    return GroundTruth(
        ids=np.array([o.id for o in objs])[keep],
        classes=np.array([o.class_id for o in objs])[keep],
        centers=centers[keep],
        sizes=np.array([o.size for o in objs])[keep],
        yaws=yaws[keep],
        velocities=vels[keep],
    )


def box_corners(center, size, yaw) -> np.ndarray:
    """(8, 3) corners of an oriented box (yaw about +z)."""
    w, l, h = size
    local = np.array([[sx * l / 2, sy * w / 2, sz * h / 2] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    return local @ yaw_rotation(yaw).T + np.asarray(center)


def _box_bounds(size) -> np.ndarray:
    return np.array([size[1] / 2.0, size[0] / 2.0, size[2] / 2.0])


def points_in_box(points, center, size, yaw, margin: float = 0.0) -> np.ndarray:
    local = (np.asarray(points, dtype=float) - center) @ yaw_rotation(yaw)
    return np.all(np.abs(local) <= _box_bounds(size) + margin, axis=-1)


def distance_to_box_surface(points, center, size, yaw) -> np.ndarray:
    """Unsigned distance from point(s) to the boundary of an oriented box."""
    local = (np.asarray(points, dtype=float) - center) @ yaw_rotation(yaw)
    q = np.abs(local) - _box_bounds(size)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(np.max(q, axis=-1), 0.0)
    return np.abs(outside + inside)


def _pixel_window(camera: CameraModel, corners: np.ndarray):
    """Integer pixel window covering the projected box, or None if off-screen.

    Falls back to the full image when part of the box is behind the camera.
    """
    zc = to_camera_frame(camera, corners)[:, 2]
    if np.all(zc <= 0):
        return None
    if np.any(zc <= 1e-6):
        return 0, camera.width, 0, camera.height
    uv, _ = project(camera, corners)
    u0 = max(0, int(math.floor(uv[:, 0].min())) - 1)
    u1 = min(camera.width, int(math.ceil(uv[:, 0].max())) + 1)
    v0 = max(0, int(math.floor(uv[:, 1].min())) - 1)
    v1 = min(camera.height, int(math.ceil(uv[:, 1].max())) + 1)
    if u0 >= u1 or v0 >= v1:
        return None
    return u0, u1, v0, v1


def render(scene: Scene, frame_index: int, camera_index: int, d_min: float = D_MIN, d_max: float = D_MAX):
    """Ray-cast a camera view. Returns (depth (H, W) with NaN background, object-id map (H, W))."""
    cam = scene.rig[camera_index]
    depth = np.full((cam.height, cam.width), np.inf)
    ids = np.full((cam.height, cam.width), INVALID_ID, dtype=int)
    objs, centers, yaws, _ = object_states(scene, frame_index)
    for obj, c, yaw in zip(objs, centers, yaws):
        win = _pixel_window(cam, box_corners(c, obj.size, yaw))
        if win is None:
            continue
        u0, u1, v0, v1 = win
        uu, vv = np.meshgrid(np.arange(u0, u1) + 0.5, np.arange(v0, v1) + 0.5)
        origin, dirs = camera_rays(cam, np.stack([uu, vv], axis=-1))
        rot = yaw_rotation(yaw)
        o_local = (origin - c) @ rot
        d_local = dirs @ rot
        half = _box_bounds(obj.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d_local
            t1 = (-half - o_local) * inv
            t2 = (half - o_local) * inv
        # parallel rays: inside the slab -> unbounded, outside -> miss
        par = d_local == 0.0
        inside_slab = np.abs(o_local) <= half
        tmin = np.where(par, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
        tmax = np.where(par, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
        t_near = tmin.max(axis=-1)
        t_far = tmax.min(axis=-1)
        hit = (t_near <= t_far) & (t_near > 0.0)
        sub_d = depth[v0:v1, u0:u1]
        closer = hit & (t_near < sub_d)
        sub_d[closer] = t_near[closer]
        ids[v0:v1, u0:u1][closer] = obj.id
    depth[~np.isfinite(depth)] = np.nan
    fg = ~np.isnan(depth)
    depth[fg] = np.clip(depth[fg], d_min, d_max)
    return depth, ids


def render_depth(scene: Scene, frame_index: int, camera_index: int, d_min: float = D_MIN, d_max: float = D_MAX) -> DepthMap:
    depth, _ = render(scene, frame_index, camera_index, d_min, d_max)
    return DepthMap(camera_index, depth, d_min, d_max)


def noisy_depth(dmap: DepthMap, sigma: float, seed: int, frame_index: int = 0) -> DepthMap:
    """Multiplicative Gaussian depth error, clamped back into range."""
    if sigma == 0:
        return dmap
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 31, frame_index, dmap.camera_index])))
    vals = dmap.values * (1.0 + sigma * rng.standard_normal(dmap.values.shape))
    fg = ~np.isnan(vals)
    vals[fg] = np.clip(vals[fg], dmap.d_min, dmap.d_max)
    return DepthMap(dmap.camera_index, vals, dmap.d_min, dmap.d_max)


def box_iou(a: Box2D, b: Box2D) -> float:
    iw = min(a.u_max, b.u_max) - max(a.u_min, b.u_min)
    ih = min(a.v_max, b.v_max) - max(a.v_min, b.v_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def nms(boxes: list[Box2D], iou_threshold: float = 0.7) -> list[Box2D]:
    """Class-aware greedy NMS. Ties in score keep the earlier box."""
    order = sorted(range(len(boxes)), key=lambda i: -boxes[i].score)
    kept: list[Box2D] = []
    for i in order:
        b = boxes[i]
        if all(k.class_id != b.class_id or box_iou(k, b) <= iou_threshold for k in kept):
            kept.append(b)
    return kept


def filter_boxes(boxes: list[Box2D], score_threshold: float = 0.05, nms_iou: float = 0.7) -> list[Box2D]:
    return nms([b for b in boxes if b.score >= score_threshold], nms_iou)


def detect_2d_stub(
    scene: Scene,
    frame_index: int,
    camera_index: int,
    noise: NoiseConfig = NoiseConfig(),
    seed: int = 0,
    ids: np.ndarray | None = None,
    score_threshold: float = 0.05,
    nms_iou: float = 0.7,
) -> list[Box2D]:
    """Tight 2D hulls of the projected boxes of visible objects, with optional noise.

    An object counts as visible when at least one pixel of the id map sees it.
    Objects with any corner at or behind the image plane are skipped.
    """
    cam = scene.rig[camera_index]
    if ids is None:
        _, ids = render(scene, frame_index, camera_index)
    visible = set(np.unique(ids[ids != INVALID_ID]).tolist())
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 17, frame_index, camera_index])))
    objs, centers, yaws, _ = object_states(scene, frame_index)
    boxes = []
    for obj, c, yaw in zip(objs, centers, yaws):
        if obj.id not in visible:
            continue
        draws = rng.uniform(), rng.standard_normal(4), rng.standard_normal()
        corners = box_corners(c, obj.size, yaw)
        if np.any(to_camera_frame(cam, corners)[:, 2] <= D_MIN):
            continue
        if draws[0] < noise.drop_prob:
            continue
        uv, _ = project(cam, corners)
        u = np.array([uv[:, 0].min(), uv[:, 0].max()]) + noise.box_jitter * draws[1][:2]
        v = np.array([uv[:, 1].min(), uv[:, 1].max()]) + noise.box_jitter * draws[1][2:]
        u.sort()
        v.sort()
        score = float(np.clip(1.0 - abs(noise.score_sigma * draws[2]), 0.0, 1.0))
        if u[1] - u[0] <= 0 or v[1] - v[0] <= 0:
            continue
        boxes.append(Box2D(camera_index, float(u[0]), float(v[0]), float(u[1]), float(v[1]), score, obj.class_id, obj.id))
    return filter_boxes(boxes, score_threshold, nms_iou)


def _code(seed: int, dim: int, *tags: int) -> np.ndarray:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *tags]))).standard_normal(dim)


def synth_features(
    scene: Scene, frame_index: int, camera_index: int, dim: int, seed: int = 0,
    ids: np.ndarray | None = None, stride: int = 16,
) -> FeatureMap:
    """Feature grid at ``stride``: identical vectors for every node seeing the same object."""
    cam = scene.rig[camera_index]
    if ids is None:
        _, ids = render(scene, frame_index, camera_index)
    hf, wf = cam.height // stride, cam.width // stride
    node_ids = ids[np.arange(hf) * stride + stride // 2][:, np.arange(wf) * stride + stride // 2]
    bg = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([int(seed), 103, frame_index, camera_index]))
    ).standard_normal((hf, wf, dim)) * 0.1
    feats = bg
    classes = {o.id: o.class_id for o in scene.objects}
    for oid in np.unique(node_ids[node_ids != INVALID_ID]).tolist():
        cls = classes[oid]
        feats[node_ids == oid] = _code(seed, dim, 101, cls) + 0.5 * _code(seed, dim, 102, oid)
    return FeatureMap(camera_index, np.ascontiguousarray(feats.transpose(2, 0, 1)), stride)
