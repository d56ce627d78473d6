"""Depth-guided object query generation.

Pixels are sampled inside each 2D detection, lifted to 3D through the depth
map at a few layered depths behind the visible surface, and turned into a
position embedding (from the 3D point) plus a semantic embedding (from the
image feature under the pixel).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .encoding import pe3d
from .errors import DegenerateBox, DepthOutOfRange, OutOfFrame
from .geometry import D_MAX, D_MIN, CameraModel, RoiBounds, normalize_point, unproject
from .netcore import MlpWeights
from .simworld import Box2D, DepthMap, FeatureMap, filter_boxes

DEPTH_GUIDED = "depth_guided"
TEMPORAL = "temporal"
FIXED = "fixed"


@dataclass(frozen=True)
class QueryGenConfig:
    n_points: int = 4
    depth_layers: int = 3
    delta_d: float = 0.5
    score_threshold: float = 0.05
    nms_iou: float = 0.7
    max_queries: int = 900
    d_min: float = D_MIN
    d_max: float = D_MAX


@dataclass(eq=False)
class QuerySet:
    """A batch of queries as parallel arrays (row i is query i)."""

    q_pos: np.ndarray
    q_sem: np.ndarray
    p_ref: np.ndarray
    source: str = DEPTH_GUIDED
    camera: np.ndarray = field(default=None)
    pixels: np.ndarray = field(default=None)
    box_score: np.ndarray = field(default=None)
    layer: np.ndarray = field(default=None)
    object_id: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.p_ref)
        for name, default in (
            ("camera", lambda: np.full(n, -1)),
            ("pixels", lambda: np.full((n, 2), np.nan)),
            ("box_score", lambda: np.ones(n)),
            ("layer", lambda: np.zeros(n, int)),
            ("object_id", lambda: np.full(n, -1)),
        ):
            if getattr(self, name) is None:
                setattr(self, name, default())

    def __len__(self) -> int:
        return len(self.p_ref)

    @property
    def dim(self) -> int:
        return self.q_pos.shape[1]

    @property
    def embeddings(self) -> np.ndarray:
        return self.q_pos + self.q_sem

    def take(self, idx) -> "QuerySet":
        idx = np.asarray(idx, dtype=int)
        return replace(
            self,
            q_pos=self.q_pos[idx], q_sem=self.q_sem[idx], p_ref=self.p_ref[idx],
            camera=self.camera[idx], pixels=self.pixels[idx], box_score=self.box_score[idx],
            layer=self.layer[idx], object_id=self.object_id[idx],
        )

    @classmethod
    def empty(cls, dim: int, source: str = DEPTH_GUIDED) -> "QuerySet":
        return cls(np.zeros((0, dim)), np.zeros((0, dim)), np.zeros((0, 3)), source)


def clip_box(box: Box2D, width: int, height: int) -> Box2D:
    return replace(
        box,
        u_min=min(max(box.u_min, 0.0), float(width)),
        u_max=min(max(box.u_max, 0.0), float(width)),
        v_min=min(max(box.v_min, 0.0), float(height)),
        v_max=min(max(box.v_max, 0.0), float(height)),
    )


def sample_box_points(box: Box2D, n: int, seed: int = 0, *tags: int) -> np.ndarray:
    """(n, 2) pixels: the box center first, then n-1 uniform draws inside the box."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if box.area < 1.0:
        raise DegenerateBox(f"box area {box.area:.3g} px^2 < 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 23, *tags])))
    pts = np.empty((n, 2))
    pts[0] = box.center
    pts[1:, 0] = rng.uniform(box.u_min, box.u_max, size=n - 1)
    pts[1:, 1] = rng.uniform(box.v_min, box.v_max, size=n - 1)
    return pts


def depth_layers(d_surface: float, delta_d: float, layers: int, d_max: float = D_MAX) -> list[float]:
    if delta_d <= 0 or layers < 1:
        raise ValueError("delta_d must be > 0 and layers >= 1")
    return [d_surface + i * delta_d for i in range(layers) if d_surface + i * delta_d <= d_max]


def sample_semantic(fmap: FeatureMap, uv) -> np.ndarray:
    """Bilinear feature lookup at continuous image pixel(s) (..., 2) -> (..., C).

    Feature node (i, j) sits at image pixel ((j + 0.5) * stride, (i + 0.5) * stride);
    positions between the outermost nodes and the image border clamp to the edge.
    """
    uv = np.asarray(uv, dtype=float)
    c, hf, wf = fmap.values.shape
    s = fmap.stride
    if np.any(uv[..., 0] < 0) or np.any(uv[..., 0] > wf * s) or np.any(uv[..., 1] < 0) or np.any(uv[..., 1] > hf * s):
        raise OutOfFrame("pixel outside the feature map's image")
    gx = np.clip(uv[..., 0] / s - 0.5, 0.0, wf - 1.0)
    gy = np.clip(uv[..., 1] / s - 0.5, 0.0, hf - 1.0)
    x0 = np.minimum(np.floor(gx).astype(int), wf - 1)
    y0 = np.minimum(np.floor(gy).astype(int), hf - 1)
    x1 = np.minimum(x0 + 1, wf - 1)
    y1 = np.minimum(y0 + 1, hf - 1)
    ax = (gx - x0)[..., None]
    ay = (gy - y0)[..., None]
    grid = fmap.values.transpose(1, 2, 0)
    return (
        grid[y0, x0] * (1 - ax) * (1 - ay)
        + grid[y0, x1] * ax * (1 - ay)
        + grid[y1, x0] * (1 - ax) * ay
        + grid[y1, x1] * ax * ay
    )


def generate_queries(
    boxes: list[Box2D],
    depths: list[DepthMap],
    features: list[FeatureMap],
    rig: list[CameraModel],
    pe_weights: MlpWeights,
    cfg: QueryGenConfig = QueryGenConfig(),
    roi: RoiBounds = RoiBounds(),
    seed: int = 0,
    frame_index: int = 0,
) -> QuerySet:
    """Depth-guided queries for every surviving 2D box, capped at ``cfg.max_queries``.

    Points whose depth is missing or out of range are skipped.  When the cap
    binds, higher-scoring boxes keep their queries first.  Output order is
    camera index, then box score (descending), then sample and layer index.
    """
    dim = pe_weights.out_dim
    by_cam: dict[int, list[Box2D]] = {}
    for b in boxes:
        by_cam.setdefault(b.camera_index, []).append(b)
    depth_of = {d.camera_index: d for d in depths}
    feat_of = {f.camera_index: f for f in features}

    per_box = []  # (score, camera, rank in camera, rows)
    for cam_idx in sorted(by_cam):
        cam = rig[cam_idx]
        kept = filter_boxes(by_cam[cam_idx], cfg.score_threshold, cfg.nms_iou)
        for rank, box in enumerate(kept):
            clipped = clip_box(box, cam.width, cam.height)
            try:
                pix = sample_box_points(clipped, cfg.n_points, seed, frame_index, cam_idx, rank)
            except DegenerateBox:
                continue
            # keep samples strictly inside the image so nearest-neighbour lookup stays on the box
            pix[:, 0] = np.minimum(pix[:, 0], np.nextafter(cam.width, 0))
            pix[:, 1] = np.minimum(pix[:, 1], np.nextafter(cam.height, 0))
            d_surf = depth_of[cam_idx].lookup(pix)
            sem = sample_semantic(feat_of[cam_idx], pix)
            rows = []
            for k in range(cfg.n_points):
                if not np.isfinite(d_surf[k]):
                    continue
                for layer, d in enumerate(depth_layers(d_surf[k], cfg.delta_d, cfg.depth_layers, cfg.d_max)):
                    try:
                        p = unproject(cam, pix[k], d, cfg.d_min, cfg.d_max)
                    except DepthOutOfRange:
                        continue
                    rows.append((p, sem[k], pix[k], layer))
            per_box.append((box.score, cam_idx, rank, box.object_id, rows))

    # global budget by descending score; ties resolved by camera then rank
    budget = cfg.max_queries
    selected = []
    for score, cam_idx, rank, oid, rows in sorted(per_box, key=lambda t: (-t[0], t[1], t[2])):
        take = rows[: max(0, budget)]
        budget -= len(take)
        selected.append((cam_idx, rank, score, oid, take))
    selected.sort(key=lambda t: (t[0], t[1]))

    flat = [(cam_idx, score, oid, r) for cam_idx, _, score, oid, take in selected for r in take]
    if not flat:
        return QuerySet.empty(dim)
    p_ref = np.array([r[0] for _, _, _, r in flat])
    n_pts, _ = normalize_point(p_ref, roi)
    return QuerySet(
        q_pos=pe3d(n_pts, pe_weights),
        q_sem=np.array([r[1] for _, _, _, r in flat]),
        p_ref=p_ref,
        source=DEPTH_GUIDED,
        camera=np.array([c for c, _, _, _ in flat]),
        pixels=np.array([r[2] for _, _, _, r in flat]),
        box_score=np.array([s for _, s, _, _ in flat]),
        layer=np.array([r[3] for _, _, _, r in flat]),
        object_id=np.array([o for _, _, o, _ in flat]),
    )


def fixed_reference_points(n: int, roi: RoiBounds, seed: int = 0) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 29])))
    return rng.uniform(roi.lo, roi.hi, size=(n, 3))


def fixed_queries(n: int, pe_weights: MlpWeights, roi: RoiBounds = RoiBounds(), seed: int = 0) -> QuerySet:
    """Uniform ROI reference points with zero semantic content."""
    p_ref = fixed_reference_points(n, roi, seed)
    n_pts, _ = normalize_point(p_ref, roi)
    q_pos = pe3d(n_pts, pe_weights)
    return QuerySet(q_pos, np.zeros_like(q_pos), p_ref, FIXED)
