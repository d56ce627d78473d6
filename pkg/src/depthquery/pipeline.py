"""Per-frame orchestration: sensors -> queries -> decoder -> head -> loss -> memory."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .decoder import DecoderWeights, ImageTokens, build_image_tokens, decode, head
from .detections import DetectionSet
from .encoding import pe3d_weights
from .errors import InvariantViolation
from .matching import LossReport, detection_loss
from .metrics import ApResult, EvalConfig, mean_ap
from .netcore import MlpWeights, checksum
from .querygen import QuerySet, fixed_queries, generate_queries
from .simworld import (
    Box2D,
    DepthMap,
    FeatureMap,
    GroundTruth,
    Scene,
    detect_2d_stub,
    frame_ground_truth,
    noisy_depth,
    points_in_box,
    render,
    synth_features,
)
from .temporal import MemoryQueue, MotionMlps, temporal_queries


@dataclass(frozen=True, eq=False)
class ModelWeights:
    pe: MlpWeights
    motion: MotionMlps
    decoder: DecoderWeights

    def checksum(self) -> str:
        return checksum(self.pe.arrays() + self.motion.arrays() + self.decoder.arrays())

    @classmethod
    def seeded(cls, cfg: PipelineConfig) -> "ModelWeights":
        return cls(
            pe=pe3d_weights(cfg.weight_seed, cfg.dim),
            motion=MotionMlps.seeded(cfg.weight_seed, cfg.dim),
            decoder=DecoderWeights.seeded(cfg.weight_seed, cfg.dim, cfg.decoder_layers, cfg.n_classes),
        )


@dataclass(eq=False)
class SensorFrame:
    """Stub outputs for every camera of one frame."""

    depths: list[DepthMap]
    boxes: list[Box2D]
    features: list[FeatureMap]
    tokens: ImageTokens | None = None


@dataclass(eq=False)
class FrameReport:
    frame_index: int
    timestamp: float
    n_depth_guided: int
    n_temporal: int
    detections: DetectionSet
    loss: LossReport
    ref_points: np.ndarray
    gt: GroundTruth
    memory_size: int
    timing_ms: dict = field(default_factory=dict)

    @property
    def n_decoded(self) -> int:
        return len(self.detections)


@dataclass(eq=False)
class PipelineState:
    memory: MemoryQueue
    peak_memory: int = 0

    @classmethod
    def fresh(cls, cfg: PipelineConfig) -> "PipelineState":
        return cls(MemoryQueue(cfg.memory_frames, cfg.memory_k))


@dataclass(eq=False)
class SequenceResult:
    frames: list[FrameReport]
    ap: ApResult
    weights_checksum: str
    peak_memory: int


def sense(scene: Scene, frame_index: int, cfg: PipelineConfig) -> SensorFrame:
    depths, boxes, feats = [], [], []
    qcfg = cfg.querygen
    for cam_idx in range(len(scene.rig)):
        depth, ids = render(scene, frame_index, cam_idx, qcfg.d_min, qcfg.d_max)
        dmap = noisy_depth(DepthMap(cam_idx, depth, qcfg.d_min, qcfg.d_max), cfg.noise.depth_sigma, cfg.stub_seed, frame_index)
        depths.append(dmap)
        boxes += detect_2d_stub(
            scene, frame_index, cam_idx, cfg.noise, cfg.stub_seed, ids, qcfg.score_threshold, qcfg.nms_iou
        )
        feats.append(synth_features(scene, frame_index, cam_idx, cfg.dim, cfg.stub_seed, ids, cfg.scene.rig.feature_stride))
    return SensorFrame(depths, boxes, feats)


def oracle_head(det: DetectionSet, p_ref: np.ndarray, gt: GroundTruth, margin: float = 1e-6) -> DetectionSet:
    """Queries whose reference point lies inside a ground-truth box predict that box at full confidence.

    Their center becomes the reference point itself; every other output is left untouched.
    """
    if len(det) == 0 or len(gt) == 0:
        return det
    scores = det.scores.copy()
    centers = det.centers.copy()
    claimed = np.zeros(len(det), dtype=bool)
    for j in range(len(gt)):
        inside = points_in_box(p_ref, gt.centers[j], gt.sizes[j], gt.yaws[j], margin) & ~claimed
        if not inside.any():
            continue
        claimed |= inside
        scores[inside] = 0.0
        scores[inside, gt.classes[j]] = 1.0
        centers[inside] = p_ref[inside]
    return DetectionSet(scores, centers, det.sizes, det.yaws, det.velocities, det.logits)


def _memory_velocities(det: DetectionSet, loss: LossReport, gt: GroundTruth, cfg: PipelineConfig, frame_index: int):
    """Matched detections carry their object's true velocity plus noise; the rest keep the head's."""
    vel = det.velocities.copy()
    if len(loss.matched_pred):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.stub_seed, 53, frame_index])))
        noise = cfg.velocity_noise * rng.standard_normal((len(loss.matched_pred), 2))
        vel[loss.matched_pred] = gt.velocities[loss.matched_gt] + noise
    return vel


def make_queries(scene: Scene, frame_index: int, sensors: SensorFrame, cfg: PipelineConfig, weights: ModelWeights) -> QuerySet:
    if cfg.query_mode == "fixed":
        return fixed_queries(cfg.n_fixed_queries, weights.pe, cfg.roi, cfg.query_seed)
    return generate_queries(
        sensors.boxes, sensors.depths, sensors.features, scene.rig, weights.pe, cfg.querygen, cfg.roi,
        cfg.query_seed, frame_index,
    )


def run_frame(
    state: PipelineState,
    scene: Scene,
    frame_index: int,
    cfg: PipelineConfig,
    weights: ModelWeights,
    sensors: SensorFrame | None = None,
) -> FrameReport:
    timing = {}
    t0 = time.perf_counter()
    frame = scene.frames[frame_index]
    if sensors is None:
        sensors = sense(scene, frame_index, cfg)
    if sensors.tokens is None:
        sensors.tokens = build_image_tokens(sensors.features, scene.rig, weights.pe, cfg.roi)
    t1 = time.perf_counter()
    timing["sensors"] = (t1 - t0) * 1e3

    q_dep = make_queries(scene, frame_index, sensors, cfg, weights)
    if cfg.use_temporal:
        q_temp = temporal_queries(state.memory, frame.pose, frame.timestamp, weights.motion, weights.pe, cfg.roi)
    else:
        q_temp = QuerySet.empty(cfg.dim)
    t2 = time.perf_counter()
    timing["queries"] = (t2 - t1) * 1e3

    emb = decode(q_dep, q_temp, sensors.tokens, weights.decoder)
    det = head(emb, q_dep.p_ref, weights.decoder.head, cfg.roi)
    if len(det) != len(q_dep):
        raise InvariantViolation("decoder output count differs from depth-guided query count")
    t3 = time.perf_counter()
    timing["decode"] = (t3 - t2) * 1e3

    gt = frame_ground_truth(scene, frame_index)
    if cfg.oracle_head:
        det = oracle_head(det, q_dep.p_ref, frame_ground_truth(scene, frame_index, roi_only=False))
    loss = detection_loss(det, gt, cfg.loss)
    state.memory.push_frame(det, emb, frame.pose, frame.timestamp, _memory_velocities(det, loss, gt, cfg, frame_index))
    state.peak_memory = max(state.peak_memory, len(state.memory))
    if len(state.memory) > state.memory.capacity:
        raise InvariantViolation("memory queue exceeded its capacity")
    timing["loss_memory"] = (time.perf_counter() - t3) * 1e3

    return FrameReport(
        frame_index=frame_index,
        timestamp=frame.timestamp,
        n_depth_guided=len(q_dep),
        n_temporal=len(q_temp),
        detections=det,
        loss=loss,
        ref_points=q_dep.p_ref,
        gt=gt,
        memory_size=len(state.memory),
        timing_ms=timing,
    )


def run_sequence(
    scene: Scene, cfg: PipelineConfig, weights: ModelWeights | None = None, sensors: list[SensorFrame] | None = None,
) -> SequenceResult:
    weights = ModelWeights.seeded(cfg) if weights is None else weights
    state = PipelineState.fresh(cfg)
    reports = [
        run_frame(state, scene, k, cfg, weights, None if sensors is None else sensors[k]) for k in range(scene.n_frames)
    ]
    ap = mean_ap([r.detections for r in reports], [r.gt for r in reports], EvalConfig(tuple(cfg.thresholds), tuple(range(cfg.n_classes))))
    return SequenceResult(reports, ap, weights.checksum(), state.peak_memory)


def mean_nearest_distance(points: np.ndarray, centers: np.ndarray) -> float | None:
    """Mean over points of the 3D distance to the closest center."""
    if len(points) == 0 or len(centers) == 0:
        return None
    d = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=-1)
    return float(d.min(axis=1).mean())


def sequence_ref_distance(result: SequenceResult) -> float | None:
    vals = [mean_nearest_distance(r.ref_points, r.gt.centers) for r in result.frames]
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


@dataclass(eq=False)
class AblationArm:
    name: str
    result: SequenceResult
    mean_ref_distance: float | None
    n_refs: int


def run_ablation(scene: Scene, cfg: PipelineConfig) -> dict[str, AblationArm]:
    """Same scene, same weights and sensor outputs; fixed ROI queries vs depth-guided queries."""
    weights = ModelWeights.seeded(cfg)
    sensors = [sense(scene, k, cfg) for k in range(scene.n_frames)]
    arms = {}
    for name in ("fixed", "depth_guided"):
        arm_cfg = _with(cfg, query_mode=name)
        res = run_sequence(scene, arm_cfg, weights, sensors)
        n_refs = int(np.mean([len(r.ref_points) for r in res.frames])) if res.frames else 0
        arms[name] = AblationArm(name, res, sequence_ref_distance(res), n_refs)
    return arms


def _with(cfg: PipelineConfig, **changes) -> PipelineConfig:
    return dataclasses.replace(cfg, **changes)
