"""Memory queue of past detections and their alignment into the current frame."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .detections import DetectionSet
from .encoding import pe3d
from .errors import DimensionMismatch
from .geometry import EgoPose, RoiBounds, ego_align, normalize_point
from .netcore import MlpWeights, checksum, mlp_forward
from .querygen import TEMPORAL, QuerySet

VEL_DIM = 2


@dataclass(frozen=True, eq=False)
class MemoryEntry:
    timestamp: float
    q_sem: np.ndarray
    p_ref: np.ndarray  # ego coordinates of the frame it was stored in
    velocity: np.ndarray
    ego_pose: EgoPose
    score: float

    def delta_t(self, t_now: float) -> float:
        return t_now - self.timestamp

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "score": self.score,
            "p_ref": self.p_ref.tolist(),
            "velocity": self.velocity.tolist(),
            "q_sem": self.q_sem.tolist(),
            "ego_pose": self.ego_pose.matrix.tolist(),
        }


class MemoryQueue:
    """Ring buffer of at most ``n_frames`` frames, each holding at most ``k`` entries."""

    def __init__(self, n_frames: int = 4, k: int = 64):
        if n_frames < 1 or k < 0:
            raise ValueError("n_frames must be >= 1 and k >= 0")
        self.n_frames = n_frames
        self.k = k
        self._frames: deque[list[MemoryEntry]] = deque(maxlen=n_frames)

    def __len__(self) -> int:
        return sum(len(f) for f in self._frames)

    @property
    def frame_count(self) -> int:
        return len(self._frames)

    @property
    def capacity(self) -> int:
        return self.n_frames * self.k

    def frames(self) -> list[list[MemoryEntry]]:
        """Stored frames, oldest first."""
        return [list(f) for f in self._frames]

    def entries(self) -> list[MemoryEntry]:
        """Newest frame first; within a frame, score descending."""
        return [e for f in reversed(self._frames) for e in f]

    def push_frame(
        self,
        detections: DetectionSet,
        embeddings: np.ndarray,
        pose: EgoPose,
        t: float,
        velocities: np.ndarray | None = None,
    ) -> None:
        """Store the top-k detections by classification score; evicts the oldest frame when full.

        ``velocities`` overrides the detections' regressed velocities when given.
        """
        n = len(detections)
        vel = detections.velocities if velocities is None else np.asarray(velocities, dtype=float)
        scores = detections.top_scores
        # stable: equal scores keep detection order
        order = np.argsort(-scores, kind="stable")[: self.k] if n else []
        frame = [
            MemoryEntry(
                timestamp=float(t),
                q_sem=np.array(embeddings[i], dtype=float),
                p_ref=np.array(detections.centers[i], dtype=float),
                velocity=np.array(vel[i], dtype=float),
                ego_pose=pose,
                score=float(scores[i]),
            )
            for i in order
        ]
        self._frames.append(frame)

    def state_checksum(self) -> str:
        arrays = []
        for f in self._frames:
            for e in f:
                arrays += [np.array([e.timestamp, e.score]), e.q_sem, e.p_ref, e.velocity, e.ego_pose.matrix]
        return checksum(arrays)

    def to_dict(self) -> dict:
        return {"n_frames": self.n_frames, "k": self.k, "frames": [[e.to_dict() for e in f] for f in self._frames]}


@dataclass(frozen=True, eq=False)
class MotionMlps:
    """Motion-conditioned updates for the position and semantic embeddings.

    Both take ``[embedding, v, dt]`` (width C + 3) and return width C.
    """

    pos: MlpWeights
    sem: MlpWeights

    def __post_init__(self):
        for m in (self.pos, self.sem):
            if m.in_dim != m.out_dim + VEL_DIM + 1:
                raise DimensionMismatch("motion MLP input must be C + velocity dim + 1")

    @classmethod
    def seeded(cls, seed: int, dim: int) -> "MotionMlps":
        return cls(
            MlpWeights.seeded(seed, dim + VEL_DIM + 1, dim, dim, 41),
            MlpWeights.seeded(seed, dim + VEL_DIM + 1, dim, dim, 42),
        )

    @classmethod
    def zeros(cls, dim: int) -> "MotionMlps":
        return cls(MlpWeights.zeros(dim + VEL_DIM + 1, dim, dim), MlpWeights.zeros(dim + VEL_DIM + 1, dim, dim))

    def arrays(self) -> list[np.ndarray]:
        return self.pos.arrays() + self.sem.arrays()


def _align_batch(
    entries: list[MemoryEntry], pose_now: EgoPose, t_now: float, mlps: MotionMlps, pe_weights: MlpWeights,
    roi: RoiBounds,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (aligned points, position embedding before the motion MLP, q_pos, q_sem)."""
    p = np.array([ego_align(e.p_ref, e.ego_pose, pose_now) for e in entries])
    base_pos = pe3d(normalize_point(p, roi)[0], pe_weights)
    motion = np.array([[*e.velocity, e.delta_t(t_now)] for e in entries])
    sem_in = np.array([e.q_sem for e in entries])
    q_pos = mlp_forward(mlps.pos, np.concatenate([base_pos, motion], axis=1))
    q_sem = mlp_forward(mlps.sem, np.concatenate([sem_in, motion], axis=1))
    return p, base_pos, q_pos, q_sem


def align(
    entry: MemoryEntry, pose_now: EgoPose, t_now: float, mlps: MotionMlps, pe_weights: MlpWeights,
    roi: RoiBounds = RoiBounds(),
) -> QuerySet:
    """One temporal query: ego-aligned reference point, motion-updated embeddings.

    Coordinates only receive the rigid ego alignment; object motion enters
    through the MLPs.  The MLP outputs replace the embeddings (no residual).
    """
    if t_now < entry.timestamp:
        raise ValueError("t_now precedes the stored entry")
    p, _, q_pos, q_sem = _align_batch([entry], pose_now, t_now, mlps, pe_weights, roi)
    return QuerySet(q_pos, q_sem, p, TEMPORAL)


def temporal_queries(
    queue: MemoryQueue, pose_now: EgoPose, t_now: float, mlps: MotionMlps, pe_weights: MlpWeights,
    roi: RoiBounds = RoiBounds(),
) -> QuerySet:
    entries = queue.entries()
    if not entries:
        return QuerySet.empty(pe_weights.out_dim, TEMPORAL)
    if any(t_now < e.timestamp for e in entries):
        raise ValueError("t_now precedes a stored entry")
    p, _, q_pos, q_sem = _align_batch(entries, pose_now, t_now, mlps, pe_weights, roi)
    return QuerySet(q_pos, q_sem, p, TEMPORAL, box_score=np.array([e.score for e in entries]))
