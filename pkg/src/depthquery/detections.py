"""Scored 3D box predictions as parallel arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REG_DIM = 10  # x, y, z, w, l, h, sin(yaw), cos(yaw), vx, vy


@dataclass(eq=False)
class DetectionSet:
    scores: np.ndarray  # (n, n_classes) in [0, 1]
    centers: np.ndarray  # (n, 3) ego frame, meters
    sizes: np.ndarray  # (n, 3) w, l, h > 0
    yaws: np.ndarray  # (n,) in (-pi, pi]
    velocities: np.ndarray  # (n, 2) m/s
    logits: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.scores, axis=1) if len(self) else np.zeros(0, int)

    @property
    def top_scores(self) -> np.ndarray:
        return np.max(self.scores, axis=1) if len(self) else np.zeros(0)

    def regression_targets(self) -> np.ndarray:
        return regression_vector(self.centers, self.sizes, self.yaws, self.velocities)

    @classmethod
    def empty(cls, n_classes: int) -> "DetectionSet":
        return cls(np.zeros((0, n_classes)), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 2)))

    def to_dict(self) -> dict:
        return {
            "scores": self.scores.tolist(),
            "centers": self.centers.tolist(),
            "sizes": self.sizes.tolist(),
            "yaws": self.yaws.tolist(),
            "velocities": self.velocities.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, n_classes: int) -> "DetectionSet":
        if not d["centers"]:
            return cls.empty(n_classes)
        return cls(
            np.array(d["scores"], float), np.array(d["centers"], float), np.array(d["sizes"], float),
            np.array(d["yaws"], float), np.array(d["velocities"], float),
        )


def regression_vector(centers, sizes, yaws, velocities) -> np.ndarray:
    """Stack box attributes into the (n, 10) layout used by the L1 loss."""
    yaws = np.asarray(yaws, dtype=float)
    return np.concatenate(
        [np.asarray(centers, float), np.asarray(sizes, float), np.sin(yaws)[:, None], np.cos(yaws)[:, None],
         np.asarray(velocities, float)],
        axis=1,
    )
