"""Versioned JSON formats for scenes and run reports.

Every file carries ``schema_version`` and ``kind``.  Floats are written with
``repr`` precision (JSON's default), keys are sorted, so equal inputs give
equal bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .detections import DetectionSet
from .errors import SchemaVersionError
from .geometry import CameraModel, EgoPose, RoiBounds
from .simworld import Frame, GroundTruth, Scene, SceneObject

SCHEMA_VERSION = 1


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path: str | Path, kind: str) -> dict:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise SchemaVersionError(f"{path}: not a {kind} document")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"{path}: schema_version {version!r}, expected {SCHEMA_VERSION}")
    if doc.get("kind") != kind:
        raise SchemaVersionError(f"{path}: kind {doc.get('kind')!r}, expected {kind!r}")
    return doc


def roi_to_dict(roi: RoiBounds) -> dict:
    return {"mins": list(roi.mins), "maxs": list(roi.maxs)}


def roi_from_dict(d: dict) -> RoiBounds:
    return RoiBounds(tuple(float(x) for x in d["mins"]), tuple(float(x) for x in d["maxs"]))


def scene_to_dict(scene: Scene) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "scene",
        "seed": scene.seed,
        "roi": roi_to_dict(scene.roi),
        "rig": [cam.to_dict() for cam in scene.rig],
        "frames": [{"timestamp": f.timestamp, "pose": f.pose.matrix.tolist()} for f in scene.frames],
        "objects": [
            {
                "id": o.id,
                "class_id": o.class_id,
                "center0": o.center0.tolist(),
                "size": o.size.tolist(),
                "yaw": float(o.yaw),
                "velocity": o.velocity.tolist(),
            }
            for o in scene.objects
        ],
    }


def scene_from_dict(doc: dict) -> Scene:
    frames = [Frame(float(f["timestamp"]), EgoPose(np.array(f["pose"], float), float(f["timestamp"]))) for f in doc["frames"]]
    objects = [
        SceneObject(
            int(o["id"]), int(o["class_id"]), np.array(o["center0"], float), np.array(o["size"], float),
            float(o["yaw"]), np.array(o["velocity"], float),
        )
        for o in doc["objects"]
    ]
    rig = [CameraModel.from_dict(c) for c in doc["rig"]]
    return Scene(frames=frames, objects=objects, rig=rig, seed=int(doc["seed"]), roi=roi_from_dict(doc["roi"]))


def save_scene(scene: Scene, path: str | Path) -> None:
    write_json(path, scene_to_dict(scene))


def load_scene(path: str | Path) -> Scene:
    return scene_from_dict(read_json(path, "scene"))


def gt_to_dict(gt: GroundTruth) -> dict:
    return {
        "ids": gt.ids.tolist(),
        "classes": gt.classes.tolist(),
        "centers": gt.centers.tolist(),
        "sizes": gt.sizes.tolist(),
        "yaws": gt.yaws.tolist(),
        "velocities": gt.velocities.tolist(),
    }


def gt_from_dict(d: dict) -> GroundTruth:
    if not d["ids"]:
        return GroundTruth.empty()
    return GroundTruth(
        np.array(d["ids"], int), np.array(d["classes"], int), np.array(d["centers"], float),
        np.array(d["sizes"], float), np.array(d["yaws"], float), np.array(d["velocities"], float),
    )


def report_to_dict(result, cfg_dict: dict, scene_seed: int) -> dict:
    """Run report for a :class:`~depthquery.pipeline.SequenceResult`; timings are left out."""
    frames = []
    for r in result.frames:
        frames.append(
            {
                "frame_index": r.frame_index,
                "timestamp": r.timestamp,
                "n_depth_guided": r.n_depth_guided,
                "n_temporal": r.n_temporal,
                "n_decoded": r.n_decoded,
                "memory_size": r.memory_size,
                "detections": r.detections.to_dict(),
                "loss": r.loss.to_dict(),
                "ref_points": np.asarray(r.ref_points).reshape(-1, 3).tolist(),
                "gt": gt_to_dict(r.gt),
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "report",
        "scene_seed": scene_seed,
        "config": cfg_dict,
        "weights_checksum": result.weights_checksum,
        "peak_memory": result.peak_memory,
        "mAP": result.ap.mAP,
        "ap": result.ap.to_dict()["ap"],
        "frames": frames,
    }


def timings_to_dict(result) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "timings",
        "frames": [{"frame_index": r.frame_index, "timing_ms": r.timing_ms} for r in result.frames],
    }


def load_report(path: str | Path) -> dict:
    return read_json(path, "report")


def report_detections(doc: dict) -> tuple[list[DetectionSet], list[GroundTruth]]:
    n_classes = int(doc["config"]["n_classes"])
    dets = [DetectionSet.from_dict(f["detections"], n_classes) for f in doc["frames"]]
    gts = [gt_from_dict(f["gt"]) for f in doc["frames"]]
    return dets, gts
