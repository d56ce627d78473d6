from __future__ import annotations

import numpy as np
import pytest

from depthquery.config import PipelineConfig
from depthquery.geometry import CameraModel, camera_rotation_for_heading, translation_matrix
from depthquery.simworld import SceneConfig, generate_scene


def make_camera(fx=500.0, fy=520.0, cx=400.0, cy=160.0, heading=0.0, pos=(0.5, 0.0, 1.6), width=800, height=320):
    return CameraModel(
        fx=fx, fy=fy, cx=cx, cy=cy,
        R=camera_rotation_for_heading(heading), T=translation_matrix(pos),
        width=width, height=height,
    )


def identity_camera(fx=1.0, fy=1.0, cx=0.5, cy=0.5, width=2, height=2):
    """Camera frame == ego frame; cx/cy must sit strictly inside the image."""
    return CameraModel(fx=fx, fy=fy, cx=cx, cy=cy, R=np.eye(4), T=np.eye(4), width=width, height=height)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_camera(rng: np.random.Generator) -> CameraModel:
    w, h = int(rng.integers(200, 1600)), int(rng.integers(100, 900))
    R = np.eye(4)
    R[:3, :3] = random_rotation(rng)
    return CameraModel(
        fx=float(rng.uniform(200, 1500)), fy=float(rng.uniform(200, 1500)),
        cx=float(rng.uniform(0.3, 0.7) * w), cy=float(rng.uniform(0.3, 0.7) * h),
        R=R, T=translation_matrix(rng.uniform(-3, 3, size=3)), width=w, height=h,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def camera():
    return make_camera()


@pytest.fixture(scope="session")
def small_scene():
    return generate_scene(SceneConfig(n_frames=3), seed=5)


@pytest.fixture(scope="session")
def empty_scene():
    return generate_scene(SceneConfig(n_objects=(0, 0), n_frames=2), seed=0)


@pytest.fixture
def cfg():
    return PipelineConfig()


# acceptance criteria: one PASS/FAIL line each, echoed in the terminal summary
_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


@pytest.fixture
def criterion(request):
    lines = request.config.stash[_CRITERIA]

    def report(number: int, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        print(line)
        lines.append((number, line))
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
