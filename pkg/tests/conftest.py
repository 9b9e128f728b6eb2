import numpy as np
import pytest

from pointstyle.point_cloud import FeaturePointCloud
from pointstyle.scene_io import CameraIntrinsics, CameraPose


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix, det fixed to +1."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_pose(rng: np.random.Generator, t_scale: float = 2.0) -> CameraPose:
    return CameraPose(
        rotation=random_rotation(rng),
        translation=rng.uniform(-t_scale, t_scale, size=3),
    )


def random_intrinsics(rng: np.random.Generator) -> CameraIntrinsics:
    width = int(rng.integers(16, 256))
    height = int(rng.integers(16, 256))
    return CameraIntrinsics(
        fx=float(rng.uniform(50, 500)),
        fy=float(rng.uniform(50, 500)),
        cx=float(rng.uniform(0, width - 1e-6)),
        cy=float(rng.uniform(0, height - 1e-6)),
        width=width,
        height=height,
    )


def random_cloud(
    rng: np.random.Generator, n: int, channels: int = 3, spread: float = 1.0
) -> FeaturePointCloud:
    return FeaturePointCloud(
        positions=rng.uniform(-spread, spread, size=(n, 3)),
        features=rng.uniform(0, 1, size=(n, channels)).astype(np.float32),
        source_view=np.zeros(n, dtype=np.uint32),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)
