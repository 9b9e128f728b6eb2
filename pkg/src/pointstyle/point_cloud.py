"""World-space feature point cloud: back-projection, merging, downsampling, persistence.

The cloud is the single shared scene representation: every valid-depth pixel
of every view contributes one world point carrying that pixel's feature
vector. Positions are kept in float64 (geometry round trips need the
headroom); features keep the dtype they arrive with (float32 from files).

Cloud container on disk:

    FPCL | version u32 | N u64 | C u32 | positions f32 x 3N | features f32 x CN | source_view u32 x N
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .scene_io import CameraIntrinsics, CameraPose, DepthMap, FeatureMap, ViewData

CLOUD_MAGIC = b"FPCL"
CLOUD_VERSION = 1

_CLOUD_HEADER = struct.Struct("<4sIQI")


@dataclass(frozen=True)
class FeaturePointCloud:
    """N world-space points, each carrying a C-dimensional feature vector."""

    positions: np.ndarray  # (N, 3) float64
    features: np.ndarray  # (N, C) float32 or float64
    source_view: np.ndarray  # (N,) uint32

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        feat = np.ascontiguousarray(np.asarray(self.features))
        if feat.dtype not in (np.float32, np.float64):
            feat = feat.astype(np.float64)
        src = np.ascontiguousarray(np.asarray(self.source_view, dtype=np.uint32))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValidationError(f"positions must be (N, 3), got {pos.shape}")
        if feat.ndim != 2 or feat.shape[0] != pos.shape[0]:
            raise ValidationError(
                f"features must be (N, C) with N={pos.shape[0]}, got {feat.shape}"
            )
        if src.shape != (pos.shape[0],):
            raise ValidationError(f"source_view must be (N,), got {src.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValidationError("positions contain non-finite values")
        if not np.all(np.isfinite(feat)):
            raise ValidationError("features contain non-finite values")
        for arr in (pos, feat, src):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "features", feat)
        object.__setattr__(self, "source_view", src)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def select(self, indices: np.ndarray) -> "FeaturePointCloud":
        """Sub-cloud at the given indices, order preserved."""
        return FeaturePointCloud(
            positions=self.positions[indices],
            features=self.features[indices],
            source_view=self.source_view[indices],
        )


def empty_cloud(channels: int) -> FeaturePointCloud:
    return FeaturePointCloud(
        positions=np.empty((0, 3), dtype=np.float64),
        features=np.empty((0, channels), dtype=np.float32),
        source_view=np.empty((0,), dtype=np.uint32),
    )


def back_project(
    feature_map: FeatureMap,
    depth_map: DepthMap,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    view_index: int = 0,
) -> FeaturePointCloud:
    """Lift every valid-depth pixel of one view to a world-space feature point.

    Pixel (u, v) with depth d maps to X = R^T (d * K^-1 [u+0.5, v+0.5, 1]^T - t).
    Invalid-depth pixels (0) are skipped; an all-invalid view yields an empty
    cloud with a warning.
    """
    if (
        depth_map.height != feature_map.height
        or depth_map.width != feature_map.width
        or depth_map.height != intrinsics.height
        or depth_map.width != intrinsics.width
    ):
        raise ValidationError(
            f"grids disagree: depth {depth_map.width}x{depth_map.height}, "
            f"features {feature_map.width}x{feature_map.height}, "
            f"camera {intrinsics.width}x{intrinsics.height}"
        )

    valid = depth_map.valid_mask()
    if not np.any(valid):
        warnings.warn(f"view {view_index}: no valid depth, back-projection is empty")
        return empty_cloud(feature_map.channels)

    v_idx, u_idx = np.nonzero(valid)
    d = depth_map.values[valid].astype(np.float64)
    x_cam = (u_idx + 0.5 - intrinsics.cx) / intrinsics.fx * d
    y_cam = (v_idx + 0.5 - intrinsics.cy) / intrinsics.fy * d
    p_cam = np.stack([x_cam, y_cam, d], axis=1)
    positions = (p_cam - pose.translation) @ pose.rotation  # row-wise R^T (p - t)

    return FeaturePointCloud(
        positions=positions,
        features=feature_map.data[valid],
        source_view=np.full(len(d), view_index, dtype=np.uint32),
    )


def back_project_view(view: ViewData) -> FeaturePointCloud:
    return back_project(
        view.feature_map, view.depth_map, view.intrinsics, view.pose, view.view_index
    )


def merge(clouds: list[FeaturePointCloud]) -> FeaturePointCloud:
    """Concatenate clouds in input order; all must share the channel count."""
    if not clouds:
        raise ValidationError("merge needs at least one cloud")
    channels = {c.channels for c in clouds}
    if len(channels) != 1:
        raise ValidationError(f"clouds have mismatched channel counts: {sorted(channels)}")
    return FeaturePointCloud(
        positions=np.concatenate([c.positions for c in clouds], axis=0),
        features=np.concatenate([c.features for c in clouds], axis=0),
        source_view=np.concatenate([c.source_view for c in clouds], axis=0),
    )


def uniform_downsample(
    cloud: FeaturePointCloud, target_n: int, seed: int = 0
) -> FeaturePointCloud:
    """Uniformly random subset of size target_n, deterministic for a fixed seed.

    Returns the input unchanged when it already has <= target_n points.
    Selected indices keep their original relative order.
    """
    if target_n < 1:
        raise ValidationError(f"target_n must be >= 1, got {target_n}")
    n = len(cloud)
    if n <= target_n:
        return cloud
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.permutation(n)[:target_n])
    return cloud.select(chosen)


def save_cloud(cloud: FeaturePointCloud, path: Path | str) -> None:
    """Write the FPCL container (positions and features stored as float32)."""
    n = len(cloud)
    with open(Path(path), "wb") as f:
        f.write(_CLOUD_HEADER.pack(CLOUD_MAGIC, CLOUD_VERSION, n, cloud.channels))
        f.write(np.ascontiguousarray(cloud.positions, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(cloud.features, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(cloud.source_view, dtype="<u4").tobytes())


def load_cloud(path: Path | str) -> FeaturePointCloud:
    """Read an FPCL container written by save_cloud."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    raw = path.read_bytes()
    if len(raw) < _CLOUD_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, c = _CLOUD_HEADER.unpack_from(raw)
    if magic != CLOUD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {CLOUD_MAGIC!r}")
    if version != CLOUD_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _CLOUD_HEADER.size + 4 * (3 * n + c * n + n)
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    offset = _CLOUD_HEADER.size
    positions = np.frombuffer(raw, dtype="<f4", count=3 * n, offset=offset).reshape(n, 3)
    offset += 4 * 3 * n
    features = np.frombuffer(raw, dtype="<f4", count=c * n, offset=offset).reshape(n, c)
    offset += 4 * c * n
    source_view = np.frombuffer(raw, dtype="<u4", count=n, offset=offset)
    return FeaturePointCloud(
        positions=positions.astype(np.float64),
        features=features,
        source_view=source_view,
    )
