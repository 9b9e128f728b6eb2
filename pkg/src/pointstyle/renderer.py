"""Z-buffered radius splatting of a feature point cloud into a target camera.

Every point stamps the set of pixels whose centers lie within
``splat_radius_px`` (Euclidean distance in pixel units) of its projected
position. Per pixel, up to ``zbuffer_size`` nearest-depth candidates are
retained; the output feature is either the front candidate ("nearest" blend)
or the normalized inverse-depth-weighted mean of the retained candidates
("weighted" blend).

Depth ties on a pixel are broken by the lower point index, so renders are
deterministic for a fixed input ordering and order-independent whenever
candidate depths are distinct.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .point_cloud import FeaturePointCloud
from .scene_io import CameraIntrinsics, CameraPose

Z_NEAR = 1e-4

DEPTH_SENTINEL = np.inf


@dataclass(frozen=True)
class SplatConfig:
    """Splatting parameters (defaults: 2 px radius, 128-deep z-buffer, nearest blend)."""

    splat_radius_px: float = 2.0
    zbuffer_size: int = 128
    blend: str = "nearest"
    background: float = 0.0

    def __post_init__(self):
        if self.splat_radius_px < 0:
            raise ValidationError(f"splat_radius_px must be >= 0, got {self.splat_radius_px}")
        if self.zbuffer_size < 1:
            raise ValidationError(f"zbuffer_size must be >= 1, got {self.zbuffer_size}")
        if self.blend not in ("nearest", "weighted"):
            raise ValidationError(f"blend must be 'nearest' or 'weighted', got {self.blend!r}")


@dataclass(frozen=True)
class RenderedView:
    """Projection of a cloud into one camera: data grid, coverage mask, depth buffer."""

    data: np.ndarray  # (H, W, C)
    mask: np.ndarray  # (H, W) bool
    depth: np.ndarray  # (H, W), +inf where uncovered
    intrinsics: CameraIntrinsics
    pose: CameraPose

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def project_points(
    positions: np.ndarray,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    z_near: float = Z_NEAR,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project world points into continuous pixel coordinates.

    Returns (uv (N, 2), z (N,), in_front (N,)); uv rows for points behind the
    near plane are left at 0 and flagged False.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    p_cam = positions @ pose.rotation.T + pose.translation
    z = p_cam[:, 2]
    in_front = z > z_near
    uv = np.zeros((len(z), 2), dtype=np.float64)
    zz = np.where(in_front, z, 1.0)
    uv[:, 0] = intrinsics.fx * p_cam[:, 0] / zz + intrinsics.cx
    uv[:, 1] = intrinsics.fy * p_cam[:, 1] / zz + intrinsics.cy
    uv[~in_front] = 0.0
    return uv, z, in_front


def project_point(
    point: np.ndarray,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    z_near: float = Z_NEAR,
) -> tuple[float, float, float] | None:
    """Project one world point; returns (u, v, z) or None if behind the camera."""
    uv, z, in_front = project_points(np.asarray(point).reshape(1, 3), intrinsics, pose, z_near)
    if not in_front[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1]), float(z[0])


def _splat_candidates(
    uv: np.ndarray, z: np.ndarray, radius: float, width: int, height: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Enumerate (pixel_lin, z, point_index) for all pixels each point stamps."""
    window = int(np.floor(radius + 0.5))
    base_u = np.floor(uv[:, 0]).astype(np.int64)
    base_v = np.floor(uv[:, 1]).astype(np.int64)
    idx = np.arange(len(z), dtype=np.int64)
    r2 = radius * radius

    pix_parts, z_parts, idx_parts = [], [], []
    for di in range(-window, window + 1):
        for dj in range(-window, window + 1):
            pu = base_u + di
            pv = base_v + dj
            du = pu + 0.5 - uv[:, 0]
            dv = pv + 0.5 - uv[:, 1]
            keep = (
                (pu >= 0)
                & (pu < width)
                & (pv >= 0)
                & (pv < height)
                & (du * du + dv * dv <= r2)
            )
            if not np.any(keep):
                continue
            pix_parts.append(pv[keep] * width + pu[keep])
            z_parts.append(z[keep])
            idx_parts.append(idx[keep])

    if not pix_parts:
        empty = np.empty(0, dtype=np.int64)
        return empty, np.empty(0, dtype=np.float64), empty
    return np.concatenate(pix_parts), np.concatenate(z_parts), np.concatenate(idx_parts)


def render_view(
    cloud: FeaturePointCloud,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    cfg: SplatConfig | None = None,
) -> RenderedView:
    """Splat the cloud into the target camera and resolve visibility per pixel."""
    if cfg is None:
        cfg = SplatConfig()
    if len(cloud) == 0:
        raise ValidationError("cannot render an empty cloud")

    height, width = intrinsics.height, intrinsics.width
    feat_dtype = cloud.features.dtype
    data = np.full((height * width, cloud.channels), cfg.background, dtype=feat_dtype)
    mask = np.zeros(height * width, dtype=bool)
    depth = np.full(height * width, DEPTH_SENTINEL, dtype=np.float64)

    uv, z, in_front = project_points(cloud.positions, intrinsics, pose)
    if np.any(in_front):
        pix, cz, cidx = _splat_candidates(
            uv[in_front], z[in_front], cfg.splat_radius_px, width, height
        )
        cidx = np.flatnonzero(in_front)[cidx] if not np.all(in_front) else cidx
        if len(pix):
            order = np.lexsort((cidx, cz, pix))
            pix, cz, cidx = pix[order], cz[order], cidx[order]

            group_start = np.flatnonzero(np.diff(pix, prepend=pix[0] - 1))
            covered = pix[group_start]
            mask[covered] = True
            depth[covered] = cz[group_start]

            if cfg.blend == "nearest":
                data[covered] = cloud.features[cidx[group_start]]
            else:
                counts = np.diff(np.append(group_start, len(pix)))
                rank = np.arange(len(pix)) - np.repeat(group_start, counts)
                retained = rank < cfg.zbuffer_size
                gid = np.repeat(np.arange(len(group_start)), counts)[retained]
                w = 1.0 / cz[retained]
                feat = cloud.features[cidx[retained]].astype(np.float64)
                acc = np.zeros((len(group_start), cloud.channels), dtype=np.float64)
                norm = np.zeros(len(group_start), dtype=np.float64)
                np.add.at(acc, gid, feat * w[:, None])
                np.add.at(norm, gid, w)
                data[covered] = (acc / norm[:, None]).astype(feat_dtype)

    return RenderedView(
        data=data.reshape(height, width, cloud.channels),
        mask=mask.reshape(height, width),
        depth=depth.reshape(height, width),
        intrinsics=intrinsics,
        pose=pose,
    )


def composite_over(view: RenderedView, background: np.ndarray) -> np.ndarray:
    """View data where covered, background elsewhere."""
    background = np.asarray(background)
    if background.shape != view.data.shape:
        raise ValidationError(
            f"background shape {background.shape} does not match view data {view.data.shape}"
        )
    return np.where(view.mask[:, :, None], view.data, background)
