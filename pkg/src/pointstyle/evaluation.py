"""Cross-view consistency metrics and synthetic test scenes.

The headline metric warps a render at view v' into view v using v's depth as
proxy geometry, masks pixels that fail a relative depth-consistency check,
and scores the masked RMSE between the warped and in-place renders. Cameras
t-1 vs t ("short") and t-7 vs t ("long") form the two standard protocols.

Synthetic scenes (textured cube or plane, cameras on an arc) provide exact
analytic depth with no reconstruction noise, so geometric properties can be
asserted at tight tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MetricUndefinedError, ValidationError
from .point_cloud import FeaturePointCloud
from .renderer import RenderedView, SplatConfig, Z_NEAR, render_view
from .scene_io import (
    CameraIntrinsics,
    CameraPose,
    DepthMap,
    FeatureMap,
    SceneManifest,
    SceneView,
    load_view_data,
    save_depth_map,
    save_image,
    save_manifest,
)


@dataclass(frozen=True)
class WarpResult:
    """A source view resampled into a target camera, with its validity mask."""

    warped: np.ndarray  # (H, W, C), 0 where invalid
    mask: np.ndarray  # (H, W) bool


@dataclass(frozen=True)
class PairResult:
    view_a: int  # target view v
    view_b: int  # warped-in view v'
    offset: int
    masked_rmse: float
    valid_fraction: float


@dataclass(frozen=True)
class ConsistencyReport:
    pairs: tuple[PairResult, ...]
    mean_by_offset: dict[int, float]
    protocol: str

    def to_text(self) -> str:
        lines = [f"protocol: {self.protocol}"]
        lines.append(f"{'view_a':>6} {'view_b':>6} {'offset':>6} {'rmse':>12} {'valid_frac':>10}")
        for p in self.pairs:
            lines.append(
                f"{p.view_a:>6} {p.view_b:>6} {p.offset:>6} {p.masked_rmse:>12.6f} {p.valid_fraction:>10.4f}"
            )
        for off in sorted(self.mean_by_offset):
            lines.append(f"mean offset {off}: {self.mean_by_offset[off]:.6f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["view_a,view_b,offset,masked_rmse,valid_fraction"]
        for p in self.pairs:
            rows.append(
                f"{p.view_a},{p.view_b},{p.offset},{p.masked_rmse:.9f},{p.valid_fraction:.9f}"
            )
        return "\n".join(rows) + "\n"


_WEIGHT_FLOOR = 1e-9


def bilinear_sample(
    data: np.ndarray, valid: np.ndarray, us: np.ndarray, vs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Sample a grid at continuous pixel positions (top-left origin, centers at +0.5).

    A sample is valid when every tap carrying material weight (> 1e-9) is in
    bounds and flagged valid; zero-weight taps cannot invalidate it, so
    sampling exactly at a covered pixel's center is always valid and exact.
    Returns (values (N, C), ok (N,)); invalid rows are zero-filled.
    """
    h, w = data.shape[:2]
    squeeze = data.ndim == 2
    grid = data[:, :, None] if squeeze else data

    x = np.asarray(us, dtype=np.float64) - 0.5
    y = np.asarray(vs, dtype=np.float64) - 0.5
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0

    taps = (
        (x0, y0, (1 - fx) * (1 - fy)),
        (x0 + 1, y0, fx * (1 - fy)),
        (x0, y0 + 1, (1 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    )
    n = len(x)
    ok = np.ones(n, dtype=bool)
    acc = np.zeros((n, grid.shape[2]), dtype=np.float64)
    wsum = np.zeros(n, dtype=np.float64)
    for xi, yi, weight in taps:
        material = weight > _WEIGHT_FLOOR
        in_bounds = (xi >= 0) & (xi <= w - 1) & (yi >= 0) & (yi <= h - 1)
        xc = np.clip(xi, 0, w - 1)
        yc = np.clip(yi, 0, h - 1)
        tap_valid = in_bounds & valid[yc, xc]
        ok &= ~material | tap_valid
        use = material & tap_valid
        acc[use] += grid[yc[use], xc[use]] * weight[use, None]
        wsum[use] += weight[use]

    ok &= wsum > 0
    values = np.zeros_like(acc)
    values[ok] = acc[ok] / wsum[ok, None]
    if squeeze:
        values = values[:, 0]
    return values, ok


def warp_view(
    source: RenderedView,
    target_intrinsics: CameraIntrinsics,
    target_pose: CameraPose,
    target_depth: DepthMap,
    tau: float = 0.01,
) -> WarpResult:
    """Resample the source render into the target camera via the target's depth.

    Each valid-depth target pixel back-projects to a world point, projects
    into the source camera, and is kept only if the projected depth agrees
    with the source depth buffer within tau (relative). An empty mask is a
    legal result.
    """
    if (
        target_depth.height != target_intrinsics.height
        or target_depth.width != target_intrinsics.width
    ):
        raise ValidationError("target depth does not match target camera size")
    h, w = target_depth.height, target_depth.width
    c = source.channels
    warped = np.zeros((h, w, c), dtype=np.float64)
    mask = np.zeros((h, w), dtype=bool)

    dvalid = target_depth.valid_mask()
    if not np.any(dvalid):
        return WarpResult(warped=warped, mask=mask)
    v_idx, u_idx = np.nonzero(dvalid)
    d = target_depth.values[dvalid].astype(np.float64)

    # back-project through the target camera
    k = target_intrinsics
    x_cam = (u_idx + 0.5 - k.cx) / k.fx * d
    y_cam = (v_idx + 0.5 - k.cy) / k.fy * d
    p_cam = np.stack([x_cam, y_cam, d], axis=1)
    world = (p_cam - target_pose.translation) @ target_pose.rotation

    # project into the source camera
    sk, sp = source.intrinsics, source.pose
    p_src = world @ sp.rotation.T + sp.translation
    z = p_src[:, 2]
    in_front = z > Z_NEAR
    zz = np.where(in_front, z, 1.0)
    us = sk.fx * p_src[:, 0] / zz + sk.cx
    vs = sk.fy * p_src[:, 1] / zz + sk.cy

    depth_grid = np.where(source.mask, source.depth, 0.0)  # keep inf out of the math
    sampled_depth, depth_ok = bilinear_sample(depth_grid, source.mask, us, vs)
    values, value_ok = bilinear_sample(source.data, source.mask, us, vs)
    consistent = np.abs(z - sampled_depth) <= tau * z
    ok = in_front & depth_ok & value_ok & consistent

    flat = v_idx * w + u_idx
    mask.reshape(-1)[flat[ok]] = True
    warped.reshape(h * w, c)[flat[ok]] = values[ok]
    return WarpResult(warped=warped, mask=mask)


def warping_error(
    target: RenderedView,
    source: RenderedView,
    target_depth: DepthMap,
    tau: float = 0.01,
) -> tuple[float, float]:
    """Masked RMSE between a view and another view warped into it.

    Valid pixels are the warp mask intersected with the target's coverage.
    Returns (rmse, valid_fraction); raises MetricUndefinedError when no pixel
    is valid.
    """
    if target.channels != source.channels:
        raise ValidationError("views have different channel counts")
    result = warp_view(source, target.intrinsics, target.pose, target_depth, tau)
    mask = result.mask & target.mask
    n_valid = int(mask.sum())
    if n_valid == 0:
        raise MetricUndefinedError("warping error undefined: no valid pixels after masking")
    diff = target.data.astype(np.float64)[mask] - result.warped[mask]
    rmse = float(np.sqrt(np.mean(diff * diff)))
    return rmse, n_valid / mask.size


@dataclass(frozen=True)
class ProtocolConfig:
    splat: SplatConfig = field(default_factory=SplatConfig)
    tau: float = 0.01
    clamp: tuple[float, float] | None = None  # set to (0, 1) for RGB scoring


def _clamped(view: RenderedView, clamp: tuple[float, float] | None) -> RenderedView:
    if clamp is None:
        return view
    return RenderedView(
        data=np.clip(view.data, clamp[0], clamp[1]),
        mask=view.mask,
        depth=view.depth,
        intrinsics=view.intrinsics,
        pose=view.pose,
    )


def run_protocol(
    scene: SceneManifest,
    cloud: FeaturePointCloud,
    offsets: list[int],
    cfg: ProtocolConfig | None = None,
) -> ConsistencyReport:
    """Render the stylized cloud at every scene view and score (t-o, t) pairs.

    For each offset o, every ordered pair (t-o, t) contributes one warping
    error; per-offset means aggregate the rows.
    """
    if cfg is None:
        cfg = ProtocolConfig()
    offsets = sorted(set(int(o) for o in offsets))
    if not offsets or offsets[0] < 1:
        raise ValidationError(f"offsets must be positive, got {offsets}")
    n_views = len(scene.views)
    if n_views < max(offsets) + 1:
        raise ValidationError(
            f"protocol with max offset {max(offsets)} needs {max(offsets) + 1} views, "
            f"scene has {n_views}"
        )

    views = [load_view_data(scene, i) for i in range(n_views)]
    renders = [
        _clamped(render_view(cloud, v.intrinsics, v.pose, cfg.splat), cfg.clamp)
        for v in views
    ]

    pairs = []
    sums: dict[int, float] = {o: 0.0 for o in offsets}
    counts: dict[int, int] = {o: 0 for o in offsets}
    for offset in offsets:
        for t in range(offset, n_views):
            src = t - offset
            rmse, frac = warping_error(
                renders[t], renders[src], views[t].depth_map, cfg.tau
            )
            pairs.append(
                PairResult(
                    view_a=t, view_b=src, offset=offset, masked_rmse=rmse, valid_fraction=frac
                )
            )
            sums[offset] += rmse
            counts[offset] += 1

    mean_by_offset = {o: sums[o] / counts[o] for o in offsets}
    protocol = {(1,): "short", (7,): "long"}.get(tuple(offsets), "custom")
    return ConsistencyReport(pairs=tuple(pairs), mean_by_offset=mean_by_offset, protocol=protocol)


def gram_matrix(fmap: FeatureMap) -> np.ndarray:
    """Channel inner-product matrix averaged over spatial positions: X^T X / (H*W)."""
    x = fmap.samples().astype(np.float64)
    return x.T @ x / x.shape[0]


def gram_distance(a: FeatureMap, b: FeatureMap) -> float:
    """Frobenius distance between the two maps' gram matrices."""
    if a.channels != b.channels:
        raise ValidationError(f"channel mismatch: {a.channels} vs {b.channels}")
    return float(np.linalg.norm(gram_matrix(a) - gram_matrix(b)))


# ------------------------------------------------------------------
# Synthetic scenes
# ------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Recipe for an analytic fixture scene.

    Cameras sit on an arc of ``arc_degrees`` total sweep at ``distance`` from
    the origin, slightly above the object, all looking at the origin. World
    axes follow the camera convention (y down).
    """

    shape: str = "cube"
    texture: str = "gradient"
    n_views: int = 3
    resolution: int = 64
    seed: int = 0
    arc_degrees: float = 30.0
    distance: float = 2.5
    elevation: float = -0.35  # camera height as a fraction of distance (y is down)
    half_extent: float = 0.5

    def __post_init__(self):
        if self.shape not in ("cube", "plane"):
            raise ValidationError(f"shape must be 'cube' or 'plane', got {self.shape!r}")
        if self.texture not in ("checker", "gradient"):
            raise ValidationError(f"texture must be 'checker' or 'gradient', got {self.texture!r}")
        if self.n_views < 1:
            raise ValidationError("n_views must be >= 1")
        if self.resolution < 4:
            raise ValidationError("resolution must be >= 4")


@dataclass(frozen=True)
class SceneGeometry:
    """Analytic ground truth backing a synthetic scene."""

    spec: SyntheticSceneSpec
    cameras: tuple[tuple[CameraIntrinsics, CameraPose], ...]

    def depth_map(self, intrinsics: CameraIntrinsics, pose: CameraPose) -> DepthMap:
        return DepthMap(_ray_cast_depth(self.spec, intrinsics, pose))

    def colors(self, points: np.ndarray) -> np.ndarray:
        return texture_colors(self.spec.texture, points, self.spec.half_extent)

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance from each point to the analytic surface."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        h = self.spec.half_extent
        if self.spec.shape == "plane":
            inside = (np.abs(points[:, 0]) <= h) & (np.abs(points[:, 1]) <= h)
            d = np.abs(points[:, 2])
            return np.where(inside, d, np.inf)
        q = np.abs(points) - h
        outside = np.linalg.norm(np.clip(q, 0.0, None), axis=1)
        inside = np.clip(q.max(axis=1), None, 0.0)
        return np.abs(outside + inside)


def _look_at_pose(position: np.ndarray, target: np.ndarray) -> CameraPose:
    """World-to-camera pose looking from position toward target, world y as down."""
    forward = target - position
    forward = forward / np.linalg.norm(forward)
    world_down = np.array([0.0, 1.0, 0.0])
    right = np.cross(world_down, forward)
    nr = np.linalg.norm(right)
    if nr < 1e-9:  # looking straight up/down; pick an arbitrary right
        right = np.array([1.0, 0.0, 0.0])
    else:
        right = right / nr
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward], axis=0)
    translation = -rotation @ position
    return CameraPose(rotation=rotation, translation=translation)


def _arc_cameras(spec: SyntheticSceneSpec) -> list[tuple[CameraIntrinsics, CameraPose]]:
    res = spec.resolution
    intr = CameraIntrinsics(
        fx=float(res), fy=float(res), cx=res / 2.0, cy=res / 2.0, width=res, height=res
    )
    if spec.n_views == 1:
        angles = [0.0]
    else:
        half = math.radians(spec.arc_degrees) / 2.0
        angles = list(np.linspace(-half, half, spec.n_views))
    cams = []
    y = spec.elevation * spec.distance
    radius = spec.distance * math.sqrt(max(0.0, 1.0 - spec.elevation**2))
    for theta in angles:
        position = np.array([radius * math.sin(theta), y, -radius * math.cos(theta)])
        cams.append((intr, _look_at_pose(position, np.zeros(3))))
    return cams


def _ray_cast_depth(
    spec: SyntheticSceneSpec, intrinsics: CameraIntrinsics, pose: CameraPose
) -> np.ndarray:
    """Exact z-depth of the first surface hit per pixel (0 where the ray misses)."""
    h, w = intrinsics.height, intrinsics.width
    us, vs = np.meshgrid(np.arange(w), np.arange(h))
    d_cam = np.stack(
        [
            (us.ravel() + 0.5 - intrinsics.cx) / intrinsics.fx,
            (vs.ravel() + 0.5 - intrinsics.cy) / intrinsics.fy,
            np.ones(h * w),
        ],
        axis=1,
    )
    origin = pose.camera_center()
    dirs = d_cam @ pose.rotation  # rows R^T d; z-component of d_cam is 1, so the
    # ray parameter equals z-depth directly
    he = spec.half_extent

    if spec.shape == "plane":
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(np.abs(dz) > 1e-12, -origin[2] / dz, np.inf)
        hit = s > Z_NEAR
        px = origin[0] + s * dirs[:, 0]
        py = origin[1] + s * dirs[:, 1]
        hit &= (np.abs(px) <= he) & (np.abs(py) <= he)
        depth = np.where(hit, s, 0.0)
        return depth.reshape(h, w).astype(np.float32)

    # slab intersection with the axis-aligned cube [-he, he]^3
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(np.abs(dirs) > 1e-12, 1.0 / dirs, np.inf)
    t1 = (-he - origin) * inv
    t2 = (he - origin) * inv
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    # axes with zero direction hit the slab iff the origin lies inside it
    parallel_ok = (np.abs(dirs) > 1e-12) | (
        (np.abs(origin) <= he)[None, :] & np.isinf(inv)
    )
    t_enter = near.max(axis=1)
    t_exit = far.min(axis=1)
    hit = (t_exit >= t_enter) & (t_enter > Z_NEAR) & parallel_ok.all(axis=1)
    depth = np.where(hit, t_enter, 0.0)
    return depth.reshape(h, w).astype(np.float32)


def texture_colors(kind: str, points: np.ndarray, half_extent: float = 0.5) -> np.ndarray:
    """RGB color of the analytic texture at each world point."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if kind == "checker":
        period = half_extent / 2.0
        # lattice offset keeps surfaces mid-cell, so parity is stable under
        # float noise in coordinates that sit exactly on a face plane
        parity = np.floor((points - period / 2.0) / period).sum(axis=1).astype(np.int64) % 2
        a = np.array([0.85, 0.2, 0.15])
        b = np.array([0.15, 0.3, 0.85])
        return np.where(parity[:, None] == 0, a, b)
    # smooth affine gradient: continuous across faces, spans well inside [0, 1]
    scale = 0.6 / half_extent
    return np.clip(0.5 + points * scale * 0.5, 0.05, 0.95)


def make_synthetic_scene(
    spec: SyntheticSceneSpec, out_dir: Path | str
) -> tuple[SceneManifest, SceneGeometry]:
    """Generate an RGB-mode fixture scene on disk: PNG images, DMAP depths, manifest.

    Depth maps are exact analytic z-depths; images render the analytic
    texture at the same pixel centers the depth was cast through.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "depth").mkdir(parents=True, exist_ok=True)

    cameras = tuple(_arc_cameras(spec))
    geometry = SceneGeometry(spec=spec, cameras=cameras)

    views = []
    for i, (intr, pose) in enumerate(cameras):
        depth = geometry.depth_map(intr, pose)
        h, w = depth.height, depth.width
        image = np.zeros((h, w, 3), dtype=np.float64)
        valid = depth.valid_mask()
        if np.any(valid):
            v_idx, u_idx = np.nonzero(valid)
            d = depth.values[valid].astype(np.float64)
            x_cam = (u_idx + 0.5 - intr.cx) / intr.fx * d
            y_cam = (v_idx + 0.5 - intr.cy) / intr.fy * d
            p_cam = np.stack([x_cam, y_cam, d], axis=1)
            world = (p_cam - pose.translation) @ pose.rotation
            image[valid] = geometry.colors(world)

        image_path = out_dir / "images" / f"view_{i:03d}.png"
        depth_path = out_dir / "depth" / f"view_{i:03d}.dmap"
        save_image(image, image_path)
        save_depth_map(depth, depth_path)
        views.append(
            SceneView(image_path=image_path, depth_path=depth_path, intrinsics=intr, pose=pose)
        )

    manifest = SceneManifest(
        name=f"{spec.shape}-{spec.texture}", mode="rgb", views=tuple(views)
    )
    save_manifest(manifest, out_dir / "scene.manifest")
    return manifest, geometry
