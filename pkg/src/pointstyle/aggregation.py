"""Set abstraction over the raw cloud: farthest point sampling, radius
grouping, and per-group pooling.

Stacked stages decimate the cloud into a spatially uniform representative
set, so that regions covered by many input photographs do not dominate the
feature statistics the stylization transform is fitted on. Defaults follow
the three-stage schedule (4096, r=0.05) -> (2048, r=0.1) -> (1024, r=0.2)
with group cap k=64; radii are interpreted in a scene normalized to the unit
bounding box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .point_cloud import FeaturePointCloud


@dataclass(frozen=True)
class AggregationStageConfig:
    num_samples: int
    radius: float
    max_group_size: int = 64
    pooling: str = "mean"

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValidationError(f"num_samples must be >= 1, got {self.num_samples}")
        if self.radius <= 0:
            raise ValidationError(f"radius must be > 0, got {self.radius}")
        if self.max_group_size < 1:
            raise ValidationError(f"max_group_size must be >= 1, got {self.max_group_size}")
        if self.pooling not in ("mean", "max"):
            raise ValidationError(f"pooling must be 'mean' or 'max', got {self.pooling!r}")


@dataclass(frozen=True)
class AggregationPipelineConfig:
    stages: tuple[AggregationStageConfig, ...] = (
        AggregationStageConfig(num_samples=4096, radius=0.05),
        AggregationStageConfig(num_samples=2048, radius=0.1),
        AggregationStageConfig(num_samples=1024, radius=0.2),
    )

    def __post_init__(self):
        if not self.stages:
            raise ValidationError("pipeline needs at least one stage")
        sizes = [s.num_samples for s in self.stages]
        if any(b >= a for a, b in zip(sizes, sizes[1:])):
            raise ValidationError(f"stage sample counts must strictly decrease, got {sizes}")


def farthest_point_sample(
    positions: np.ndarray, n: int, start_index: int = 0
) -> np.ndarray:
    """Greedy farthest point sampling.

    The first pick is start_index; each subsequent pick maximizes the minimum
    distance to the already-picked set, ties broken by the lowest index.
    Returns min(n, N) indices in pick order.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    total = positions.shape[0]
    if total == 0:
        raise ValidationError("cannot sample from an empty point set")
    if not 0 <= start_index < total:
        raise ValidationError(f"start_index {start_index} out of range [0, {total})")
    n = min(n, total)

    picked = np.empty(n, dtype=np.int64)
    picked[0] = start_index
    diff = positions - positions[start_index]
    min_d2 = np.einsum("ij,ij->i", diff, diff)
    for i in range(1, n):
        nxt = int(np.argmax(min_d2))
        picked[i] = nxt
        diff = positions - positions[nxt]
        np.minimum(min_d2, np.einsum("ij,ij->i", diff, diff), out=min_d2)
    return picked


class _VoxelGrid:
    """Uniform grid with cell size = query radius, for O(1)-expected ball queries."""

    def __init__(self, positions: np.ndarray, cell_size: float):
        self.positions = positions
        self.cell_size = cell_size
        self.origin = positions.min(axis=0)
        cells = np.floor((positions - self.origin) / cell_size).astype(np.int64)
        self.dims = cells.max(axis=0) + 1
        linear = (cells[:, 0] * self.dims[1] + cells[:, 1]) * self.dims[2] + cells[:, 2]
        order = np.argsort(linear, kind="stable")
        self._sorted_idx = order
        self._sorted_keys = linear[order]

    def candidates(self, center: np.ndarray) -> np.ndarray:
        """Point indices in the 3x3x3 cell neighborhood of the center."""
        cc = np.floor((center - self.origin) / self.cell_size).astype(np.int64)
        parts = []
        for dx in (-1, 0, 1):
            cx = cc[0] + dx
            if cx < 0 or cx >= self.dims[0]:
                continue
            for dy in (-1, 0, 1):
                cy = cc[1] + dy
                if cy < 0 or cy >= self.dims[1]:
                    continue
                for dz in (-1, 0, 1):
                    cz = cc[2] + dz
                    if cz < 0 or cz >= self.dims[2]:
                        continue
                    key = (cx * self.dims[1] + cy) * self.dims[2] + cz
                    lo = np.searchsorted(self._sorted_keys, key, side="left")
                    hi = np.searchsorted(self._sorted_keys, key, side="right")
                    if hi > lo:
                        parts.append(self._sorted_idx[lo:hi])
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(parts)


def ball_query(
    positions: np.ndarray,
    centroid: np.ndarray,
    radius: float,
    k: int,
    grid: _VoxelGrid | None = None,
) -> np.ndarray:
    """Up to k point indices within radius of the centroid, nearest first.

    Distance ties are broken by the lower index. If no point falls inside the
    radius, the single globally nearest point is returned, so a group is
    never empty.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if positions.shape[0] == 0:
        raise ValidationError("ball_query on an empty point set")
    if radius <= 0:
        raise ValidationError(f"radius must be > 0, got {radius}")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    centroid = np.asarray(centroid, dtype=np.float64).reshape(3)

    if grid is None:
        grid = _VoxelGrid(positions, radius)
    elif grid.cell_size < radius:
        # a finer grid's 3x3x3 neighborhood would not cover the query ball
        raise ValidationError(
            f"grid cell size {grid.cell_size} is smaller than the query radius {radius}"
        )
    cand = grid.candidates(centroid)
    cand = np.sort(cand)
    diff = positions[cand] - centroid
    d2 = np.einsum("ij,ij->i", diff, diff)
    inside = d2 <= radius * radius
    if not np.any(inside):
        # neighborhood cells are empty of hits; fall back to a global scan
        diff = positions - centroid
        d2_all = np.einsum("ij,ij->i", diff, diff)
        return np.array([int(np.argmin(d2_all))], dtype=np.int64)
    cand, d2 = cand[inside], d2[inside]
    order = np.argsort(d2, kind="stable")[:k]
    return cand[order]


def _pool(features: np.ndarray, mode: str) -> np.ndarray:
    acc = features.astype(np.float64, copy=False)
    if mode == "max":
        return acc.max(axis=0)
    return acc.mean(axis=0)


def _stage_select(
    positions: np.ndarray,
    features: np.ndarray,
    cfg: AggregationStageConfig,
    start_index: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Run one stage in the given coordinate frame.

    Returns (centroid indices into the input, pooled features per centroid).
    """
    centroids = farthest_point_sample(positions, cfg.num_samples, start_index)
    grid = _VoxelGrid(positions, cfg.radius)
    pooled = np.empty((len(centroids), features.shape[1]), dtype=np.float64)
    for row, ci in enumerate(centroids):
        group = ball_query(positions, positions[ci], cfg.radius, cfg.max_group_size, grid=grid)
        pooled[row] = _pool(features[group], cfg.pooling)
    return centroids, pooled


def _start_index(rng: np.random.Generator | None, n: int) -> int:
    if rng is None:
        return 0
    return int(rng.integers(n))


def aggregate_stage(
    cloud: FeaturePointCloud,
    cfg: AggregationStageConfig,
    seed: int | None = None,
) -> FeaturePointCloud:
    """One set-abstraction stage: FPS centroids, radius groups, pooled features.

    Output positions are the selected centroid points themselves; radii are
    interpreted in the cloud's own coordinate frame.
    """
    if len(cloud) == 0:
        raise ValidationError("cannot aggregate an empty cloud")
    rng = np.random.default_rng(seed) if seed is not None else None
    centroids, pooled = _stage_select(
        cloud.positions, cloud.features, cfg, _start_index(rng, len(cloud))
    )
    return FeaturePointCloud(
        positions=cloud.positions[centroids],
        features=pooled.astype(cloud.features.dtype),
        source_view=cloud.source_view[centroids],
    )


def aggregate_pipeline(
    cloud: FeaturePointCloud,
    cfg: AggregationPipelineConfig | None = None,
    seed: int | None = None,
) -> FeaturePointCloud:
    """Apply all stages in order, with radii measured in the unit-normalized scene.

    The scene is isotropically rescaled so its longest bounding-box edge has
    length 1 before the first stage; every stage radius lives in that frame.
    Output points keep their original world coordinates.
    """
    if cfg is None:
        cfg = AggregationPipelineConfig()
    if len(cloud) == 0:
        raise ValidationError("cannot aggregate an empty cloud")

    lo = cloud.positions.min(axis=0)
    extent = float((cloud.positions.max(axis=0) - lo).max())
    if extent <= 0:
        extent = 1.0
    norm_positions = (cloud.positions - lo) / extent

    rng = np.random.default_rng(seed) if seed is not None else None
    features = cloud.features
    kept = np.arange(len(cloud), dtype=np.int64)
    for stage_cfg in cfg.stages:
        centroids, pooled = _stage_select(
            norm_positions, features, stage_cfg, _start_index(rng, len(kept))
        )
        norm_positions = norm_positions[centroids]
        features = pooled
        kept = kept[centroids]

    return FeaturePointCloud(
        positions=cloud.positions[kept],
        features=features.astype(cloud.features.dtype),
        source_view=cloud.source_view[kept],
    )
