"""Closed-form linear stylization of point-cloud features.

The transform maps every feature f through

    f_out = uncompress(T @ compress(f - mean_content)) + mean_style

where T = coloring(style covariance) @ whitening(content covariance). The
whitening factor decorrelates the content distribution and the coloring
factor imposes the style's second-order statistics, so the transformed
features match the style covariance exactly in the full-rank, unregularized
case. Content statistics are estimated on the aggregated cloud; the
transform is applied to the full cloud. Compression (optional, PCA) runs the
matching in a low-dimensional subspace.

Serialized container:

    STFM | version u32 | C u32 | C' u32 | flags u32 (bit0: compression) |
    alpha f64 | mean_c f64 x C | mean_s f64 x C | T f64 x C'*C' |
    [projection f64 x C'*C]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .point_cloud import FeaturePointCloud
from .scene_io import FeatureMap

TRANSFORM_MAGIC = b"STFM"
TRANSFORM_VERSION = 1

_TRANSFORM_HEADER = struct.Struct("<4sIIIId")

# Relative cutoff below which an eigenvalue is treated as a degenerate mode.
_EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class StyleStats:
    """First- and second-order statistics of a feature sample set."""

    mean: np.ndarray  # (C',)
    cov: np.ndarray  # (C', C')
    n_samples: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.shape != (mean.size, mean.size):
            raise ValidationError(f"cov shape {cov.shape} does not match mean size {mean.size}")
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        if np.max(np.abs(cov - cov.T)) > 1e-8:
            raise ValidationError("covariance is not symmetric within 1e-8")
        if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -1e-8:
            raise ValidationError("covariance has an eigenvalue below -1e-8")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class CompressionBasis:
    """Orthonormal d x C projection with its transpose as the back-projection."""

    projection: np.ndarray  # (d, C)
    back_projection: np.ndarray  # (C, d)

    def __post_init__(self):
        p = np.asarray(self.projection, dtype=np.float64)
        b = np.asarray(self.back_projection, dtype=np.float64)
        d = p.shape[0]
        if b.shape != (p.shape[1], d):
            raise ValidationError("back_projection shape does not match projection")
        if np.max(np.abs(p @ b - np.eye(d))) > 1e-6:
            raise ValidationError("projection @ back_projection is not the identity within 1e-6")
        object.__setattr__(self, "projection", p)
        object.__setattr__(self, "back_projection", b)

    @property
    def dim(self) -> int:
        return self.projection.shape[0]


@dataclass(frozen=True)
class StyleTransform:
    """Ready-to-apply stylization: matrix T, channel means, optional compression, strength."""

    matrix: np.ndarray  # (C', C')
    mean_content: np.ndarray  # (C,)
    mean_style: np.ndarray  # (C,)
    basis: CompressionBasis | None = None
    alpha: float = 1.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        mc = np.asarray(self.mean_content, dtype=np.float64).reshape(-1)
        ms = np.asarray(self.mean_style, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(m)):
            raise ValidationError("transform matrix contains non-finite values")
        if mc.size != ms.size:
            raise ValidationError("content/style means have different sizes")
        inner = self.basis.dim if self.basis is not None else mc.size
        if m.shape != (inner, inner):
            raise ValidationError(f"matrix shape {m.shape}, expected ({inner}, {inner})")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must be in [0, 1], got {self.alpha}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "mean_content", mc)
        object.__setattr__(self, "mean_style", ms)

    @property
    def channels(self) -> int:
        return self.mean_content.size


def compute_stats(features: np.ndarray) -> StyleStats:
    """Mean and population covariance (1/N) of an (N, C') sample matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValidationError(f"samples must be 2-D, got shape {features.shape}")
    n = features.shape[0]
    if n < 2:
        raise ValidationError(f"need at least 2 samples for covariance, got {n}")
    mean = features.mean(axis=0)
    centered = features - mean
    cov = centered.T @ centered / n
    cov = 0.5 * (cov + cov.T)
    return StyleStats(mean=mean, cov=cov, n_samples=n)


def _default_eps(cov: np.ndarray) -> float:
    c = cov.shape[0]
    return 1e-8 * float(np.trace(cov)) / c


def _eig_power(cov: np.ndarray, eps: float | None, exponent: float) -> np.ndarray:
    """E diag((lambda + eps)^exponent) E^T, with degenerate modes floored to zero."""
    if eps is None:
        eps = _default_eps(cov)
    lam, vecs = np.linalg.eigh(cov)
    lam = np.clip(lam, 0.0, None) + eps
    floor = max(lam.max(), 0.0) * _EIG_FLOOR
    scale = np.where(lam > floor, lam, 1.0) ** exponent
    scale[lam <= floor] = 0.0
    return (vecs * scale) @ vecs.T


def whitening_matrix(stats: StyleStats, eps: float | None = None) -> np.ndarray:
    """Symmetric PSD W with W @ cov @ W^T ~ I on the non-degenerate subspace."""
    return _eig_power(stats.cov, eps, -0.5)


def coloring_matrix(stats: StyleStats, eps: float | None = None) -> np.ndarray:
    """Symmetric PSD square root: M @ M^T ~ cov."""
    return _eig_power(stats.cov, eps, 0.5)


def fit_compression(features: np.ndarray, d: int) -> CompressionBasis:
    """Top-d principal directions of the (centered) sample set."""
    features = np.asarray(features, dtype=np.float64)
    n, c = features.shape
    if d < 1 or d > c:
        raise ValidationError(f"compressed dim must be in [1, {c}], got {d}")
    if n < d:
        raise ValidationError(f"need at least {d} samples to fit a {d}-dim basis, got {n}")
    stats = compute_stats(features)
    _, vecs = np.linalg.eigh(stats.cov)
    top = vecs[:, ::-1][:, :d]  # eigh is ascending; take leading directions
    return CompressionBasis(projection=top.T, back_projection=top)


def build_transform(
    content: FeaturePointCloud,
    style: FeatureMap,
    eps: float | None = None,
    compress_dim: int | None = None,
    alpha: float = 1.0,
) -> StyleTransform:
    """Fit the stylization transform from an aggregated content cloud and a style map.

    Means are taken in the full C-dimensional space; when compress_dim is
    given, covariances (and T) live in the PCA subspace fitted on the content
    features.
    """
    if style.channels != content.channels:
        raise ValidationError(
            f"style has {style.channels} channels, content cloud has {content.channels}"
        )
    content_feat = content.features.astype(np.float64)
    style_feat = style.samples().astype(np.float64)
    mean_c = content_feat.mean(axis=0)
    mean_s = style_feat.mean(axis=0)

    centered_c = content_feat - mean_c
    centered_s = style_feat - mean_s
    basis = None
    if compress_dim is not None:
        basis = fit_compression(content_feat, compress_dim)
        centered_c = centered_c @ basis.projection.T
        centered_s = centered_s @ basis.projection.T

    stats_c = compute_stats(centered_c)
    stats_s = compute_stats(centered_s)
    matrix = coloring_matrix(stats_s, eps) @ whitening_matrix(stats_c, eps)
    return StyleTransform(
        matrix=matrix, mean_content=mean_c, mean_style=mean_s, basis=basis, alpha=alpha
    )


def apply_transform(cloud: FeaturePointCloud, xf: StyleTransform) -> FeaturePointCloud:
    """Modulate every feature of the cloud; positions are never touched.

    The strength blend is computed in the feature dtype as
    alpha * stylized + (1 - alpha) * original, so it is exactly linear in
    alpha per point.
    """
    if cloud.channels != xf.channels:
        raise ValidationError(
            f"cloud has {cloud.channels} channels, transform expects {xf.channels}"
        )
    feat = cloud.features
    g = feat.astype(np.float64) - xf.mean_content
    if xf.basis is not None:
        g = g @ xf.basis.projection.T
    h = g @ xf.matrix.T
    if xf.basis is not None:
        h = h @ xf.basis.back_projection.T
    stylized = (h + xf.mean_style).astype(feat.dtype)

    a = feat.dtype.type(xf.alpha)
    blended = a * stylized + (feat.dtype.type(1.0) - a) * feat
    return FeaturePointCloud(
        positions=cloud.positions, features=blended, source_view=cloud.source_view
    )


def save_transform(xf: StyleTransform, path: Path | str) -> None:
    """Write the STFM container so one fitted transform can be reused across renders."""
    c = xf.channels
    inner = xf.matrix.shape[0]
    flags = 1 if xf.basis is not None else 0
    with open(Path(path), "wb") as f:
        f.write(_TRANSFORM_HEADER.pack(TRANSFORM_MAGIC, TRANSFORM_VERSION, c, inner, flags, xf.alpha))
        f.write(np.ascontiguousarray(xf.mean_content, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(xf.mean_style, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(xf.matrix, dtype="<f8").tobytes())
        if xf.basis is not None:
            f.write(np.ascontiguousarray(xf.basis.projection, dtype="<f8").tobytes())


def load_transform(path: Path | str) -> StyleTransform:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    raw = path.read_bytes()
    if len(raw) < _TRANSFORM_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, c, inner, flags, alpha = _TRANSFORM_HEADER.unpack_from(raw)
    if magic != TRANSFORM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {TRANSFORM_MAGIC!r}")
    if version != TRANSFORM_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    has_basis = bool(flags & 1)
    expected = _TRANSFORM_HEADER.size + 8 * (2 * c + inner * inner + (inner * c if has_basis else 0))
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    offset = _TRANSFORM_HEADER.size
    mean_c = np.frombuffer(raw, dtype="<f8", count=c, offset=offset)
    offset += 8 * c
    mean_s = np.frombuffer(raw, dtype="<f8", count=c, offset=offset)
    offset += 8 * c
    matrix = np.frombuffer(raw, dtype="<f8", count=inner * inner, offset=offset).reshape(inner, inner)
    offset += 8 * inner * inner
    basis = None
    if has_basis:
        proj = np.frombuffer(raw, dtype="<f8", count=inner * c, offset=offset).reshape(inner, c)
        basis = CompressionBasis(projection=proj, back_projection=proj.T)
    return StyleTransform(
        matrix=matrix, mean_content=mean_c, mean_style=mean_s, basis=basis, alpha=alpha
    )
