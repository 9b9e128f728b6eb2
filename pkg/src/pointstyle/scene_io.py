"""On-disk formats: scene manifests, cameras, depth maps, images, feature maps.

All binary containers are little-endian. Two magics share one layout:

    FMAP | version u32 | H u32 | W u32 | C u32 | payload float32 (H*W*C, row-major, channel-interleaved)
    DMAP | same header with C == 1 | payload float32 (depth, 0 marks invalid pixels)

Images are 8-bit RGB PNG. The manifest is a hand-editable text format, one
``key: value`` pair per line, with each view introduced by a bare ``view:``
line (see ``save_manifest`` for the exact shape).
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, ManifestError, ValidationError

FMAP_MAGIC = b"FMAP"
DMAP_MAGIC = b"DMAP"
FORMAT_VERSION = 1

ORTHONORMAL_TOL = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units.

    Projection convention: a world point X maps to camera coordinates
    x_cam = R @ X + t (z forward, positive), then to the continuous pixel
    position (fx * x/z + cx, fy * y/z + cy). The center of integer pixel
    (u, v) sits at continuous position (u + 0.5, v + 0.5).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width):
            raise ValidationError(f"cx={self.cx} outside [0, {self.width})")
        if not (0 <= self.cy < self.height):
            raise ValidationError(f"cy={self.cy} outside [0, {self.height})")

    def matrix(self) -> np.ndarray:
        """3x3 K matrix."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )

    def downscaled(self, factor: int) -> "CameraIntrinsics":
        """Intrinsics for an image shrunk by an integer factor.

        Requires width and height to be exact multiples of the factor so
        that pixel centers of the coarse grid stay aligned with the fine one.
        """
        if self.width % factor or self.height % factor:
            raise ValidationError(
                f"image size {self.width}x{self.height} not divisible by scale factor {factor}"
            )
        return CameraIntrinsics(
            fx=self.fx / factor,
            fy=self.fy / factor,
            cx=self.cx / factor,
            cy=self.cy / factor,
            width=self.width // factor,
            height=self.height // factor,
        )


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform: x_cam = rotation @ X_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHONORMAL_TOL:
            raise ValidationError("rotation is not orthonormal within 1e-6")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise ValidationError("rotation determinant is not +1 within 1e-6")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates: -R^T @ t."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel z-depth (distance along the optical axis, world units).

    A value of 0 marks an invalid pixel; valid values are finite and > 0.
    """

    values: np.ndarray  # (H, W) float32

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if v.ndim != 2:
            raise ValidationError(f"depth map must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("depth map contains non-finite values")
        if np.any(v < 0):
            raise ValidationError("depth map contains negative values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def valid_mask(self) -> np.ndarray:
        return self.values > 0

    def downsampled(self, factor: int) -> "DepthMap":
        """Nearest-neighbor downsample by an integer factor (for feature-resolution alignment)."""
        if self.height % factor or self.width % factor:
            raise ValidationError(
                f"depth size {self.width}x{self.height} not divisible by {factor}"
            )
        return DepthMap(self.values[factor // 2 :: factor, factor // 2 :: factor])


@dataclass(frozen=True)
class FeatureMap:
    """H x W grid of C-dimensional features (C=3 for RGB mode, 256 for feature mode)."""

    data: np.ndarray  # (H, W, C) float32

    def __post_init__(self):
        d = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        if d.ndim != 3:
            raise ValidationError(f"feature map must be H x W x C, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValidationError("feature map contains non-finite values")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def samples(self) -> np.ndarray:
        """All spatial positions flattened to an (H*W, C) sample matrix."""
        return self.data.reshape(-1, self.data.shape[2])


@dataclass(frozen=True)
class SceneView:
    """One calibrated input view of the scene."""

    image_path: Path
    depth_path: Path
    intrinsics: CameraIntrinsics
    pose: CameraPose
    feature_path: Path | None = None
    feature_scale: int = 1


@dataclass(frozen=True)
class SceneManifest:
    """A named scene: ordered views plus the operating mode ('rgb' or 'feature')."""

    name: str
    mode: str
    views: tuple[SceneView, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.mode not in ("rgb", "feature"):
            raise ValidationError(f"mode must be 'rgb' or 'feature', got {self.mode!r}")
        if len(self.views) < 1:
            raise ValidationError("manifest must contain at least one view")


# ------------------------------------------------------------------
# Binary grid container (shared by FMAP and DMAP)
# ------------------------------------------------------------------

_HEADER = struct.Struct("<4sIIII")


def _write_grid(path: Path, magic: bytes, array: np.ndarray) -> None:
    h, w, c = array.shape
    payload = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(magic, FORMAT_VERSION, h, w, c))
        f.write(payload.tobytes())


def _read_grid(path: Path, magic: bytes) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    got_magic, version, h, w, c = _HEADER.unpack_from(raw)
    if got_magic != magic:
        raise FormatError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * h * w * c
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw) - _HEADER.size} bytes, expected {4 * h * w * c}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(h, w, c)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: payload contains non-finite values")
    return data


STANDARD_CHANNEL_COUNTS = (3, 256)


def save_feature_map(fmap: FeatureMap, path: Path | str) -> None:
    """Write an FMAP file; round-trips bit-exactly through load_feature_map."""
    _write_grid(Path(path), FMAP_MAGIC, fmap.data)


def load_feature_map(path: Path | str) -> FeatureMap:
    """Read an FMAP file written by save_feature_map.

    Any channel count loads, but values outside the standard ones (3 for
    RGB, 256 for the default feature mode) are flagged with a warning.
    """
    fmap = FeatureMap(_read_grid(Path(path), FMAP_MAGIC))
    if fmap.channels not in STANDARD_CHANNEL_COUNTS:
        warnings.warn(
            f"{path}: nonstandard channel count {fmap.channels} "
            f"(standard: {STANDARD_CHANNEL_COUNTS})"
        )
    return fmap


def save_depth_map(depth: DepthMap, path: Path | str) -> None:
    """Write a DMAP file (FMAP layout with C=1)."""
    _write_grid(Path(path), DMAP_MAGIC, depth.values[:, :, None])


def load_depth_map(path: Path | str) -> DepthMap:
    """Read a DMAP file written by save_depth_map."""
    data = _read_grid(Path(path), DMAP_MAGIC)
    if data.shape[2] != 1:
        raise FormatError(f"{path}: depth container must have C=1, got C={data.shape[2]}")
    return DepthMap(data[:, :, 0])


# ------------------------------------------------------------------
# Images
# ------------------------------------------------------------------


def save_image(data: np.ndarray, path: Path | str) -> None:
    """Write an (H, W, 3) float array in [0, 1] as an 8-bit RGB PNG.

    Values are clamped to [0, 1] before quantization; this is the one place
    RGB-mode features are clamped.
    """
    arr = np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0)
    quantized = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(Path(path), format="PNG")


def load_image(path: Path | str) -> np.ndarray:
    """Read an 8-bit RGB PNG into an (H, W, 3) float32 array in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32)
    return rgb / np.float32(255.0)


# ------------------------------------------------------------------
# Manifest
# ------------------------------------------------------------------

_VIEW_KEYS = {
    "image",
    "depth",
    "feature",
    "feature_scale",
    "width",
    "height",
    "fx",
    "fy",
    "cx",
    "cy",
    "rotation",
    "translation",
}


def save_manifest(manifest: SceneManifest, path: Path | str) -> None:
    """Write the manifest as hand-editable text.

    Paths are stored relative to the manifest file when possible.
    """
    path = Path(path)
    base = path.parent
    lines = [f"scene: {manifest.name}", f"mode: {manifest.mode}", ""]

    def rel(p: Path) -> str:
        try:
            return p.resolve().relative_to(base.resolve()).as_posix()
        except ValueError:
            return p.as_posix()

    for view in manifest.views:
        k = view.intrinsics
        lines.append("view:")
        lines.append(f"  image: {rel(view.image_path)}")
        lines.append(f"  depth: {rel(view.depth_path)}")
        if view.feature_path is not None:
            lines.append(f"  feature: {rel(view.feature_path)}")
            lines.append(f"  feature_scale: {view.feature_scale}")
        lines.append(f"  width: {int(k.width)}")
        lines.append(f"  height: {int(k.height)}")
        lines.append(f"  fx: {float(k.fx)!r}")
        lines.append(f"  fy: {float(k.fy)!r}")
        lines.append(f"  cx: {float(k.cx)!r}")
        lines.append(f"  cy: {float(k.cy)!r}")
        r = view.pose.rotation.reshape(-1)
        t = view.pose.translation
        lines.append("  rotation: " + " ".join(repr(float(x)) for x in r))
        lines.append("  translation: " + " ".join(repr(float(x)) for x in t))
        lines.append("")
    path.write_text("\n".join(lines), encoding="utf-8")


def load_manifest(path: Path | str) -> SceneManifest:
    """Parse and fully validate a scene manifest.

    Raises ManifestError on missing files, malformed fields, non-orthonormal
    rotations, or depth/feature dimension mismatches.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"no such manifest: {path}")
    base = path.parent

    name = None
    mode = None
    view_dicts: list[dict[str, str]] = []
    current: dict[str, str] | None = None

    for lineno, raw_line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ManifestError(f"{path}:{lineno}: expected 'key: value', got {line!r}")
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if key == "view":
            current = {}
            view_dicts.append(current)
        elif key == "scene":
            name = value
        elif key == "mode":
            mode = value
        elif key in _VIEW_KEYS:
            if current is None:
                raise ManifestError(f"{path}:{lineno}: view key {key!r} before any 'view:' line")
            current[key] = value
        else:
            raise ManifestError(f"{path}:{lineno}: unknown key {key!r}")

    if name is None:
        raise ManifestError(f"{path}: missing 'scene' entry")
    if mode is None:
        raise ManifestError(f"{path}: missing 'mode' entry")
    if mode not in ("rgb", "feature"):
        raise ManifestError(f"{path}: mode must be 'rgb' or 'feature', got {mode!r}")

    views = []
    for i, vd in enumerate(view_dicts):
        try:
            views.append(_parse_view(vd, base, mode, i))
        except (ValidationError, KeyError, ValueError) as exc:
            raise ManifestError(f"{path}: view {i}: {exc}") from exc

    try:
        manifest = SceneManifest(name=name, mode=mode, views=tuple(views))
    except ValidationError as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    _validate_view_files(manifest)
    return manifest


def _parse_view(vd: dict[str, str], base: Path, mode: str, index: int) -> SceneView:
    def need(key: str) -> str:
        if key not in vd:
            raise KeyError(f"missing key {key!r}")
        return vd[key]

    intr = CameraIntrinsics(
        fx=float(need("fx")),
        fy=float(need("fy")),
        cx=float(need("cx")),
        cy=float(need("cy")),
        width=int(need("width")),
        height=int(need("height")),
    )
    rot = np.array([float(x) for x in need("rotation").split()], dtype=np.float64)
    if rot.size != 9:
        raise ValueError(f"rotation needs 9 numbers, got {rot.size}")
    trans = np.array([float(x) for x in need("translation").split()], dtype=np.float64)
    if trans.size != 3:
        raise ValueError(f"translation needs 3 numbers, got {trans.size}")
    pose = CameraPose(rotation=rot.reshape(3, 3), translation=trans)

    feature_path = None
    feature_scale = 1
    if mode == "feature":
        feature_path = base / need("feature")
        feature_scale = int(need("feature_scale"))
        if feature_scale < 1:
            raise ValueError(f"feature_scale must be >= 1, got {feature_scale}")
    elif "feature" in vd:
        feature_path = base / vd["feature"]

    return SceneView(
        image_path=base / need("image"),
        depth_path=base / need("depth"),
        intrinsics=intr,
        pose=pose,
        feature_path=feature_path,
        feature_scale=feature_scale,
    )


def _validate_view_files(manifest: SceneManifest) -> None:
    for i, view in enumerate(manifest.views):
        for label, p in (("image", view.image_path), ("depth", view.depth_path)):
            if not Path(p).is_file():
                raise ManifestError(f"view {i}: missing {label} file: {p}")
        if manifest.mode == "feature":
            if view.feature_path is None or not Path(view.feature_path).is_file():
                raise ManifestError(f"view {i}: missing feature file: {view.feature_path}")


@dataclass(frozen=True)
class ViewData:
    """A view's pixel data and camera, resolved to back-projection resolution.

    In feature mode the depth map is nearest-neighbor downsampled and the
    intrinsics rescaled so that all three grids align exactly.
    """

    feature_map: FeatureMap
    depth_map: DepthMap
    intrinsics: CameraIntrinsics
    pose: CameraPose
    view_index: int


def load_view_data(manifest: SceneManifest, index: int) -> ViewData:
    """Load one view's grids at the resolution the pipeline operates at."""
    view = manifest.views[index]
    depth = load_depth_map(view.depth_path)
    intr = view.intrinsics
    if depth.height != intr.height or depth.width != intr.width:
        raise ManifestError(
            f"view {index}: depth is {depth.width}x{depth.height}, camera says "
            f"{intr.width}x{intr.height}"
        )

    if manifest.mode == "rgb":
        fmap = FeatureMap(load_image(view.image_path))
        if fmap.height != intr.height or fmap.width != intr.width:
            raise ManifestError(
                f"view {index}: image is {fmap.width}x{fmap.height}, camera says "
                f"{intr.width}x{intr.height}"
            )
        return ViewData(fmap, depth, intr, view.pose, index)

    fmap = load_feature_map(view.feature_path)
    scale = view.feature_scale
    if fmap.height * scale != intr.height or fmap.width * scale != intr.width:
        raise ManifestError(
            f"view {index}: feature map {fmap.width}x{fmap.height} x scale {scale} "
            f"does not match image size {intr.width}x{intr.height}"
        )
    return ViewData(
        feature_map=fmap,
        depth_map=depth.downsampled(scale),
        intrinsics=intr.downscaled(scale),
        pose=view.pose,
        view_index=index,
    )
