"""Shared raster types, cm<->px conventions, and grid file formats.

Coordinate convention used by every module: positions are (x, y) in cm,
x along bed width (array columns), y along bed height (array rows).
Pixel (row, col) has its center at ((col + 0.5) / px_per_cm,
(row + 0.5) / px_per_cm); a cm position falls in pixel
(floor(y * px_per_cm), floor(x * px_per_cm)).
"""

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import InvalidInputError

GRID_MAGIC = "PLG1"


def cm_to_px(coord_cm: float, px_per_cm: float) -> int:
    """Index of the pixel containing a cm coordinate."""
    return int(np.floor(coord_cm * px_per_cm))


def pixel_centers_cm(n: int, px_per_cm: float) -> np.ndarray:
    """cm coordinates of all pixel centers along one axis."""
    return (np.arange(n) + 0.5) / px_per_cm


def distance_grid_cm(shape: tuple[int, int], center_cm: tuple[float, float],
                     px_per_cm: float) -> np.ndarray:
    """(H, W) grid of pixel-center distances in cm from ``center_cm``."""
    h, w = shape
    ys = pixel_centers_cm(h, px_per_cm) - center_cm[1]
    xs = pixel_centers_cm(w, px_per_cm) - center_cm[0]
    return np.hypot(ys[:, None], xs[None, :])


def disk_bbox(shape: tuple[int, int], center_cm: tuple[float, float],
              radius_cm: float, px_per_cm: float,
              pad_px: int = 1) -> tuple[slice, slice]:
    """Row/col slices covering a disk, clipped to the grid."""
    h, w = shape
    r0 = max(0, cm_to_px(center_cm[1] - radius_cm, px_per_cm) - pad_px)
    r1 = min(h, cm_to_px(center_cm[1] + radius_cm, px_per_cm) + pad_px + 1)
    c0 = max(0, cm_to_px(center_cm[0] - radius_cm, px_per_cm) - pad_px)
    c1 = min(w, cm_to_px(center_cm[0] + radius_cm, px_per_cm) + pad_px + 1)
    return slice(r0, max(r0, r1)), slice(c0, max(c0, c1))


@dataclass(frozen=True)
class SegmentationMask:
    """Per-pixel integer labels; 0 is soil, 1..i_total are plant types."""

    labels: np.ndarray          # (H, W) integer array
    px_per_cm: float = 1.0

    def __post_init__(self):
        if self.labels.ndim != 2 or self.labels.size == 0:
            raise InvalidInputError("mask must be a non-empty 2-D label grid")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape  # type: ignore[return-value]

    def label_at(self, position_cm: tuple[float, float]) -> int:
        row = cm_to_px(position_cm[1], self.px_per_cm)
        col = cm_to_px(position_cm[0], self.px_per_cm)
        if not (0 <= row < self.height and 0 <= col < self.width):
            return 0
        return int(self.labels[row, col])

    def count(self, label: int) -> int:
        return int(np.count_nonzero(self.labels == label))

    def validate_labels(self, i_total: int) -> None:
        bad = (self.labels < 0) | (self.labels > i_total)
        if bad.any():
            raise InvalidInputError(
                f"mask contains labels outside [0, {i_total}]")


@dataclass(frozen=True)
class LikelihoodGrid:
    """(H, W, C) non-negative per-pixel per-label likelihoods; channel 0 is soil."""

    values: np.ndarray
    px_per_cm: float = 1.0

    def __post_init__(self):
        v = self.values
        if v.ndim != 3 or v.size == 0:
            raise InvalidInputError("likelihood grid must be (H, W, C) and non-empty")
        if not np.isfinite(v).all() or (v < 0).any():
            raise InvalidInputError("likelihoods must be finite and >= 0")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class OccupancyGrid:
    """Location prior, same layout as LikelihoodGrid; neutral cells are 1."""

    values: np.ndarray
    alpha: float = 5.0
    px_per_cm: float = 1.0

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def write_grid_file(path, values: np.ndarray) -> None:
    """Write a dense grid: header "PLG1 <H> <W> <C>\\n" then row-major
    little-endian float32, channel-innermost. 2-D arrays are stored with C=1."""
    if values.ndim == 2:
        values = values[:, :, None]
    if values.ndim != 3:
        raise InvalidInputError("grid file payload must be 2-D or 3-D")
    h, w, c = values.shape
    with open(path, "wb") as f:
        f.write(f"{GRID_MAGIC} {h} {w} {c}\n".encode("ascii"))
        f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_grid_file(path) -> np.ndarray:
    """Read a PLG1 grid written by write_grid_file. Returns (H, W, C) float32."""
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != GRID_MAGIC:
            raise InvalidInputError(f"not a {GRID_MAGIC} grid file: {path}")
        h, w, c = (int(x) for x in header[1:])
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != h * w * c:
        raise InvalidInputError(
            f"grid payload size {data.size} != {h}*{w}*{c}")
    return data.reshape(h, w, c).copy()


def read_likelihood_grid(path, px_per_cm: float = 1.0) -> LikelihoodGrid:
    return LikelihoodGrid(read_grid_file(path), px_per_cm=px_per_cm)


def write_mask_image(path, mask: SegmentationMask) -> None:
    """8-bit single-channel image, label = pixel value (PNG or PGM by suffix)."""
    arr = mask.labels
    if arr.max(initial=0) > 255:
        raise InvalidInputError("mask labels exceed 8-bit range")
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path)


def read_mask_image(path, px_per_cm: float = 1.0) -> SegmentationMask:
    arr = np.asarray(Image.open(path).convert("L"), dtype=np.int32)
    return SegmentationMask(arr, px_per_cm=px_per_cm)
