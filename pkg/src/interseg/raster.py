"""Core raster types and the elementary mask operations shared by every module.

Conventions used throughout the package:

* images are float64 arrays of shape (H, W, 3) with values in [0, 1]
* binary masks are bool arrays of shape (H, W)
* logit maps are float64 arrays of shape (H, W); thresholding at 0 gives a mask
* disc maps are bool arrays of shape (H, W, 2); channel 0 holds positive-click
  discs, channel 1 negative-click discs
* pixel coordinates are (row, col) with row 0 at the top
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

__all__ = [
    "Click",
    "DEFAULT_DISC_RADIUS",
    "as_image",
    "as_mask",
    "as_logits",
    "iou",
    "boundary_iou",
    "boundary_band",
    "default_boundary_band",
    "largest_connected_component",
    "render_discs",
    "edge_map",
    "load_image",
    "load_mask",
    "save_mask",
    "save_image",
]

# Click discs are drawn with this radius at the resolution the segmenter sees.
DEFAULT_DISC_RADIUS = 5

# 4-connectivity structuring element (a 3x3 cross).
CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class Click:
    """One user or simulated click.

    ``positive`` marks foreground, negative marks background. ``round`` is the
    1-based interaction round the click was issued in.
    """

    row: int
    col: int
    positive: bool
    round: int = 1

    def to_json(self) -> dict:
        return {
            "row": int(self.row),
            "col": int(self.col),
            "polarity": "positive" if self.positive else "negative",
            "round": int(self.round),
        }

    @staticmethod
    def from_json(obj: dict) -> "Click":
        return Click(
            row=int(obj["row"]),
            col=int(obj["col"]),
            positive=obj["polarity"] == "positive",
            round=int(obj.get("round", 1)),
        )


def as_image(arr: np.ndarray) -> np.ndarray:
    """Validate and normalize an (H, W, 3) image with values in [0, 1]."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"image must have shape (H, W, 3), got {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if not np.isfinite(a).all():
        raise ValueError("image contains non-finite values")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return a


def as_mask(arr: np.ndarray) -> np.ndarray:
    """Validate a binary mask; accepts any array of strictly 0/1 values."""
    a = np.asarray(arr)
    if a.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {a.shape}")
    if a.dtype != bool:
        vals = np.unique(a)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError("mask values must be strictly binary")
        a = a.astype(bool)
    return a


def as_logits(arr: np.ndarray) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"logit map must be 2-D, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("logit map contains non-finite values")
    return a


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection-over-union of two binary masks.

    Defined as 1.0 when both masks are empty so that perturbation loops and
    metric aggregation stay total.
    """
    a = as_mask(a)
    b = as_mask(b)
    _check_same_shape(a, b)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    inter = np.logical_and(a, b).sum()
    return float(inter / union)


def _inner_band(m: np.ndarray, band: int) -> np.ndarray:
    """Mask pixels within ``band`` (Euclidean) of the mask's own boundary.

    The image border counts as boundary, matching the usual boundary-IoU
    convention, so a mask filling the whole frame still has a band.
    """
    if not m.any():
        return m
    padded = np.pad(m, 1, mode="constant")
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    return m & (dist <= band)


def boundary_band(m: np.ndarray, band: int) -> np.ndarray:
    """Public wrapper over the inner boundary band used by ``boundary_iou``."""
    return _inner_band(as_mask(m), int(band))


def boundary_iou(a: np.ndarray, b: np.ndarray, band: int) -> float:
    """IoU restricted to pixels near each mask's own boundary.

    Each mask is intersected with its own inner boundary band of width
    ``band`` pixels, then plain IoU is taken between the two banded sets.
    """
    if band < 1:
        raise ValueError("band must be >= 1")
    a = as_mask(a)
    b = as_mask(b)
    _check_same_shape(a, b)
    return iou(_inner_band(a, band), _inner_band(b, band))


def default_boundary_band(h: int, w: int) -> int:
    """Band width used by the harness: 2% of the image diagonal, min 1 px."""
    return max(1, int(round(0.02 * float(np.hypot(h, w)))))


def largest_connected_component(m: np.ndarray) -> np.ndarray:
    """Keep only the largest 4-connected foreground component.

    Ties resolve to the component first reached in row-major scan order.
    An empty mask maps to an empty mask.
    """
    m = as_mask(m)
    labels, n = ndimage.label(m, structure=CROSS)
    if n == 0:
        return np.zeros_like(m)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def render_discs(
    clicks: list[Click], h: int, w: int, radius: int = DEFAULT_DISC_RADIUS
) -> np.ndarray:
    """Rasterize clicks into a 2-channel disc map.

    Channel 0 is the union of Euclidean discs (d^2 <= radius^2) around
    positive clicks, channel 1 the same for negative clicks. Discs are
    clipped at the image border.
    """
    out = np.zeros((h, w, 2), dtype=bool)
    if not clicks:
        return out
    offs = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(offs, offs, indexing="ij")
    disc = (dy**2 + dx**2) <= radius**2
    dy = dy[disc]
    dx = dx[disc]
    for c in clicks:
        if not (0 <= c.row < h and 0 <= c.col < w):
            raise ValueError(f"click ({c.row}, {c.col}) outside {h}x{w} bounds")
        rr = c.row + dy
        cc = c.col + dx
        keep = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        out[rr[keep], cc[keep], 0 if c.positive else 1] = True
    return out


def edge_map(m: np.ndarray) -> np.ndarray:
    """Morphological gradient of a mask with a 3x3 cross element."""
    m = as_mask(m)
    dil = ndimage.binary_dilation(m, structure=CROSS)
    ero = ndimage.binary_erosion(m, structure=CROSS)
    return dil & ~ero


# ---------------------------------------------------------------------------
# File IO. Masks travel as single-channel PNG (0 background / 255 foreground);
# images load from anything Pillow reads (PNG and PPM in practice).


def load_image(path: str | Path) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return as_image(arr)


def load_mask(path: str | Path) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr >= 128


def save_mask(m: np.ndarray, path: str | Path) -> None:
    m = as_mask(m)
    PILImage.fromarray(np.where(m, 255, 0).astype(np.uint8), mode="L").save(path)


def save_image(img: np.ndarray, path: str | Path) -> None:
    img = as_image(img)
    arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(arr, mode="RGB").save(path)
