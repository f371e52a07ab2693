"""Segmenter contract, reference implementations, and local crop refinement.

Every segmenter maps (image, click discs, initial mask) to a logit map of the
same spatial size. Three implementations ship:

* ``oracle``   — leaks a held ground-truth mask with bounded seeded boundary
                 noise; validates the harness independent of model quality.
* ``geodesic`` — classical seeded segmentation from color-gradient geodesic
                 distances to the clicks, blended with an initial-mask prior.
* ``toy``      — a per-pixel linear scorer over handcrafted features, kept
                 differentiable so the loss stack's gradients are exercisable.

A constant-empty stub (``empty``) exists for harness edge-case tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .raster import Click, as_image, as_mask, edge_map, largest_connected_component
from .zoom import AxisMapping, bilinear_resize, resize_mask, warp_mask

__all__ = [
    "SegmenterInput",
    "ViewTransform",
    "CropRegion",
    "Segmenter",
    "OracleSegmenter",
    "GeodesicSegmenter",
    "ToyModelParams",
    "ToySegmenter",
    "ConstantSegmenter",
    "toy_features",
    "toy_forward",
    "geodesic_distance",
    "select_refinement_crop",
    "refine_local",
    "make_segmenter",
]

TOY_FEATURE_COUNT = 8


@dataclass(frozen=True)
class CropRegion:
    top: int
    left: int
    height: int
    width: int

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError("crop must be nonempty")
        if self.top < 0 or self.left < 0:
            raise ValueError("crop origin must be nonnegative")

    @property
    def bottom(self) -> int:
        return self.top + self.height

    @property
    def right(self) -> int:
        return self.left + self.width

    def check_bounds(self, h: int, w: int) -> None:
        if self.bottom > h or self.right > w:
            raise ValueError(f"crop {self} exceeds {h}x{w} bounds")

    def slices(self) -> tuple[slice, slice]:
        return slice(self.top, self.bottom), slice(self.left, self.right)


@dataclass(frozen=True)
class ViewTransform:
    """How a segmenter input view was derived from the session's full frame.

    Optional metadata: reference segmenters that synthesize their output from
    session-level state (the oracle) replay this transform; image-driven
    segmenters ignore it. ``crop`` applies first, then either the zoom warp
    (when both mappings are set) or a plain bilinear resize to the output size.
    """

    out_h: int
    out_w: int
    crop: CropRegion | None = None
    mx: AxisMapping | None = None
    my: AxisMapping | None = None

    def apply_to_mask(self, m: np.ndarray) -> np.ndarray:
        if self.crop is not None:
            self.crop.check_bounds(*m.shape)
            m = m[self.crop.slices()]
        if self.mx is not None and self.my is not None:
            return warp_mask(m, self.mx, self.my)
        return resize_mask(m, self.out_h, self.out_w)


@dataclass(frozen=True)
class SegmenterInput:
    """One segmenter invocation: image, rasterized clicks, initial mask.

    ``clicks`` optionally carries the click list behind the disc map (in this
    view's pixel grid); reference implementations that want exact click
    pixels, rather than whole discs, read it when present.
    """

    image: np.ndarray
    discs: np.ndarray
    initial_mask: np.ndarray
    view: ViewTransform | None = None
    clicks: tuple[Click, ...] | None = None

    def __post_init__(self) -> None:
        img = as_image(self.image)
        m = as_mask(self.initial_mask)
        d = self.discs
        if d.ndim != 3 or d.shape[2] != 2:
            raise ValueError(f"disc map must have shape (H, W, 2), got {d.shape}")
        if img.shape[:2] != m.shape or img.shape[:2] != d.shape[:2]:
            raise ValueError(
                f"input dimensions disagree: image {img.shape[:2]}, "
                f"discs {d.shape[:2]}, mask {m.shape}"
            )
        if self.clicks is not None:
            h, w = img.shape[:2]
            for c in self.clicks:
                if not (0 <= c.row < h and 0 <= c.col < w):
                    raise ValueError(f"click {c} outside {h}x{w} view")
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "discs", d.astype(bool))
        object.__setattr__(self, "initial_mask", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape[:2]

    def seed_masks(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-polarity seed pixels: exact click pixels when known, else discs."""
        if self.clicks is not None:
            h, w = self.shape
            pos = np.zeros((h, w), dtype=bool)
            neg = np.zeros((h, w), dtype=bool)
            for c in self.clicks:
                (pos if c.positive else neg)[c.row, c.col] = True
            return pos, neg
        return self.discs[..., 0], self.discs[..., 1]


class Segmenter:
    """Contract: stateless inference from a SegmenterInput to a logit map."""

    name = "base"

    def coarse_segment(self, inp: SegmenterInput) -> np.ndarray:
        raise NotImplementedError


def _clamp_click_logits(logits: np.ndarray, discs: np.ndarray) -> np.ndarray:
    """Force prediction agreement on click discs (polarity-exclusive pixels)."""
    pos = discs[..., 0] & ~discs[..., 1]
    neg = discs[..., 1] & ~discs[..., 0]
    out = logits.copy()
    out[pos] = np.maximum(out[pos], 0.5)
    out[neg] = np.minimum(out[neg], -0.5)
    return out


# ---------------------------------------------------------------------------
# Geodesic machinery shared by the geodesic and toy segmenters.

_EDGE_EPS = 1e-3


def _grid_graph(image: np.ndarray) -> csr_matrix:
    """4-neighbor graph whose edge weights are color differences plus a floor."""
    h, w = image.shape[:2]
    n = h * w
    idx = np.arange(n).reshape(h, w)
    dh = np.linalg.norm(image[:, 1:] - image[:, :-1], axis=-1) + _EDGE_EPS
    dv = np.linalg.norm(image[1:, :] - image[:-1, :], axis=-1) + _EDGE_EPS
    r = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    c = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    wgt = np.concatenate([dh.ravel(), dv.ravel()])
    return csr_matrix(
        (np.concatenate([wgt, wgt]), (np.concatenate([r, c]), np.concatenate([c, r]))),
        shape=(n, n),
    )


class _GraphCache:
    """Tiny identity-keyed memo for grid graphs; images are treated immutable."""

    def __init__(self, capacity: int = 4) -> None:
        self._entries: list[tuple[np.ndarray, csr_matrix]] = []
        self._capacity = capacity

    def get(self, image: np.ndarray) -> csr_matrix:
        for arr, g in self._entries:
            if arr is image:
                return g
        g = _grid_graph(image)
        self._entries.append((image, g))
        if len(self._entries) > self._capacity:
            self._entries.pop(0)
        return g


def geodesic_distance(
    image: np.ndarray, seeds: np.ndarray, graph: csr_matrix | None = None
) -> np.ndarray:
    """Color-gradient geodesic distance from the seed pixels.

    Distances accumulate per-step costs of ``eps + ||color difference||`` on a
    4-neighbor grid, so flat regions are cheap to cross and contrast edges
    expensive. Raises if the seed mask is empty.
    """
    seeds = as_mask(seeds)
    if not seeds.any():
        raise ValueError("seed mask is empty")
    if graph is None:
        graph = _grid_graph(as_image(image))
    sources = np.nonzero(seeds.ravel())[0]
    dist = dijkstra(graph, indices=sources, min_only=True)
    return dist.reshape(seeds.shape)


def _normalized_click_distances(
    image: np.ndarray,
    seeds_pos: np.ndarray,
    seeds_neg: np.ndarray,
    graph: csr_matrix,
) -> tuple[np.ndarray, np.ndarray]:
    """Geodesic distances to each click polarity, jointly scaled into [0, 1].

    A polarity with no clicks gets the maximum distance 1.0 everywhere.
    """
    h, w = seeds_pos.shape[:2]
    has_pos = bool(seeds_pos.any())
    has_neg = bool(seeds_neg.any())
    d_pos = geodesic_distance(image, seeds_pos, graph) if has_pos else None
    d_neg = geodesic_distance(image, seeds_neg, graph) if has_neg else None
    scale = 0.0
    for d in (d_pos, d_neg):
        if d is not None:
            scale = max(scale, float(d.max()))
    if scale <= 0.0:
        scale = 1.0
    ones = np.ones((h, w))
    dn_pos = d_pos / scale if d_pos is not None else ones.copy()
    dn_neg = d_neg / scale if d_neg is not None else ones.copy()
    return np.clip(dn_pos, 0.0, 1.0), np.clip(dn_neg, 0.0, 1.0)


def _signed_mask_prior(m: np.ndarray) -> np.ndarray:
    """Signed distance prior in [-1, 1]; zero when the mask is uninformative."""
    if not m.any() or m.all():
        return np.zeros(m.shape)
    inside = ndimage.distance_transform_edt(m)
    outside = ndimage.distance_transform_edt(~m)
    sd = inside - outside
    peak = float(np.abs(sd).max())
    return sd / peak if peak > 0 else sd


class GeodesicSegmenter(Segmenter):
    """Classical baseline: click-seeded geodesic competition plus mask prior.

    Per-pixel score is 0.7 * (normalized distance to negative clicks minus
    distance to positive clicks) + 0.3 * signed-distance prior of the initial
    mask. No positive clicks means an empty prediction.
    """

    name = "geodesic"
    LOGIT_SCALE = 4.0

    def __init__(self) -> None:
        self._cache = _GraphCache()

    def coarse_segment(self, inp: SegmenterInput) -> np.ndarray:
        h, w = inp.shape
        seeds_pos, seeds_neg = inp.seed_masks()
        if not seeds_pos.any():
            return np.full((h, w), -1.0)
        graph = self._cache.get(inp.image)
        dn_pos, dn_neg = _normalized_click_distances(
            inp.image, seeds_pos, seeds_neg, graph
        )
        if not seeds_neg.any():
            # no negative evidence: call pixels geodesically close to the
            # positive clicks foreground
            dn_neg = np.full((h, w), 0.5)
        score = 0.7 * (dn_neg - dn_pos) + 0.3 * _signed_mask_prior(inp.initial_mask)
        return _clamp_click_logits(self.LOGIT_SCALE * score, inp.discs)


class OracleSegmenter(Segmenter):
    """Leaks a held GT mask with seeded boundary noise (IoU kept >= 0.95).

    Exists to validate metrics and session plumbing independent of actual
    segmentation quality. Needs each input's ViewTransform to replay how the
    pipeline derived the view from the full-resolution frame.
    """

    name = "oracle"
    LOGIT_SCALE = 3.0

    def __init__(self, gt: np.ndarray, seed: int = 0, noise_frac: float = 0.02) -> None:
        self.gt = as_mask(gt)
        self.seed = seed
        if not 0.0 <= noise_frac <= 0.025:
            raise ValueError("noise_frac above 0.025 would break the IoU bound")
        self.noise_frac = noise_frac

    def _view_mask(self, inp: SegmenterInput) -> np.ndarray:
        if inp.view is not None:
            return inp.view.apply_to_mask(self.gt)
        if self.gt.shape != inp.shape:
            raise ValueError(
                f"oracle GT shape {self.gt.shape} does not match input "
                f"{inp.shape} and no view transform was provided"
            )
        return self.gt.copy()

    def coarse_segment(self, inp: SegmenterInput) -> np.ndarray:
        m = self._view_mask(inp)
        area = int(m.sum())
        band = edge_map(m) | edge_map(~m)
        band_idx = np.nonzero(band.ravel())[0]
        budget = int(self.noise_frac * area)
        if budget > 0 and len(band_idx) > 0:
            rng = np.random.default_rng(
                [
                    self.seed,
                    inp.shape[0],
                    inp.shape[1],
                    int(inp.discs[..., 0].sum()),
                    int(inp.discs[..., 1].sum()),
                ]
            )
            flips = rng.choice(band_idx, size=min(budget, len(band_idx)), replace=False)
            flat = m.ravel().copy()
            flat[flips] = ~flat[flips]
            m = flat.reshape(m.shape)
        logits = np.where(m, self.LOGIT_SCALE, -self.LOGIT_SCALE).astype(np.float64)
        return _clamp_click_logits(logits, inp.discs)


class ConstantSegmenter(Segmenter):
    """Always predicts the same logit; ``empty`` stub for harness tests."""

    name = "empty"

    def __init__(self, logit: float = -1.0) -> None:
        self.logit = float(logit)

    def coarse_segment(self, inp: SegmenterInput) -> np.ndarray:
        return np.full(inp.shape, self.logit)


# ---------------------------------------------------------------------------
# Toy differentiable model.


@dataclass(frozen=True)
class ToyModelParams:
    """Per-pixel linear scorer weights: 8 feature weights plus a bias."""

    weights: np.ndarray
    bias: float

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (TOY_FEATURE_COUNT,):
            raise ValueError(f"expected {TOY_FEATURE_COUNT} weights, got {w.shape}")
        if not (np.isfinite(w).all() and np.isfinite(self.bias)):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.weights, [self.bias]])

    @staticmethod
    def from_vector(v: np.ndarray) -> "ToyModelParams":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (TOY_FEATURE_COUNT + 1,):
            raise ValueError(f"expected {TOY_FEATURE_COUNT + 1} values, got {v.shape}")
        return ToyModelParams(weights=v[:-1], bias=float(v[-1]))

    @staticmethod
    def zeros() -> "ToyModelParams":
        return ToyModelParams(weights=np.zeros(TOY_FEATURE_COUNT), bias=0.0)

    @staticmethod
    def load(path: str | Path) -> "ToyModelParams":
        with open(path) as f:
            data = json.load(f)
        if isinstance(data, dict):
            data = data["params"]
        return ToyModelParams.from_vector(np.asarray(data, dtype=np.float64))

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump([float(x) for x in self.to_vector()], f)


def toy_features(inp: SegmenterInput, graph: csr_matrix | None = None) -> np.ndarray:
    """Handcrafted (H, W, 8) feature stack for the toy model.

    Channels: R, G, B, positive-disc, negative-disc, initial-mask value, and
    normalized geodesic distances to the nearest positive/negative click.
    """
    h, w = inp.shape
    if graph is None:
        graph = _grid_graph(inp.image)
    seeds_pos, seeds_neg = inp.seed_masks()
    dn_pos, dn_neg = _normalized_click_distances(inp.image, seeds_pos, seeds_neg, graph)
    feats = np.empty((h, w, TOY_FEATURE_COUNT))
    feats[..., 0:3] = inp.image
    feats[..., 3] = inp.discs[..., 0]
    feats[..., 4] = inp.discs[..., 1]
    feats[..., 5] = inp.initial_mask
    feats[..., 6] = dn_pos
    feats[..., 7] = dn_neg
    return feats


def toy_forward(params: ToyModelParams, inp: SegmenterInput) -> np.ndarray:
    """Per-pixel dot product of features and weights plus bias (linear in params)."""
    return toy_features(inp) @ params.weights + params.bias


class ToySegmenter(Segmenter):
    """Differentiable stand-in for a learned coarse module."""

    name = "toy"

    def __init__(self, params: ToyModelParams) -> None:
        self.params = params
        self._cache = _GraphCache()

    def features(self, inp: SegmenterInput) -> np.ndarray:
        return toy_features(inp, self._cache.get(inp.image))

    def coarse_segment(self, inp: SegmenterInput) -> np.ndarray:
        return self.features(inp) @ self.params.weights + self.params.bias


# ---------------------------------------------------------------------------
# Refinement-crop machinery.


def select_refinement_crop(
    m1: np.ndarray, m0: np.ndarray, pad_ratio: float = 0.4
) -> CropRegion | None:
    """Bounding box of the largest connected change between two masks.

    The box is expanded by ``pad_ratio`` of its size on each side and clamped
    to the image. Returns None when the masks are identical.
    """
    m1 = as_mask(m1)
    m0 = as_mask(m0)
    if m1.shape != m0.shape:
        raise ValueError(f"dimension mismatch: {m1.shape} vs {m0.shape}")
    diff = m1 ^ m0
    if not diff.any():
        return None
    comp = largest_connected_component(diff)
    rows, cols = np.nonzero(comp)
    top, bottom = int(rows.min()), int(rows.max()) + 1
    left, right = int(cols.min()), int(cols.max()) + 1
    pad_r = int(round(pad_ratio * (bottom - top)))
    pad_c = int(round(pad_ratio * (right - left)))
    h, w = m1.shape
    top = max(0, top - pad_r)
    bottom = min(h, bottom + pad_r)
    left = max(0, left - pad_c)
    right = min(w, right + pad_c)
    return CropRegion(top=top, left=left, height=bottom - top, width=right - left)


def refine_local(
    coarse_logit: np.ndarray,
    crop: CropRegion,
    inp: SegmenterInput,
    segmenter: Segmenter,
) -> np.ndarray:
    """Replace the crop region of a logit map with a crop-scoped re-run.

    The segmenter sees the cropped image, discs, and initial mask at native
    resolution; pixels outside the crop are untouched.
    """
    h, w = inp.shape
    if coarse_logit.shape != (h, w):
        raise ValueError("logit map does not match the input dimensions")
    crop.check_bounds(h, w)
    sl = crop.slices()
    if inp.view is not None and (
        inp.view.mx is not None or (inp.view.out_h, inp.view.out_w) != (h, w)
    ):
        raise ValueError("refine_local needs a native-resolution input view")
    base_crop = inp.view.crop if inp.view is not None else None
    abs_crop = crop
    if base_crop is not None:
        abs_crop = CropRegion(
            top=base_crop.top + crop.top,
            left=base_crop.left + crop.left,
            height=crop.height,
            width=crop.width,
        )
    local_clicks = None
    if inp.clicks is not None:
        local_clicks = tuple(
            Click(row=c.row - crop.top, col=c.col - crop.left, positive=c.positive)
            for c in inp.clicks
            if crop.top <= c.row < crop.top + crop.height
            and crop.left <= c.col < crop.left + crop.width
        )
    local = SegmenterInput(
        image=inp.image[sl],
        discs=inp.discs[sl],
        initial_mask=inp.initial_mask[sl],
        view=ViewTransform(out_h=crop.height, out_w=crop.width, crop=abs_crop),
        clicks=local_clicks,
    )
    out = np.array(coarse_logit, dtype=np.float64)
    out[sl] = segmenter.coarse_segment(local)
    return out


def make_segmenter(
    spec: str, *, gt: np.ndarray | None = None, seed: int = 0
) -> Segmenter:
    """Build a segmenter from its CLI/config string.

    Accepted: ``oracle`` | ``geodesic`` | ``toy:<params-file>`` | ``empty``.
    The oracle needs a ground-truth mask.
    """
    if spec == "oracle":
        if gt is None:
            raise ValueError("oracle segmenter needs a ground-truth mask")
        return OracleSegmenter(gt, seed=seed)
    if spec == "geodesic":
        return GeodesicSegmenter()
    if spec == "empty":
        return ConstantSegmenter(-1.0)
    if spec.startswith("toy:"):
        return ToySegmenter(ToyModelParams.load(spec.split(":", 1)[1]))
    raise ValueError(f"unknown segmenter {spec!r}")
