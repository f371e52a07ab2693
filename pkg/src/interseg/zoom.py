"""Target-aware zooming: guidance-weighted separable resampling.

A nonnegative guidance map is marginalized into per-axis importance
weights. Each axis gets a monotone inverse mapping computed as a
Gaussian-kernel weighted mean of source coordinates, so target samples
concentrate where the guidance mass sits. Images, clicks, and logit maps
move between the original and the zoomed space through these mappings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import Click

__all__ = [
    "AxisMapping",
    "FusionSchedule",
    "marginalize",
    "build_axis_mapping",
    "warp_image",
    "warp_mask",
    "warp_clicks",
    "unwarp_logits",
    "fuse",
    "bilinear_resize",
    "resize_mask",
    "scale_clicks",
]

DEFAULT_KERNEL_SIGMA = 11.0  # source-grid units


def _axis_gather(arr: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation of ``arr`` along ``axis`` at fractional coords."""
    n = arr.shape[axis]
    c = np.clip(coords, 0.0, n - 1.0)
    lo = np.floor(c).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    frac = c - lo
    shape = [1] * arr.ndim
    shape[axis] = len(coords)
    frac = frac.reshape(shape)
    return np.take(arr, lo, axis=axis) * (1.0 - frac) + np.take(arr, hi, axis=axis) * frac


def _sample_grid(arr: np.ndarray, row_coords: np.ndarray, col_coords: np.ndarray) -> np.ndarray:
    """Separable bilinear sample on the rectilinear grid rows x cols."""
    out = _axis_gather(arr, row_coords, axis=0)
    return _axis_gather(out, col_coords, axis=1)


def bilinear_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Plain bilinear resize with endpoint-aligned sample grids.

    Identity when the output size matches the input size.
    """
    h, w = arr.shape[:2]
    if (h, w) == (out_h, out_w):
        return np.array(arr, dtype=np.float64)
    rows = np.linspace(0.0, h - 1.0, out_h)
    cols = np.linspace(0.0, w - 1.0, out_w)
    return _sample_grid(np.asarray(arr, dtype=np.float64), rows, cols)


def resize_mask(m: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a binary mask (bilinear on floats, threshold at 0.5)."""
    if m.shape == (out_h, out_w):
        return m.copy()
    return bilinear_resize(m.astype(np.float64), out_h, out_w) >= 0.5


def scale_clicks(clicks: list[Click], src_hw: tuple[int, int], dst_hw: tuple[int, int]) -> list[Click]:
    """Map click coordinates between two plain pixel grids (endpoint-aligned)."""
    sh, sw = src_hw
    dh, dw = dst_hw
    ry = (dh - 1) / (sh - 1) if sh > 1 else 0.0
    rx = (dw - 1) / (sw - 1) if sw > 1 else 0.0
    out = []
    for c in clicks:
        r = int(np.clip(round(c.row * ry), 0, dh - 1))
        q = int(np.clip(round(c.col * rx), 0, dw - 1))
        out.append(Click(r, q, c.positive, c.round))
    return out


@dataclass(frozen=True)
class AxisMapping:
    """Discretized monotone mapping from target to source coordinates on one axis.

    ``forward[j]`` is the normalized source coordinate sampled by target grid
    point ``j/(target_size-1)``. The inverse is the piecewise-linear inversion
    of those samples, with plateaus collapsed to their midpoints.
    """

    target_size: int
    source_size: int
    forward: np.ndarray
    kernel_sigma: float
    _inv_s: np.ndarray = field(repr=False, default=None)
    _inv_u: np.ndarray = field(repr=False, default=None)

    def source_coords(self) -> np.ndarray:
        """Fractional source pixel coordinates for each target grid index."""
        return self.forward * (self.source_size - 1)

    def invert(self, s: np.ndarray | float) -> np.ndarray | float:
        """Map normalized source coordinates back to normalized target ones.

        Queries outside the forward range clamp to the nearest endpoint.
        """
        if np.any(np.diff(self.forward) < 0):
            raise ValueError("axis mapping is non-monotone; refusing to invert")
        return np.interp(s, self._inv_s, self._inv_u)

    def _validate_roundtrip(self) -> None:
        u = np.linspace(0.0, 1.0, self.target_size)
        err = np.abs(self.invert(self.forward) - u)
        tol = 2.0 / self.target_size
        if err.max() > tol:
            raise ValueError(
                f"axis mapping round-trip error {err.max():.3g} exceeds {tol:.3g}"
            )


def _build_inverse_knots(forward: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse exact plateaus to their midpoint, producing increasing knots."""
    n = len(forward)
    u = np.linspace(0.0, 1.0, n)
    knots_s = []
    knots_u = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and forward[j + 1] == forward[i]:
            j += 1
        knots_s.append(forward[i])
        knots_u.append(0.5 * (u[i] + u[j]))
        i = j + 1
    return np.asarray(knots_s), np.asarray(knots_u)


def marginalize(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row/column sums of a guidance map, floored away from zero.

    Returns ``(s_x, s_y)`` where ``s_x`` holds column importances (length W)
    and ``s_y`` row importances (length H). The floor is 1e-6 relative to
    the guidance peak so an all-zero map degrades to a near-identity warp.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError(f"guidance map must be 2-D, got shape {s.shape}")
    if not np.isfinite(s).all() or (s < 0).any():
        raise ValueError("guidance map must be finite and nonnegative")
    eps = 1e-6 * max(1.0, float(s.max()))
    s_y = np.maximum(s.sum(axis=1), eps)
    s_x = np.maximum(s.sum(axis=0), eps)
    return s_x, s_y


def build_axis_mapping(
    weights: np.ndarray, target_size: int, sigma: float = DEFAULT_KERNEL_SIGMA
) -> AxisMapping:
    """Build one axis of the zoom warp from positive importance weights.

    Every target grid point x receives the source coordinate

        forward(x) = sum_i x_i * w_i * K(x, x_i) / sum_i w_i * K(x, x_i)

    over source cell centers x_i on [0, 1], with a Gaussian kernel K whose
    standard deviation is ``sigma`` source-grid units. The result is monotone
    for positive weights; tiny floating-point inversions are flattened.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) < 2:
        raise ValueError("weights must be a 1-D vector of length >= 2")
    if not np.isfinite(w).all():
        raise ValueError("weights contain non-finite values")
    if (w <= 0).any():
        raise ValueError("weights must be strictly positive (apply marginalize first)")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if target_size < 2:
        raise ValueError("target_size must be >= 2")

    n_src = len(w)
    sigma_norm = sigma / n_src
    x_src = np.linspace(0.0, 1.0, n_src)
    x_tgt = np.linspace(0.0, 1.0, target_size)
    kernel = np.exp(-((x_tgt[:, None] - x_src[None, :]) ** 2) / (2.0 * sigma_norm**2))
    den = kernel @ w
    num = kernel @ (w * x_src)
    forward = num / den

    drops = np.diff(forward)
    worst = float(-drops.min()) if len(drops) and drops.min() < 0 else 0.0
    if worst > 1e-9:
        raise ValueError(f"forward mapping non-monotone by {worst:.3g}")
    forward = np.minimum(np.maximum.accumulate(np.clip(forward, 0.0, 1.0)), 1.0)

    inv_s, inv_u = _build_inverse_knots(forward)
    mapping = AxisMapping(
        target_size=int(target_size),
        source_size=n_src,
        forward=forward,
        kernel_sigma=float(sigma),
        _inv_s=inv_s,
        _inv_u=inv_u,
    )
    mapping._validate_roundtrip()
    return mapping


def _check_source_dims(arr: np.ndarray, mx: AxisMapping, my: AxisMapping) -> None:
    if arr.shape[0] != my.source_size or arr.shape[1] != mx.source_size:
        raise ValueError(
            f"raster shape {arr.shape[:2]} does not match mapping sources "
            f"({my.source_size}, {mx.source_size})"
        )


def warp_image(img: np.ndarray, mx: AxisMapping, my: AxisMapping) -> np.ndarray:
    """Resample a raster into the zoomed space defined by two axis mappings.

    Works for (H, W) and (H, W, C) arrays; output spatial dimensions are the
    mapping target sizes.
    """
    arr = np.asarray(img, dtype=np.float64)
    _check_source_dims(arr, mx, my)
    rows = my.forward * (my.source_size - 1)
    cols = mx.forward * (mx.source_size - 1)
    return _sample_grid(arr, rows, cols)


def warp_mask(m: np.ndarray, mx: AxisMapping, my: AxisMapping) -> np.ndarray:
    """Warp a binary mask (bilinear on floats, threshold at 0.5)."""
    return warp_image(m.astype(np.float64), mx, my) >= 0.5


def warp_clicks(clicks: list[Click], mx: AxisMapping, my: AxisMapping) -> list[Click]:
    """Transport click centers into the zoomed grid via the inverse mappings.

    Coordinates round to the nearest zoomed pixel and clamp to bounds;
    polarity and round index are preserved.
    """
    h_src, w_src = my.source_size, mx.source_size
    out = []
    for c in clicks:
        u_r = float(my.invert(c.row / (h_src - 1) if h_src > 1 else 0.0))
        u_c = float(mx.invert(c.col / (w_src - 1) if w_src > 1 else 0.0))
        r = int(np.clip(round(u_r * (my.target_size - 1)), 0, my.target_size - 1))
        q = int(np.clip(round(u_c * (mx.target_size - 1)), 0, mx.target_size - 1))
        out.append(Click(r, q, c.positive, c.round))
    return out


def unwarp_logits(
    o: np.ndarray,
    mx: AxisMapping,
    my: AxisMapping,
    out_h: int,
    out_w: int,
    fill: float = 0.0,
) -> np.ndarray:
    """Resample a zoomed-space logit map back to the original grid.

    The zoomed frame only observes source coordinates inside the span of the
    forward mapping; original-grid positions outside that span have no zoomed
    counterpart and are set to ``fill`` (default 0, a neutral logit) rather
    than replicating the frame border.
    """
    arr = np.asarray(o, dtype=np.float64)
    if arr.shape != (my.target_size, mx.target_size):
        raise ValueError(
            f"logit shape {arr.shape} does not match mapping targets "
            f"({my.target_size}, {mx.target_size})"
        )
    y_norm = np.linspace(0.0, 1.0, out_h) if out_h > 1 else np.zeros(1)
    x_norm = np.linspace(0.0, 1.0, out_w) if out_w > 1 else np.zeros(1)
    rows = np.asarray(my.invert(y_norm)) * (my.target_size - 1)
    cols = np.asarray(mx.invert(x_norm)) * (mx.target_size - 1)
    out = _sample_grid(arr, rows, cols)
    out[(y_norm < my.forward[0]) | (y_norm > my.forward[-1]), :] = fill
    out[:, (x_norm < mx.forward[0]) | (x_norm > mx.forward[-1])] = fill
    return out


@dataclass(frozen=True)
class FusionSchedule:
    """Round-dependent blend weight between the plain and zoomed branches.

    The zoomed branch is trusted only once the interaction has produced a
    reasonable mask: weight 0 for rounds below half the budget, then t/T,
    reaching 1 at the final round.
    """

    budget: int

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError("budget must be >= 1")

    def weight(self, t: int) -> float:
        if not 1 <= t <= self.budget:
            raise ValueError(f"round {t} outside 1..{self.budget}")
        if t < self.budget / 2:
            return 0.0
        return t / self.budget


def fuse(o2: np.ndarray, o2_tilde: np.ndarray, t: int, sched: FusionSchedule) -> np.ndarray:
    """Convex combination of the plain-branch and zoomed-branch logits."""
    a = np.asarray(o2, dtype=np.float64)
    b = np.asarray(o2_tilde, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    lam = sched.weight(t)
    if lam == 0.0:
        return a.copy()
    if lam == 1.0:
        return b.copy()
    return (1.0 - lam) * a + lam * b
