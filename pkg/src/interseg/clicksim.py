"""Simulated clicking and ground-truth mask perturbation.

The click protocol places each new click at the pole of inaccessibility of
the largest connected error component (false negatives get positive clicks,
false positives negative ones). Perturbation degrades a ground-truth mask to
a requested IoU with randomized boundary and region operations, which backs
both the consistency-training data generation and the robustness protocol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .raster import CROSS, Click, as_mask, iou

__all__ = [
    "PerturbConfig",
    "ErrorDecomposition",
    "PerturbationError",
    "decompose_errors",
    "next_click",
    "perturb_to_iou",
    "session_restart_steps",
]


class PerturbationError(RuntimeError):
    """Raised when perturbation cannot reach the requested IoU."""


@dataclass(frozen=True)
class PerturbConfig:
    """Target and knobs for ``perturb_to_iou``."""

    target_iou: float
    tolerance: float = 0.03
    max_steps: int = 200
    # relative draw weights for {boundary dilate, boundary erode, region drop, region add}
    op_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.target_iou < 1.0:
            raise ValueError("target_iou must lie in (0, 1)")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class ErrorDecomposition:
    """False negatives (missed GT) and false positives (spurious prediction)."""

    false_negatives: np.ndarray
    false_positives: np.ndarray


def decompose_errors(pred: np.ndarray, gt: np.ndarray) -> ErrorDecomposition:
    pred = as_mask(pred)
    gt = as_mask(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"dimension mismatch: {pred.shape} vs {gt.shape}")
    return ErrorDecomposition(gt & ~pred, pred & ~gt)


def _pole_of_inaccessibility(component: np.ndarray) -> tuple[int, int]:
    """Interior point maximizing distance to the component boundary.

    The mask is zero-padded first so the image border counts as boundary;
    ties resolve to the first pixel in row-major scan order.
    """
    padded = np.pad(component, 1, mode="constant")
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    flat = int(np.argmax(dist))
    return np.unravel_index(flat, component.shape)


def _component_candidates(err: np.ndarray) -> list[tuple[int, tuple[int, int], np.ndarray]]:
    """All connected components of an error map as (size, top-left, mask)."""
    labels, n = ndimage.label(err, structure=CROSS)
    out = []
    for lab in range(1, n + 1):
        comp = labels == lab
        rows, cols = np.nonzero(comp)
        top_left = (int(rows.min()), int(cols[rows == rows.min()].min()))
        out.append((int(comp.sum()), top_left, comp))
    return out


def next_click(pred: np.ndarray, gt: np.ndarray, round: int = 1) -> Click | None:
    """Synthesize the next corrective click from the prediction error map.

    Picks the largest connected error component across false negatives and
    false positives (ties go to the smaller top-left pixel) and clicks its
    pole of inaccessibility. Returns None when prediction equals GT.
    """
    errs = decompose_errors(pred, gt)
    candidates = [
        (size, tl, comp, True) for size, tl, comp in _component_candidates(errs.false_negatives)
    ] + [
        (size, tl, comp, False) for size, tl, comp in _component_candidates(errs.false_positives)
    ]
    if not candidates:
        return None
    # largest size wins; ties break on the lexicographically smaller top-left
    candidates.sort(key=lambda c: (-c[0], c[1]))
    _, _, comp, positive = candidates[0]
    r, c = _pole_of_inaccessibility(comp)
    return Click(int(r), int(c), positive, round)


def _disc(radius: int) -> np.ndarray:
    offs = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(offs, offs, indexing="ij")
    return (dy**2 + dx**2) <= radius**2


def _random_blob(
    shape: tuple[int, int],
    area_cap: int,
    rng: np.random.Generator,
    center: tuple[int, int] | None = None,
) -> np.ndarray:
    """A random disc blob with at most ``area_cap`` pixels, clipped at borders."""
    h, w = shape
    radius = max(1, int(np.sqrt(max(area_cap, 1) / np.pi)))
    radius = int(rng.integers(1, radius + 1))
    if center is None:
        r = int(rng.integers(0, h))
        c = int(rng.integers(0, w))
    else:
        r, c = center
    blob = np.zeros(shape, dtype=bool)
    se = _disc(radius)
    offs = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(offs, offs, indexing="ij")
    rr = (r + dy[se]).ravel()
    cc = (c + dx[se]).ravel()
    keep = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
    blob[rr[keep], cc[keep]] = True
    return blob


def _apply_op(
    m: np.ndarray, gt: np.ndarray, gt_area: int, op: int, rng: np.random.Generator
) -> np.ndarray:
    """One perturbation op: 0 dilate, 1 erode, 2 region drop, 3 region add."""
    if op in (0, 1):
        radius = int(rng.integers(1, 6))
        se = _disc(radius)
        if op == 0:
            return ndimage.binary_dilation(m, structure=se)
        return ndimage.binary_erosion(m, structure=se)
    cap = max(1, int(0.05 * gt_area))
    if op == 2:
        # drop a chunk of what the mask still gets right, so the op always
        # lowers the IoU even when dilation has saturated the frame
        idx = np.nonzero((m & gt).ravel())[0]
        if idx.size == 0:
            idx = np.nonzero(m.ravel())[0]
        if idx.size == 0:
            return m
        flat = int(rng.choice(idx))
        center = (flat // m.shape[1], flat % m.shape[1])
        return m & ~_random_blob(m.shape, cap, rng, center=center)
    return m | _random_blob(m.shape, cap, rng)


def _partial_apply(before: np.ndarray, perm: np.ndarray, frac: float) -> np.ndarray:
    """Apply a prefix of the (pre-permuted) changed pixels of an op.

    Prefixes nest, so the applied set grows monotonically with ``frac`` and
    the IoU responds monotonically; that makes bisection over ``frac`` exact.
    """
    take = int(round(frac * len(perm)))
    out = before.copy().ravel()
    out[perm[:take]] = ~out[perm[:take]]
    return out.reshape(before.shape)


def perturb_to_iou(gt: np.ndarray, cfg: PerturbConfig) -> np.ndarray:
    """Degrade a GT mask until its IoU with the original hits the target.

    Boundary ops (random-radius dilation/erosion) alternate with region ops
    (random blob drop/add); the op of each class is drawn by cfg.op_weights.
    When an op crosses the target band, it is re-applied partially with a
    bisected pixel fraction so the result lands inside the band. Deterministic
    given cfg.seed.
    """
    gt = as_mask(gt)
    if not gt.any():
        raise ValueError("gt mask must be nonempty")
    if cfg.target_iou + cfg.tolerance >= 1.0:
        return gt.copy()

    rng = np.random.default_rng(cfg.seed)
    gt_area = int(gt.sum())
    weights = np.asarray(cfg.op_weights, dtype=np.float64)
    if weights.shape != (4,) or (weights < 0).any() or weights.sum() <= 0:
        raise ValueError("op_weights must be 4 nonnegative reals, not all zero")
    band = cfg.tolerance + 1e-12
    m = gt.copy()

    for it in range(cfg.max_steps):
        cur = iou(m, gt)
        if abs(cur - cfg.target_iou) <= band:
            return m
        if cur < cfg.target_iou - band:
            # a discrete op undershot the band and bisection could not fix it
            m = gt.copy()
            continue
        ops = (0, 1) if it % 2 == 0 else (2, 3)
        w = weights[list(ops)]
        if w.sum() <= 0:
            continue
        op = int(rng.choice(ops, p=w / w.sum()))
        cand = _apply_op(m, gt, gt_area, op, rng)
        new = iou(cand, gt)
        if new >= cur - 1e-12:
            # op failed to move the IoU toward the target; redraw next round
            continue
        if new >= cfg.target_iou - band:
            m = cand
            continue
        # crossed below the band: bisect the fraction of applied pixels
        perm = rng.permutation(np.nonzero((m ^ cand).ravel())[0])
        lo, hi = 0.0, 1.0
        for _ in range(24):
            mid = 0.5 * (lo + hi)
            trial = _partial_apply(m, perm, mid)
            ti = iou(trial, gt)
            if abs(ti - cfg.target_iou) <= band:
                return trial
            if ti > cfg.target_iou:
                lo = mid
            else:
                hi = mid
        m = _partial_apply(m, perm, lo)

    achieved = iou(m, gt)
    raise PerturbationError(
        f"could not reach IoU {cfg.target_iou} +/- {cfg.tolerance} in "
        f"{cfg.max_steps} steps (got {achieved:.4f})"
    )


def session_restart_steps(rng: np.random.Generator) -> int:
    """Number of extra simulated-click steps when restarting a session."""
    return int(rng.integers(0, 4))
