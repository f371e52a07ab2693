"""Loss stack with hand-written gradients.

Three pieces compose the training objective:

* ``nf_loss``            — normalized focal loss: focal loss whose modulating
                           weights are renormalized to unit mean, with the
                           normalizer held constant during backprop.
* ``mask_matching_loss`` — soft-target BCE between two prediction maps,
                           restricted to pixels where the teacher is confident;
                           gradients flow to the student only.
* ``total_loss``         — supervised term plus the matching term, the latter
                           gated on the quality of the teacher branch's
                           initial mask.

Everything is plain numpy over logit maps; probabilities are clamped to
[1e-7, 1 - 1e-7] before any log. All values are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .raster import as_logits, as_mask, iou

__all__ = [
    "LossConfig",
    "LossBreakdown",
    "nf_loss",
    "mask_matching_loss",
    "supervised_loss",
    "total_loss",
]

P_CLAMP = 1e-7
NORMALIZER_FLOOR = 1e-12


@dataclass(frozen=True)
class LossConfig:
    confidence_threshold: float = 0.9
    gate_alpha: float = 0.8
    focal_gamma: float = 2.0
    edge_weight: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.confidence_threshold < 1.0:
            raise ValueError("confidence_threshold must lie in (0, 1)")
        if not 0.0 < self.gate_alpha < 1.0:
            raise ValueError("gate_alpha must lie in (0, 1)")
        if self.focal_gamma < 0.0:
            raise ValueError("focal_gamma must be nonnegative")
        if self.edge_weight < 0.0:
            raise ValueError("edge_weight must be nonnegative")


@dataclass
class LossBreakdown:
    """One training step's losses; ``total = l_sup + gate_open * l_mr``.

    ``gradients`` maps a name per input logit map (or parameter vector) to the
    gradient of ``total`` with respect to it.
    """

    l_sup: float
    l_mr: float
    gate_open: bool
    total: float
    gradients: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("l_sup", "l_mr", "total"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite")


def _clamped(p: np.ndarray) -> np.ndarray:
    return np.clip(p, P_CLAMP, 1.0 - P_CLAMP)


def nf_loss(
    logits: np.ndarray,
    gt: np.ndarray,
    gamma: float = 2.0,
    normalizer: float | None = None,
) -> tuple[float, np.ndarray, float]:
    """Normalized focal loss and its gradient with respect to the logits.

    With pt the predicted probability of the true class, per-pixel weights
    beta = (1 - pt)^gamma are renormalized by their own mean, so the loss is
    mean(beta * bce) / mean(beta). The backward pass treats the normalizer as
    a constant; finite-difference checks must therefore pin it by passing the
    returned value back through ``normalizer``.

    Returns (value, gradient, normalizer_used).
    """
    logits = as_logits(logits)
    gt = as_mask(gt)
    if logits.shape != gt.shape:
        raise ValueError(f"dimension mismatch: {logits.shape} vs {gt.shape}")
    p = expit(logits)
    pt = np.where(gt, p, 1.0 - p)
    pt_c = _clamped(pt)
    bce = -np.log(pt_c)
    beta = (1.0 - pt) ** gamma
    z = float(normalizer) if normalizer is not None else max(
        float(beta.mean()), NORMALIZER_FLOOR
    )
    n = logits.size
    value = float((beta * bce).sum() / (n * z))

    s = p * (1.0 - p)
    sign = np.where(gt, 1.0, -1.0)
    if gamma == 0.0:
        dbeta = np.zeros(p.shape)
    else:
        margin = 1.0 - pt
        powm1 = np.zeros(p.shape)
        inside = margin > 0.0
        powm1[inside] = margin[inside] ** (gamma - 1.0)
        dbeta = -gamma * powm1 * sign * s
    dbce = -sign * s / pt_c
    grad = (dbeta * bce + beta * dbce) / (n * z)
    return value, grad, z


def mask_matching_loss(
    o_teacher: np.ndarray, o_student: np.ndarray, cfg: LossConfig = LossConfig()
) -> tuple[float, np.ndarray, np.ndarray]:
    """Confidence-masked matching term between two logit maps.

    Soft-target BCE of the student's probabilities against the teacher's,
    averaged over ALL pixels with pixels below the teacher-confidence cut
    contributing zero. The teacher is a constant of the backward pass: its
    returned gradient is identically zero.

    Returns (value, grad_student, grad_teacher).
    """
    o_teacher = as_logits(o_teacher)
    o_student = as_logits(o_student)
    if o_teacher.shape != o_student.shape:
        raise ValueError(
            f"dimension mismatch: {o_teacher.shape} vs {o_student.shape}"
        )
    q = expit(o_teacher)
    p = expit(o_student)
    keep = q > cfg.confidence_threshold
    p_c = _clamped(p)
    bce = -(q * np.log(p_c) + (1.0 - q) * np.log(1.0 - p_c))
    n = o_teacher.size
    value = float(bce[keep].sum() / n)
    grad_student = np.where(keep, p - q, 0.0) / n
    grad_teacher = np.zeros(q.shape)
    return value, grad_student, grad_teacher


def supervised_loss(
    o_coarse: np.ndarray,
    gt: np.ndarray,
    o_refined_crop: np.ndarray,
    gt_crop: np.ndarray,
    edge_logits_crop: np.ndarray,
    edge_gt_crop: np.ndarray,
    cfg: LossConfig = LossConfig(),
    normalizers: tuple[float, float, float] | None = None,
) -> tuple[float, tuple[np.ndarray, np.ndarray, np.ndarray], tuple[float, float, float]]:
    """Three-term supervised objective: full-frame, refined crop, edge crop.

    Each term is an ``nf_loss``; the edge term is scaled by cfg.edge_weight.
    ``normalizers`` pins the three focal normalizers (for finite-difference
    validation); the ones actually used are returned last.

    Returns (value, (grad_coarse, grad_refined, grad_edge), normalizers).
    """
    if np.shape(o_refined_crop) != np.shape(gt_crop) or np.shape(
        o_refined_crop
    ) != np.shape(edge_logits_crop):
        raise ValueError("crop tensors must share dimensions")
    nz = normalizers if normalizers is not None else (None, None, None)
    v1, g1, z1 = nf_loss(o_coarse, gt, cfg.focal_gamma, nz[0])
    v2, g2, z2 = nf_loss(o_refined_crop, gt_crop, cfg.focal_gamma, nz[1])
    v3, g3, z3 = nf_loss(edge_logits_crop, edge_gt_crop, cfg.focal_gamma, nz[2])
    value = v1 + v2 + cfg.edge_weight * v3
    return value, (g1, g2, cfg.edge_weight * g3), (z1, z2, z3)


def total_loss(
    sup: float,
    mr: float,
    m01: np.ndarray,
    gt: np.ndarray,
    cfg: LossConfig = LossConfig(),
) -> LossBreakdown:
    """Gate the matching term on the teacher-branch initial mask's quality.

    The gate opens iff iou(m01, gt) strictly exceeds cfg.gate_alpha.
    """
    gate_open = iou(m01, gt) > cfg.gate_alpha
    return LossBreakdown(
        l_sup=float(sup),
        l_mr=float(mr),
        gate_open=gate_open,
        total=float(sup) + (float(mr) if gate_open else 0.0),
    )
