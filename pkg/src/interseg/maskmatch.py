"""Two-variant consistency training on the differentiable toy segmenter.

One training step builds two initial-mask variants for the same image: the
first from the model's own blank-mask prediction, the second by degrading the
ground truth to the same IoU. Both evolve through a shared number of extra
simulated-click steps, the model predicts once more from each, and the losses
couple the two predictions (confidence-masked matching, gated on variant-1
quality) on top of the supervised objective for variant 1.

Sample generation is split from loss evaluation so the generated data (masks,
click lists, crop, gate) can be held fixed while parameters move, which is
what finite-difference gradient checks and the optimizer loop both need.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .clicksim import PerturbConfig, next_click, perturb_to_iou, session_restart_steps
from .losses import (
    LossBreakdown,
    LossConfig,
    mask_matching_loss,
    nf_loss,
    supervised_loss,
    total_loss,
)
from .raster import Click, as_image, as_mask, edge_map, iou, render_discs
from .segmenters import (
    CropRegion,
    SegmenterInput,
    ToyModelParams,
    _grid_graph,
    select_refinement_crop,
    toy_features,
)

__all__ = [
    "MaskMatchSample",
    "StepStats",
    "generate_maskmatch_sample",
    "maskmatch_losses",
    "maskmatch_training_step",
    "variant_logits",
    "prediction_gap",
    "TrainCurvePoint",
    "TrainResult",
    "train_toy",
]

REFINE_PAD_RATIO = 0.4


@dataclass(frozen=True)
class MaskMatchSample:
    """Frozen per-step training data: two initial masks and click histories.

    ``crop`` is the refinement region selected from variant 1's prediction at
    generation time; ``gate_open`` records whether variant 1's initial mask
    passed the quality gate.
    """

    image: np.ndarray
    gt: np.ndarray
    m01: np.ndarray
    m02: np.ndarray
    clicks1: tuple[Click, ...]
    clicks2: tuple[Click, ...]
    crop: CropRegion | None
    gate_open: bool


@dataclass(frozen=True)
class StepStats:
    """Quantities the backward pass treats as constants.

    Passing these back into ``maskmatch_losses`` re-evaluates the loss with
    the teacher logits and focal normalizers pinned at their original values,
    which makes the loss a plain differentiable function of the parameters
    (the contract finite-difference checks validate).
    """

    teacher_logits: np.ndarray
    normalizers: tuple[float, float, float]


def _threshold(logits: np.ndarray) -> np.ndarray:
    return logits > 0.0


def _forward(
    params: ToyModelParams, image: np.ndarray, clicks: Sequence[Click], m0: np.ndarray, graph
) -> np.ndarray:
    h, w = m0.shape
    discs = render_discs(list(clicks), h, w)
    inp = SegmenterInput(
        image=image, discs=discs, initial_mask=m0, clicks=tuple(clicks)
    )
    return toy_features(inp, graph) @ params.weights + params.bias


def _evolve(
    params: ToyModelParams,
    image: np.ndarray,
    gt: np.ndarray,
    mask: np.ndarray,
    clicks: list[Click],
    steps: int,
    graph,
) -> np.ndarray:
    """Run extra simulated-click rounds, mutating ``clicks`` in place."""
    for _ in range(steps):
        c = next_click(mask, gt, round=len(clicks) + 1)
        if c is None:
            break
        clicks.append(c)
        mask = _threshold(_forward(params, image, clicks, mask, graph))
    return mask


def generate_maskmatch_sample(
    image: np.ndarray,
    gt: np.ndarray,
    params: ToyModelParams,
    seed: int,
    cfg: LossConfig = LossConfig(),
) -> MaskMatchSample:
    """Build one training sample's frozen data at the given parameters.

    Variant 1 starts from a blank mask plus one synthesized click; variant 2
    starts from the ground truth perturbed down to variant 1's IoU. Both then
    take the same random number of extra simulated-click rounds (clicks drawn
    from each variant's own error map), and the refinement crop is selected
    from variant 1's final prediction.
    """
    image = as_image(image)
    gt = as_mask(gt)
    h, w = gt.shape
    rng = np.random.default_rng(seed)
    graph = _grid_graph(image)
    blank = np.zeros((h, w), dtype=bool)

    first = next_click(blank, gt, round=1)
    if first is None:
        raise ValueError("ground truth is empty; nothing to click")
    clicks1 = [first]
    m_prime1 = _threshold(_forward(params, image, clicks1, blank, graph))

    k = session_restart_steps(rng)
    m01 = _evolve(params, image, gt, m_prime1, clicks1, k, graph)

    target = float(np.clip(iou(m_prime1, gt), 1e-3, 1.0 - 1e-9))
    perturb_seed = int(rng.integers(np.iinfo(np.int32).max))
    m_prime2 = perturb_to_iou(gt, PerturbConfig(target_iou=target, seed=perturb_seed))
    clicks2: list[Click] = []
    m02 = _evolve(params, image, gt, m_prime2, clicks2, k, graph)

    o11 = _forward(params, image, clicks1, m01, graph)
    crop = select_refinement_crop(_threshold(o11), m01, REFINE_PAD_RATIO)

    return MaskMatchSample(
        image=image,
        gt=gt,
        m01=m01,
        m02=m02,
        clicks1=tuple(clicks1),
        clicks2=tuple(clicks2),
        crop=crop,
        gate_open=iou(m01, gt) > cfg.gate_alpha,
    )


def _param_grad(grad_logits: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Chain a logit-space gradient through the linear model: returns (9,)."""
    gw = np.tensordot(grad_logits, feats, axes=([0, 1], [0, 1]))
    return np.concatenate([gw, [grad_logits.sum()]])


def maskmatch_losses(
    sample: MaskMatchSample,
    params: ToyModelParams,
    cfg: LossConfig = LossConfig(),
    frozen: StepStats | None = None,
) -> tuple[LossBreakdown, StepStats]:
    """Evaluate the full objective on a frozen sample at given parameters.

    The supervised branch scores variant 1 (full frame plus the refinement
    crop, whose re-run logits also serve as the edge prediction); the matching
    term treats variant 1 as the teacher and variant 2 as the student. The
    returned gradients dict carries per-logit-map gradients plus the chained
    parameter gradients ``params_sup``, ``params_mr`` (ungated), and
    ``params_total``.
    """
    image, gt = sample.image, sample.gt
    h, w = gt.shape
    graph = _grid_graph(image)

    discs1 = render_discs(list(sample.clicks1), h, w)
    inp1 = SegmenterInput(
        image=image, discs=discs1, initial_mask=sample.m01, clicks=sample.clicks1
    )
    feats1 = toy_features(inp1, graph)
    o11 = feats1 @ params.weights + params.bias

    discs2 = render_discs(list(sample.clicks2), h, w)
    inp2 = SegmenterInput(
        image=image, discs=discs2, initial_mask=sample.m02, clicks=sample.clicks2
    )
    feats2 = toy_features(inp2, graph)
    o12 = feats2 @ params.weights + params.bias

    teacher = frozen.teacher_logits if frozen is not None else o11

    if sample.crop is not None:
        cr = sample.crop
        sl = cr.slices()
        local_clicks = tuple(
            Click(row=c.row - cr.top, col=c.col - cr.left, positive=c.positive)
            for c in sample.clicks1
            if cr.top <= c.row < cr.top + cr.height
            and cr.left <= c.col < cr.left + cr.width
        )
        local = SegmenterInput(
            image=image[sl],
            discs=discs1[sl],
            initial_mask=sample.m01[sl],
            clicks=local_clicks,
        )
        feats_crop = toy_features(local)
        o_ref = feats_crop @ params.weights + params.bias
        gt_crop = gt[sl]
        edge_gt_crop = edge_map(gt)[sl]
        l_sup, (g_coarse, g_ref, g_edge), zs = supervised_loss(
            o11,
            gt,
            o_ref,
            gt_crop,
            o_ref,
            edge_gt_crop,
            cfg,
            normalizers=frozen.normalizers if frozen is not None else None,
        )
        sup_params = _param_grad(g_coarse, feats1) + _param_grad(
            g_ref + g_edge, feats_crop
        )
    else:
        z0 = frozen.normalizers[0] if frozen is not None else None
        l_sup, g_coarse, z1 = nf_loss(o11, gt, cfg.focal_gamma, z0)
        g_ref = g_edge = np.zeros((0, 0))
        zs = (z1, 1.0, 1.0)
        sup_params = _param_grad(g_coarse, feats1)

    l_mr, g_student, g_teacher = mask_matching_loss(teacher, o12, cfg)
    mr_params = _param_grad(g_student, feats2)

    breakdown = total_loss(l_sup, l_mr, sample.m01, gt, cfg)
    breakdown.gradients = {
        "coarse": g_coarse,
        "refined": g_ref,
        "edge": g_edge,
        "student": g_student,
        "teacher": g_teacher,
        "params_sup": sup_params,
        "params_mr": mr_params,
        "params_total": sup_params + (mr_params if breakdown.gate_open else 0.0),
    }
    stats = frozen if frozen is not None else StepStats(
        teacher_logits=o11.copy(), normalizers=zs
    )
    return breakdown, stats


def maskmatch_training_step(
    image: np.ndarray,
    gt: np.ndarray,
    params: ToyModelParams,
    seed: int,
    cfg: LossConfig = LossConfig(),
) -> LossBreakdown:
    """Generate a sample and evaluate the objective in one call."""
    sample = generate_maskmatch_sample(image, gt, params, seed, cfg)
    breakdown, _ = maskmatch_losses(sample, params, cfg)
    return breakdown


def variant_logits(
    sample: MaskMatchSample, params: ToyModelParams
) -> tuple[np.ndarray, np.ndarray]:
    """Both variants' prediction logits at the given parameters."""
    image = sample.image
    h, w = sample.gt.shape
    graph = _grid_graph(image)
    o11 = _forward(params, image, sample.clicks1, sample.m01, graph)
    o12 = _forward(params, image, sample.clicks2, sample.m02, graph)
    return o11, o12


def prediction_gap(sample: MaskMatchSample, params: ToyModelParams) -> float:
    """Mean absolute probability disagreement between the two variants."""
    o11, o12 = variant_logits(sample, params)
    return float(np.abs(expit(o11) - expit(o12)).mean())


@dataclass(frozen=True)
class TrainCurvePoint:
    step: int
    total: float
    l_sup: float
    l_mr: float
    gate_open: bool


@dataclass
class TrainResult:
    params: ToyModelParams
    curve: list[TrainCurvePoint]


def _adam_update(
    vec: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
) -> np.ndarray:
    b1, b2, eps = 0.9, 0.999, 1e-8
    m[:] = b1 * m + (1 - b1) * grad
    v[:] = b2 * v + (1 - b2) * grad * grad
    mh = m / (1 - b1**step)
    vh = v / (1 - b2**step)
    return vec - lr * mh / (np.sqrt(vh) + eps)


def initial_toy_params(seed: int) -> ToyModelParams:
    """Small random start; scale keeps early logits out of saturation."""
    rng = np.random.default_rng([seed, 17])
    return ToyModelParams.from_vector(rng.normal(0.0, 0.1, size=9))


def train_toy(
    scenes: Iterable[tuple[np.ndarray, np.ndarray]],
    *,
    use_regularizer: bool,
    seed: int,
    lr: float = 0.1,
    cfg: LossConfig = LossConfig(),
) -> TrainResult:
    """One optimizer pass over the scenes (one step each), hand-rolled Adam.

    Both arms see identical data and identical supervised gradients; the
    regularizer arm adds the gated matching gradient. Deterministic given the
    seed and scene sequence.
    """
    params = initial_toy_params(seed)
    vec = params.to_vector()
    m = np.zeros_like(vec)
    v = np.zeros_like(vec)
    curve: list[TrainCurvePoint] = []
    for i, (image, gt) in enumerate(scenes):
        sample = generate_maskmatch_sample(image, gt, params, seed=seed * 100003 + i, cfg=cfg)
        breakdown, _ = maskmatch_losses(sample, params, cfg)
        grad = breakdown.gradients[
            "params_total" if use_regularizer else "params_sup"
        ]
        vec = _adam_update(vec, grad, m, v, i + 1, lr)
        params = ToyModelParams.from_vector(vec)
        curve.append(
            TrainCurvePoint(
                step=i,
                total=breakdown.total if use_regularizer else breakdown.l_sup,
                l_sup=breakdown.l_sup,
                l_mr=breakdown.l_mr,
                gate_open=breakdown.gate_open,
            )
        )
    return TrainResult(params=params, curve=curve)
