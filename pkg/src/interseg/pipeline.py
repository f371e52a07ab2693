"""Per-round inference: coarse pass on a plain downsample, guidance-driven
zoom pass, unwarp, round-scheduled fusion, then local refinement.

A session owns the full-resolution image and feeds every round's segmenter
calls at a square working resolution. Rounds below half the budget skip the
zoom branch entirely (the fusion weight is zero there and building mappings
would be wasted work); later rounds warp the inputs through axis mappings
built from the current mask and click discs, and blend the unwarped result
with the plain branch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .clicksim import next_click
from .raster import (
    Click,
    DEFAULT_DISC_RADIUS,
    as_image,
    as_mask,
    boundary_iou,
    default_boundary_band,
    iou,
    render_discs,
)
from .segmenters import (
    CropRegion,
    Segmenter,
    SegmenterInput,
    ViewTransform,
    refine_local,
    select_refinement_crop,
)
from .zoom import (
    AxisMapping,
    DEFAULT_KERNEL_SIGMA,
    FusionSchedule,
    bilinear_resize,
    build_axis_mapping,
    fuse,
    marginalize,
    resize_mask,
    scale_clicks,
    unwarp_logits,
    warp_clicks,
    warp_image,
    warp_mask,
)

__all__ = [
    "PipelineConfig",
    "RoundRecord",
    "SessionState",
    "BudgetExhausted",
    "new_session",
    "build_guidance",
    "step",
    "SessionTrace",
    "run_session",
]


class BudgetExhausted(RuntimeError):
    """Raised when a step is requested past the interaction budget."""


@dataclass(frozen=True)
class PipelineConfig:
    working_size: int = 256
    budget: int = 20
    kernel_sigma: float = DEFAULT_KERNEL_SIGMA
    pad_ratio: float = 0.4
    refine: bool = True
    use_zoom: bool = True

    def __post_init__(self) -> None:
        if self.working_size < 2:
            raise ValueError("working_size must be >= 2")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")


@dataclass
class RoundRecord:
    """Everything one round produced besides the logit itself."""

    t: int
    click: Click
    lam: float
    seconds: float
    zoomed: bool
    crop: CropRegion | None
    grid_x: np.ndarray | None
    grid_y: np.ndarray | None
    iou: float | None = None
    biou: float | None = None
    # branch diagnostics (pre-refinement), recorded when GT is known
    iou_plain: float | None = None
    iou_fused: float | None = None


@dataclass
class SessionState:
    image: np.ndarray
    gt: np.ndarray | None
    config: PipelineConfig
    clicks: list[Click] = field(default_factory=list)
    current_logit: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    current_mask: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), bool))
    t: int = 0
    rounds: list[RoundRecord] = field(default_factory=list)
    mappings_built: int = 0
    work_image: np.ndarray | None = None

    @property
    def timings(self) -> list[float]:
        return [r.seconds for r in self.rounds]


def new_session(
    image: np.ndarray,
    gt: np.ndarray | None = None,
    config: PipelineConfig = PipelineConfig(),
) -> SessionState:
    image = as_image(image)
    if gt is not None:
        gt = as_mask(gt)
        if gt.shape != image.shape[:2]:
            raise ValueError("gt dimensions do not match the image")
    h, w = image.shape[:2]
    return SessionState(
        image=image,
        gt=gt,
        config=config,
        current_logit=np.full((h, w), -1.0),
        current_mask=np.zeros((h, w), dtype=bool),
    )


def build_guidance(m2: np.ndarray, discs: np.ndarray) -> np.ndarray:
    """Pixel-wise union of the current mask and both click-disc channels."""
    m2 = as_mask(m2)
    if discs.shape[:2] != m2.shape:
        raise ValueError(f"dimension mismatch: {discs.shape[:2]} vs {m2.shape}")
    return np.maximum(m2, discs.any(axis=2)).astype(np.float64)


def _full_res_disc_radius(h: int, w: int, ws: int) -> int:
    """Disc radius at native resolution matching radius 5 at the working size."""
    return max(1, int(round(DEFAULT_DISC_RADIUS * np.sqrt((h / ws) * (w / ws)))))


def step(
    state: SessionState,
    new_click: Click,
    segmenter: Segmenter,
    working_size: int | None = None,
) -> SessionState:
    """Run one interaction round in place and return the state.

    Pass 1 always runs on the plain bilinear downsample. When the fusion
    weight for this round is positive (and zooming is enabled), a second pass
    runs on guidance-warped inputs and the two logits are blended. Refinement
    then re-runs the segmenter on the changed region at native resolution,
    skipped when that region contains no click discs.
    """
    cfg = state.config
    if state.t >= cfg.budget:
        raise BudgetExhausted(f"budget of {cfg.budget} rounds exhausted")
    ws = working_size if working_size is not None else cfg.working_size
    h, w = state.image.shape[:2]
    t = state.t + 1
    started = time.perf_counter()

    click = Click(new_click.row, new_click.col, new_click.positive, round=t)
    state.clicks.append(click)
    prev_mask = state.current_mask

    # pass 1: plain downsample
    if state.work_image is None or state.work_image.shape[:2] != (ws, ws):
        state.work_image = bilinear_resize(state.image, ws, ws)
    work_clicks = scale_clicks(state.clicks, (h, w), (ws, ws))
    work_discs = render_discs(work_clicks, ws, ws)
    work_mask = resize_mask(prev_mask, ws, ws)
    inp1 = SegmenterInput(
        image=state.work_image,
        discs=work_discs,
        initial_mask=work_mask,
        view=ViewTransform(out_h=ws, out_w=ws),
        clicks=tuple(work_clicks),
    )
    o_work = segmenter.coarse_segment(inp1)
    o2 = bilinear_resize(o_work, h, w)
    m2 = o2 > 0.0

    sched = FusionSchedule(cfg.budget)
    lam = sched.weight(t)
    zoomed = False
    grid_x = grid_y = None
    if lam > 0.0 and cfg.use_zoom:
        r_full = _full_res_disc_radius(h, w, ws)
        guide_discs = render_discs(state.clicks, h, w, radius=r_full)
        guidance = build_guidance(m2, guide_discs)
        s_x, s_y = marginalize(guidance)
        mx = build_axis_mapping(s_x, ws, cfg.kernel_sigma)
        my = build_axis_mapping(s_y, ws, cfg.kernel_sigma)
        state.mappings_built += 2
        zoom_image = warp_image(state.image, mx, my)
        zoom_mask = warp_mask(prev_mask, mx, my)
        zoom_clicks = warp_clicks(state.clicks, mx, my)
        zoom_discs = render_discs(zoom_clicks, ws, ws)
        inp2 = SegmenterInput(
            image=zoom_image,
            discs=zoom_discs,
            initial_mask=zoom_mask,
            view=ViewTransform(out_h=ws, out_w=ws, mx=mx, my=my),
            clicks=tuple(zoom_clicks),
        )
        o_zoom = segmenter.coarse_segment(inp2)
        o_tilde = unwarp_logits(o_zoom, mx, my, h, w)
        o_fused = fuse(o2, o_tilde, t, sched)
        grid_x = mx.source_coords()
        grid_y = my.source_coords()
        zoomed = True
    else:
        o_fused = o2

    iou_plain = iou_fused = None
    if state.gt is not None:
        iou_plain = iou(m2, state.gt)
        iou_fused = iou(o_fused > 0.0, state.gt)

    crop = None
    if cfg.refine:
        crop = select_refinement_crop(o_fused > 0.0, prev_mask, cfg.pad_ratio)
        if crop is not None:
            native_discs = render_discs(state.clicks, h, w)
            if native_discs[crop.slices()].any():
                native = SegmenterInput(
                    image=state.image,
                    discs=native_discs,
                    initial_mask=prev_mask,
                    view=ViewTransform(out_h=h, out_w=w),
                    clicks=tuple(state.clicks),
                )
                o_fused = refine_local(o_fused, crop, native, segmenter)
            else:
                crop = None

    state.current_logit = o_fused
    state.current_mask = o_fused > 0.0
    state.t = t
    seconds = time.perf_counter() - started

    rec = RoundRecord(
        t=t,
        click=click,
        lam=lam,
        seconds=seconds,
        zoomed=zoomed,
        crop=crop,
        grid_x=grid_x,
        grid_y=grid_y,
        iou_plain=iou_plain,
        iou_fused=iou_fused,
    )
    if state.gt is not None:
        rec.iou = iou(state.current_mask, state.gt)
        band = default_boundary_band(h, w)
        rec.biou = boundary_iou(state.current_mask, state.gt, band)
    state.rounds.append(rec)
    return state


@dataclass
class SessionTrace:
    """Serializable record of one simulated session."""

    instance: str
    budget: int
    rounds: list[RoundRecord]
    thresholds_met: dict[float, int | None]

    @property
    def ious(self) -> list[float]:
        return [r.iou for r in self.rounds]

    @property
    def bious(self) -> list[float]:
        return [r.biou for r in self.rounds]

    @property
    def final_iou(self) -> float:
        return self.rounds[-1].iou if self.rounds else 0.0

    def to_json(self) -> dict:
        return {
            "instance": self.instance,
            "budget": self.budget,
            "rounds": [
                {
                    "t": r.t,
                    "click": r.click.to_json(),
                    "lambda": r.lam,
                    "seconds": r.seconds,
                    "zoomed": r.zoomed,
                    "iou": r.iou,
                    "biou": r.biou,
                }
                for r in self.rounds
            ],
            "thresholds_met": {
                f"{k:g}": v for k, v in sorted(self.thresholds_met.items())
            },
        }

    @staticmethod
    def from_json(doc: dict) -> "SessionTrace":
        rounds = [
            RoundRecord(
                t=r["t"],
                click=Click.from_json(r["click"]),
                lam=r["lambda"],
                seconds=r["seconds"],
                zoomed=r["zoomed"],
                crop=None,
                grid_x=None,
                grid_y=None,
                iou=r["iou"],
                biou=r["biou"],
            )
            for r in doc["rounds"]
        ]
        return SessionTrace(
            instance=doc["instance"],
            budget=doc["budget"],
            rounds=rounds,
            thresholds_met={float(k): v for k, v in doc["thresholds_met"].items()},
        )


def run_session(
    image: np.ndarray,
    gt: np.ndarray,
    segmenter: Segmenter,
    config: PipelineConfig = PipelineConfig(),
    thresholds: tuple[float, ...] = (0.85, 0.9),
    instance: str = "",
) -> SessionTrace:
    """Simulate a full click session against ground truth.

    Each round clicks the largest remaining error region, steps the pipeline,
    and records IoU/BIoU. The session ends when every threshold has been met
    or the budget is exhausted; with no thresholds it always runs the full
    budget (unless the prediction becomes exact first).
    """
    gt = as_mask(gt)
    if not gt.any():
        raise ValueError("gt mask must be nonempty")
    state = new_session(image, gt, config)
    met: dict[float, int | None] = {float(th): None for th in thresholds}
    for t in range(1, config.budget + 1):
        click = next_click(state.current_mask, gt, round=t)
        if click is None:
            break
        step(state, click, segmenter)
        cur = state.rounds[-1].iou
        for th in met:
            if met[th] is None and cur >= th:
                met[th] = t
        if met and all(v is not None for v in met.values()):
            break
    return SessionTrace(
        instance=instance,
        budget=config.budget,
        rounds=state.rounds,
        thresholds_met=met,
    )
