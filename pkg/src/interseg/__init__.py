"""Interactive segmentation toolkit: target-aware zoom, confidence-gated
self-supervision on simulated interactions, and a click-driven eval harness.
"""

__version__ = "0.1.0"

from .clicksim import PerturbConfig, next_click, perturb_to_iou
from .codec import decode_mask, encode_mask
from .harness import DatasetIndex, EvalConfig, EvalReport, evaluate
from .losses import LossConfig, mask_matching_loss, nf_loss, supervised_loss, total_loss
from .maskmatch import generate_maskmatch_sample, maskmatch_losses, train_toy
from .pipeline import PipelineConfig, SessionTrace, new_session, run_session, step
from .raster import Click, boundary_iou, iou, render_discs
from .scenes import SceneSpec, generate_scene, generate_scenes, write_dataset
from .segmenters import GeodesicSegmenter, OracleSegmenter, SegmenterInput, make_segmenter
from .zoom import AxisMapping, FusionSchedule, build_axis_mapping, marginalize

__all__ = [
    "__version__",
    "Click",
    "iou",
    "boundary_iou",
    "render_discs",
    "AxisMapping",
    "FusionSchedule",
    "build_axis_mapping",
    "marginalize",
    "PerturbConfig",
    "next_click",
    "perturb_to_iou",
    "encode_mask",
    "decode_mask",
    "LossConfig",
    "nf_loss",
    "mask_matching_loss",
    "supervised_loss",
    "total_loss",
    "generate_maskmatch_sample",
    "maskmatch_losses",
    "train_toy",
    "PipelineConfig",
    "SessionTrace",
    "new_session",
    "step",
    "run_session",
    "SceneSpec",
    "generate_scene",
    "generate_scenes",
    "write_dataset",
    "SegmenterInput",
    "GeodesicSegmenter",
    "OracleSegmenter",
    "make_segmenter",
    "DatasetIndex",
    "EvalConfig",
    "EvalReport",
    "evaluate",
]
