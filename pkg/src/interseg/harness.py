"""Dataset loading, click-budget metrics, and parallel evaluation reports.

Metrics follow the usual interactive-segmentation conventions: NoC@theta is
the mean number of clicks to first reach IoU theta (capped at the budget),
NoF@theta counts instances that never reach it, IoU@N / BIoU@N average the
quality after N clicks, and SPC is the grand mean of per-click inference
seconds. A report bundles per-instance traces with aggregates recomputable
from those traces.
"""

from __future__ import annotations

import json
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pipeline import PipelineConfig, SessionTrace, run_session
from .raster import load_image, load_mask
from .segmenters import make_segmenter

__all__ = [
    "DatasetEntry",
    "DatasetIndex",
    "EvalConfig",
    "EvalReport",
    "noc",
    "nof",
    "iou_at",
    "biou_at",
    "spc",
    "evaluate",
]


@dataclass(frozen=True)
class DatasetEntry:
    image: Path
    mask: Path
    instance: str


@dataclass
class DatasetIndex:
    """Evaluation set layout: images/ plus masks/<image-stem>/<instance>.png.

    An optional index.tsv (three tab-separated columns: image file relative
    to images/, mask file relative to masks/, instance id) pins the entry
    order; without it, both directories are scanned in sorted order.
    """

    root: Path
    entries: list[DatasetEntry]

    @classmethod
    def from_directory(cls, root: str | Path) -> "DatasetIndex":
        root = Path(root)
        images = root / "images"
        masks = root / "masks"
        if not images.is_dir() or not masks.is_dir():
            raise FileNotFoundError(f"{root} lacks images/ and masks/ directories")
        entries: list[DatasetEntry] = []
        tsv = root / "index.tsv"
        if tsv.exists():
            for ln, line in enumerate(tsv.read_text().splitlines(), 1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{tsv}:{ln}: expected 3 tab-separated columns")
                entries.append(
                    DatasetEntry(images / parts[0], masks / parts[1], parts[2])
                )
        else:
            for img in sorted(images.glob("*.png")):
                inst_dir = masks / img.stem
                if not inst_dir.is_dir():
                    continue
                for mask in sorted(inst_dir.glob("*.png")):
                    entries.append(
                        DatasetEntry(img, mask, f"{img.stem}:{mask.stem}")
                    )
        if not entries:
            raise ValueError(f"no (image, mask) pairs found under {root}")
        return cls(root=root, entries=entries)


def noc(trace: SessionTrace, threshold: float, budget: int) -> int:
    """Clicks to first reach IoU >= threshold; the budget if never reached."""
    if not trace.rounds:
        raise ValueError("trace has no rounds")
    for r in trace.rounds:
        if r.iou is not None and r.iou >= threshold:
            return r.t
    return budget


def nof(traces: list[SessionTrace], threshold: float) -> int:
    """Instances whose final IoU stays below the threshold."""
    return sum(1 for tr in traces if tr.final_iou < threshold)


def _value_at(trace: SessionTrace, n: int, attr: str) -> float:
    if not trace.rounds:
        raise ValueError("trace has no rounds")
    r = trace.rounds[min(n, len(trace.rounds)) - 1]
    v = getattr(r, attr)
    if v is None:
        raise ValueError(f"trace {trace.instance!r} has no recorded {attr}")
    return float(v)


def iou_at(traces: list[SessionTrace], n: int) -> float:
    """Mean IoU after n clicks; early-ended traces carry their final value."""
    return float(np.mean([_value_at(tr, n, "iou") for tr in traces]))


def biou_at(traces: list[SessionTrace], n: int) -> float:
    """Mean boundary IoU after n clicks, carried forward like iou_at."""
    return float(np.mean([_value_at(tr, n, "biou") for tr in traces]))


def spc(traces: list[SessionTrace]) -> float:
    """Grand mean of per-round inference seconds across every trace."""
    times = [r.seconds for tr in traces for r in tr.rounds]
    if not times:
        raise ValueError("no recorded rounds to average")
    return float(np.mean(times))


@dataclass(frozen=True)
class EvalConfig:
    segmenter: str = "geodesic"
    budget: int = 20
    working_size: int = 256
    thresholds: tuple[float, ...] = (0.85, 0.9)
    report_at: int = 5
    seed: int = 0
    workers: int | None = None

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(working_size=self.working_size, budget=self.budget)


@dataclass
class EvalReport:
    config: dict
    host: dict
    traces: list[SessionTrace]
    errors: list[dict] = field(default_factory=list)

    def aggregates(self) -> dict:
        """Recompute every aggregate from the stored traces."""
        cfg = self.config
        out: dict[str, float] = {}
        for th in cfg["thresholds"]:
            key = f"{th * 100:g}"
            out[f"noc@{key}"] = float(
                np.mean([noc(tr, th, cfg["budget"]) for tr in self.traces])
            )
        top = max(cfg["thresholds"])
        out[f"nof@{top * 100:g}"] = float(nof(self.traces, top))
        n = cfg["report_at"]
        out[f"iou@{n}"] = iou_at(self.traces, n)
        out[f"biou@{n}"] = biou_at(self.traces, n)
        out["spc"] = spc(self.traces)
        return out

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "host": self.host,
            "aggregates": self.aggregates(),
            "traces": [tr.to_json() for tr in self.traces],
            "errors": self.errors,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EvalReport":
        return cls(
            config=data["config"],
            host=data["host"],
            traces=[SessionTrace.from_json(t) for t in data["traces"]],
            errors=list(data.get("errors", [])),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2, sort_keys=True)
            f.write("\n")


def _host_descriptor() -> dict:
    return {
        "machine": platform.machine(),
        "platform": platform.platform(),
        "python": platform.python_version(),
    }


def _instance_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence(base, spawn_key=(index,)).generate_state(1)[0])


def _eval_one(args: tuple) -> tuple[int, dict | None, SessionTrace | None]:
    index, image_path, mask_path, instance, cfg = args
    try:
        image = load_image(image_path)
        gt = load_mask(mask_path)
    except Exception as e:
        return index, {"instance": instance, "error": str(e)}, None
    if image.shape[:2] != gt.shape:
        return index, {
            "instance": instance,
            "error": f"image {image.shape[:2]} and mask {gt.shape} sizes differ",
        }, None
    seg = make_segmenter(cfg.segmenter, gt=gt, seed=_instance_seed(cfg.seed, index))
    trace = run_session(
        image,
        gt,
        seg,
        config=cfg.pipeline_config(),
        thresholds=cfg.thresholds,
        instance=instance,
    )
    return index, None, trace


def evaluate(
    index: DatasetIndex, config: EvalConfig = EvalConfig()
) -> EvalReport:
    """Run one session per dataset instance and aggregate the five metrics.

    Instances run in parallel on a bounded process pool. Unreadable entries
    are reported in the errors list without failing the run. Results are
    ordered by index position, and per-instance seeds depend only on that
    position, so reports are reproducible regardless of scheduling.
    """
    if not index.entries:
        raise ValueError("dataset index is empty")
    jobs = [
        (i, str(e.image), str(e.mask), e.instance, config)
        for i, e in enumerate(index.entries)
    ]
    results: list[tuple[int, dict | None, SessionTrace | None]] = []
    workers = config.workers
    if workers is None:
        import os

        workers = min(8, os.cpu_count() or 1)
    if workers <= 1 or len(jobs) == 1:
        results = [_eval_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_eval_one, jobs, chunksize=1))
    results.sort(key=lambda r: r[0])
    traces = [tr for _, err, tr in results if tr is not None]
    errors = [err for _, err, tr in results if err is not None]
    if not traces:
        raise RuntimeError(f"every dataset entry failed: {errors}")
    return EvalReport(
        config={
            "segmenter": config.segmenter,
            "budget": config.budget,
            "working_size": config.working_size,
            "thresholds": list(config.thresholds),
            "report_at": config.report_at,
            "seed": config.seed,
        },
        host=_host_descriptor(),
        traces=traces,
        errors=errors,
    )
