"""Synthetic scene generation: flat-color targets on textured backgrounds.

The public datasets the harness normally runs on cannot be bundled, so this
module fabricates scenes with known ground truth: a flat-color elliptical
target (good contrast against the background), optional flat distractor
blobs, and a low-frequency textured background. Flat target colors make the
geodesic baseline's behavior predictable, which the directional experiments
rely on.

Scenes are deterministic functions of their spec (including the seed), and
``write_dataset`` emits the on-disk layout the evaluation loader reads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .raster import save_image, save_mask
from .zoom import bilinear_resize

__all__ = ["SceneSpec", "Scene", "generate_scene", "generate_scenes", "write_dataset"]


@dataclass(frozen=True)
class SceneSpec:
    height: int = 256
    width: int = 256
    target_area_frac: tuple[float, float] = (0.02, 0.15)
    distractors: int = 2
    texture_amp: float = 0.06
    min_contrast: float = 0.35
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.target_area_frac
        if not 0.0 < lo <= hi < 0.8:
            raise ValueError("target_area_frac must satisfy 0 < lo <= hi < 0.8")
        if self.height < 16 or self.width < 16:
            raise ValueError("scenes smaller than 16x16 are not supported")


@dataclass(frozen=True)
class Scene:
    image: np.ndarray
    mask: np.ndarray


def _ellipse(
    h: int, w: int, cy: float, cx: float, ry: float, rx: float, theta: float
) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy = yy - cy
    dx = xx - cx
    ct, st = np.cos(theta), np.sin(theta)
    u = ct * dx + st * dy
    v = -st * dx + ct * dy
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _random_ellipse(
    h: int, w: int, area_frac: float, rng: np.random.Generator
) -> np.ndarray:
    area = area_frac * h * w
    aspect = float(rng.uniform(0.45, 1.0))
    base = np.sqrt(area / np.pi)
    ry = base / np.sqrt(aspect)
    rx = base * np.sqrt(aspect)
    ry = min(ry, 0.45 * h)
    rx = min(rx, 0.45 * w)
    cy = float(rng.uniform(ry + 1, h - ry - 1)) if h - 2 * ry - 2 > 0 else h / 2
    cx = float(rng.uniform(rx + 1, w - rx - 1)) if w - 2 * rx - 2 > 0 else w / 2
    theta = float(rng.uniform(0, np.pi))
    return _ellipse(h, w, cy, cx, ry, rx, theta)


def _distinct_color(
    rng: np.random.Generator, away_from: np.ndarray, min_dist: float
) -> np.ndarray:
    for _ in range(64):
        c = rng.uniform(0.05, 0.95, size=3)
        if np.linalg.norm(c - away_from) >= min_dist:
            return c
    # opposite corner of the color cube always clears any min_dist <= sqrt(3)/2
    return np.where(away_from > 0.5, 0.05, 0.95)


def generate_scene(spec: SceneSpec) -> Scene:
    """One deterministic scene: textured background, distractors, flat target."""
    h, w = spec.height, spec.width
    rng = np.random.default_rng(spec.seed)

    base = rng.uniform(0.2, 0.8, size=3)
    coarse = rng.uniform(-1.0, 1.0, size=(6, 6, 3)) * spec.texture_amp
    image = np.clip(base + bilinear_resize(coarse, h, w), 0.0, 1.0)

    frac = float(rng.uniform(*spec.target_area_frac))
    target = _random_ellipse(h, w, frac, rng)
    target_color = _distinct_color(rng, base, spec.min_contrast)

    for _ in range(spec.distractors):
        for _attempt in range(10):
            blob = _random_ellipse(h, w, float(rng.uniform(0.01, 0.08)), rng)
            color = _distinct_color(rng, base, 0.2)
            if not (blob & target).any() and np.linalg.norm(
                color - target_color
            ) >= 0.2:
                image[blob] = color
                break

    image[target] = target_color

    return Scene(image=image, mask=target)


def generate_scenes(count: int, template: SceneSpec) -> list[Scene]:
    """``count`` scenes with seeds spawned from the template's seed."""
    seeds = np.random.SeedSequence(template.seed).generate_state(count)
    return [generate_scene(replace(template, seed=int(s))) for s in seeds]


def write_dataset(scenes: list[Scene], out_dir: str | Path) -> Path:
    """Write scenes in the evaluation layout: images/ plus masks/<stem>/0.png."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    lines = []
    for i, scene in enumerate(scenes):
        stem = f"scene_{i:04d}"
        save_image(scene.image, out / "images" / f"{stem}.png")
        (out / "masks" / stem).mkdir(exist_ok=True)
        save_mask(scene.mask, out / "masks" / stem / "0.png")
        lines.append(f"{stem}.png\t{stem}/0.png\t{stem}:0")
    (out / "index.tsv").write_text("\n".join(lines) + "\n")
    return out
