"""Shared fixtures and independent brute-force reference implementations.

The references here are deliberately written as plain loops over pixels so
they share no code path with the package; tests compare the fast
implementations against these.
"""

import math

import numpy as np
import pytest

from interseg.scenes import SceneSpec, generate_scene


def iou_ref(a: np.ndarray, b: np.ndarray) -> float:
    inter = 0
    union = 0
    for x, y in zip(a.ravel(), b.ravel()):
        if x and y:
            inter += 1
        if x or y:
            union += 1
    return 1.0 if union == 0 else inter / union


def edt_ref(mask: np.ndarray) -> np.ndarray:
    """Distance from each True pixel to the nearest False pixel, where
    everything outside the frame counts as False (zero padding)."""
    h, w = mask.shape
    zeros = [(-1, c) for c in range(-1, w + 1)]
    zeros += [(h, c) for c in range(-1, w + 1)]
    zeros += [(r, -1) for r in range(h)] + [(r, w) for r in range(h)]
    zeros += [(r, c) for r in range(h) for c in range(w) if not mask[r, c]]
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            if mask[r, c]:
                out[r, c] = min(
                    math.hypot(r - zr, c - zc) for zr, zc in zeros
                )
    return out


def inner_band_ref(mask: np.ndarray, band: int) -> np.ndarray:
    return mask & (edt_ref(mask) <= band)


def bilinear_ref(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Endpoint-aligned bilinear resize, one output pixel at a time."""
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]
    out_shape = (out_h, out_w) + arr.shape[2:]
    out = np.zeros(out_shape)
    for i in range(out_h):
        for j in range(out_w):
            y = i * (h - 1) / (out_h - 1) if out_h > 1 else 0.0
            x = j * (w - 1) / (out_w - 1) if out_w > 1 else 0.0
            y0, x0 = int(math.floor(y)), int(math.floor(x))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = y - y0, x - x0
            top = arr[y0, x0] * (1 - fx) + arr[y0, x1] * fx
            bot = arr[y1, x0] * (1 - fx) + arr[y1, x1] * fx
            out[i, j] = top * (1 - fy) + bot * fy
    return out


def axis_forward_ref(weights, target_size: int, sigma: float) -> np.ndarray:
    """Kernel-weighted mean of source coordinates, scalar loops only."""
    n = len(weights)
    s_norm = sigma / n
    out = np.zeros(target_size)
    for j in range(target_size):
        u = j / (target_size - 1)
        num = den = 0.0
        for i in range(n):
            x = i / (n - 1)
            k = math.exp(-((u - x) ** 2) / (2 * s_norm * s_norm))
            num += k * weights[i] * x
            den += k * weights[i]
        out[j] = num / den
    return out


def sigmoid_ref(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def bce_ref(logit: float, y: float, clamp: float = 1e-7) -> float:
    p = min(max(sigmoid_ref(logit), clamp), 1.0 - clamp)
    return -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))


def focal_value_ref(logits: np.ndarray, gt: np.ndarray, gamma: float) -> float:
    """Normalized focal loss computed with scalar loops."""
    clamp = 1e-7
    betas = []
    bces = []
    for z, y in zip(logits.ravel(), gt.ravel().astype(float)):
        p = min(max(sigmoid_ref(float(z)), clamp), 1.0 - clamp)
        pt = p if y else 1.0 - p
        betas.append((1.0 - pt) ** gamma)
        bces.append(-math.log(pt))
    zbar = max(sum(betas) / len(betas), 1e-12)
    return sum(b * c for b, c in zip(betas, bces)) / (len(betas) * zbar)


def matching_value_ref(
    teacher: np.ndarray, student: np.ndarray, threshold: float = 0.9
) -> float:
    """Confidence-masked teacher-student cross entropy, scalar loops."""
    total = 0.0
    n = teacher.size
    for zt, zs in zip(teacher.ravel(), student.ravel()):
        q = sigmoid_ref(float(zt))
        if q > threshold:
            total += bce_ref(float(zs), q)
    return total / n


@pytest.fixture(scope="session")
def small_scene():
    return generate_scene(SceneSpec(height=64, width=64, seed=11))


@pytest.fixture(scope="session")
def tiny_scene():
    return generate_scene(SceneSpec(height=32, width=32, seed=4))
