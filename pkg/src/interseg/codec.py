"""Run-length mask codec for the HTTP wire format.

A binary mask is flattened row-major and stored as alternating run lengths,
always starting with the length of the leading zero run (possibly 0). Runs
are uint32 little-endian, base64-wrapped for JSON transport alongside the
mask dimensions.
"""

from __future__ import annotations

import base64

import numpy as np

from .raster import as_mask

__all__ = ["encode_mask", "decode_mask"]


def _run_lengths(flat: np.ndarray) -> np.ndarray:
    if flat.size == 0:
        return np.zeros(0, dtype=np.uint32)
    boundaries = np.nonzero(np.diff(flat))[0] + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges)
    if flat[0]:
        # encoding starts with a zero run by convention
        runs = np.concatenate(([0], runs))
    return runs.astype("<u4")


def encode_mask(mask: np.ndarray) -> dict:
    """Encode a binary mask as {"h", "w", "rle"} with base64 run lengths."""
    m = as_mask(mask)
    h, w = m.shape
    runs = _run_lengths(m.ravel())
    return {
        "h": int(h),
        "w": int(w),
        "rle": base64.b64encode(runs.tobytes()).decode("ascii"),
    }


def decode_mask(payload: dict) -> np.ndarray:
    """Exact inverse of encode_mask; validates counts against h*w."""
    try:
        h = int(payload["h"])
        w = int(payload["w"])
        raw = base64.b64decode(payload["rle"], validate=True)
    except (KeyError, TypeError, ValueError) as e:
        raise ValueError(f"malformed mask payload: {e}") from e
    if h <= 0 or w <= 0:
        raise ValueError(f"bad mask dimensions {h}x{w}")
    if len(raw) % 4 != 0:
        raise ValueError("run-length buffer not a multiple of 4 bytes")
    runs = np.frombuffer(raw, dtype="<u4")
    if int(runs.sum()) != h * w:
        raise ValueError(
            f"run lengths sum to {int(runs.sum())}, expected {h * w}"
        )
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        nxt = pos + int(run)
        if value:
            flat[pos:nxt] = True
        pos = nxt
        value = not value
    return flat.reshape(h, w)
