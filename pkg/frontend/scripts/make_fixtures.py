"""Regenerate the golden fixtures for the frontend test suite.

Run-length cases come straight from the Python codec; the session trace is
recorded by driving the real HTTP app in-process. Usage:

    python3 scripts/make_fixtures.py --out tests/fixtures
"""

import argparse
import base64
import io
import json
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient
from PIL import Image
from scipy import ndimage

from interseg.codec import encode_mask
from interseg.scenes import SceneSpec, generate_scene
from interseg.server import create_app


def pixels_b64(mask: np.ndarray) -> str:
    return base64.b64encode(mask.astype(np.uint8).tobytes()).decode("ascii")


def rle_cases(count: int = 50) -> list[dict]:
    masks: list[np.ndarray] = [
        np.zeros((1, 1), bool),
        np.ones((1, 1), bool),
        np.zeros((4, 6), bool),
        np.ones((4, 6), bool),
        (np.indices((2, 2)).sum(axis=0) % 2).astype(bool),
        np.eye(5, dtype=bool),
    ]
    m = np.zeros((3, 8), bool)
    m[0, 0] = True
    masks.append(m)
    m = np.zeros((3, 8), bool)
    m[-1, -1] = True
    masks.append(m)
    m = np.zeros((6, 6), bool)
    m[::2] = True
    masks.append(m)
    rng = np.random.default_rng(2024)
    while len(masks) < count:
        h = int(rng.integers(1, 64))
        w = int(rng.integers(1, 64))
        masks.append(rng.random((h, w)) < rng.uniform(0.05, 0.95))
    cases = []
    for m in masks[:count]:
        payload = encode_mask(m)
        payload["pixels_b64"] = pixels_b64(m)
        cases.append(payload)
    return cases


def png_b64(arr: np.ndarray) -> str:
    img = Image.fromarray(arr)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def scene_clicks(gt: np.ndarray, n_positive: int) -> list[dict]:
    """Deepest-interior positive clicks plus one far-background negative."""
    dist = ndimage.distance_transform_edt(np.pad(gt, 1))[1:-1, 1:-1]
    pole = np.unravel_index(int(dist.argmax()), dist.shape)
    rows, cols = np.nonzero(gt)
    second = (int(rows[len(rows) // 4]), int(cols[len(cols) // 4]))
    bg_dist = ndimage.distance_transform_edt(np.pad(~gt, 1))[1:-1, 1:-1]
    neg = np.unravel_index(int(bg_dist.argmax()), bg_dist.shape)
    clicks = [
        {"row": int(pole[0]), "col": int(pole[1]), "positive": True},
        {"row": second[0], "col": second[1], "positive": True},
    ][:n_positive]
    clicks.append({"row": int(neg[0]), "col": int(neg[1]), "positive": False})
    return clicks


def record_session(
    size: int, seed: int, budget: int, clicks: list[dict], undo: bool
) -> dict:
    scene = generate_scene(SceneSpec(height=size, width=size, seed=seed))
    image_u8 = np.clip(scene.image * 255.0, 0, 255).astype(np.uint8)
    gt = scene.mask

    app = create_app()
    exchanges = []
    with TestClient(app) as client:
        body = {
            "image_b64": png_b64(image_u8),
            "gt_b64": png_b64(gt.astype(np.uint8) * 255),
            "segmenter": "oracle",
            "budget": budget,
            "working_size": size,
            "seed": 0,
        }
        res = client.post("/sessions", json=body)
        res.raise_for_status()
        sid = res.json()["id"]
        store = app.state.store

        def snapshot():
            return pixels_b64(store.get(sid).state.current_mask)

        def record(path: str, request: dict, res) -> None:
            exchanges.append(
                {
                    "method": "POST",
                    "path": path,
                    "request": request,
                    "status": res.status_code,
                    "response": res.json(),
                    "pixels_b64": snapshot(),
                }
            )

        record("/sessions", body, res)
        for c in clicks:
            res = client.post(f"/sessions/{sid}/clicks", json=c)
            res.raise_for_status()
            record(f"/sessions/{sid}/clicks", c, res)
        if undo:
            res = client.post(f"/sessions/{sid}/undo", json={})
            res.raise_for_status()
            record(f"/sessions/{sid}/undo", {}, res)
    return {"height": size, "width": size, "exchanges": exchanges}


def session_traces() -> tuple[dict, dict]:
    main_scene = generate_scene(SceneSpec(height=64, width=64, seed=5))
    main = record_session(
        64, 5, 20, scene_clicks(main_scene.mask, n_positive=2), undo=True
    )
    zoom_scene = generate_scene(SceneSpec(height=32, width=32, seed=5))
    zoom = record_session(
        32, 5, 4, scene_clicks(zoom_scene.mask, n_positive=1), undo=False
    )
    return main, zoom


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="tests/fixtures", help="fixture directory")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    main, zoom = session_traces()
    (out / "rle_cases.json").write_text(json.dumps(rle_cases(), indent=1))
    (out / "session_trace.json").write_text(json.dumps(main, indent=1))
    (out / "zoom_trace.json").write_text(json.dumps(zoom, indent=1))
    print(f"wrote fixtures to {out}")


if __name__ == "__main__":
    main()
