"""Capture raw HTTP response bytes from the annotation service for the
browser workbench's test suite.

The service runs in-process with deterministic stub decoders (two disjoint
lines, one word each, two layout clusters), so the recorded bytes are stable
across regenerations. The workbench tests replay these bytes through a mock
fetch and assert byte-level agreement, which pins the client to the exact
wire format the server produces.

Usage: python3 scripts/capture_service_fixtures.py
Writes: frontend/tests/fixtures/*.json (raw bytes) + manifest.json
"""

import json
import uuid
from pathlib import Path

import cv2
import numpy as np
from fastapi.testclient import TestClient

from texthier.model import build_model
from texthier.model.network import HierPrediction, PixelTextOutput
from texthier.service import create_app

OUT = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"
FIXED_SESSION_ID = "0123456789abcdef0123456789abcdef"


def box(shape, y0, y1, x0, x1):
    logits = np.full(shape, -8.0, np.float32)
    logits[y0:y1, x0:x1] = 8.0
    return logits


def install_stub_decoders(model):
    """Two disjoint lines with one word each, in two layout clusters."""
    pred_a = HierPrediction(
        word_kernel_lr=box((64, 64), 5, 9, 6, 26),
        word_kernel_hr=box((96, 96), 8, 13, 9, 39),
        line=box((64, 64), 4, 10, 4, 28),
        para=box((64, 64), 2, 12, 2, 30),
        iou_line=0.9,
        iou_para=0.9,
    )
    pred_b = HierPrediction(
        word_kernel_lr=box((64, 64), 42, 48, 10, 28),
        word_kernel_hr=box((96, 96), 63, 72, 15, 42),
        line=box((64, 64), 40, 50, 8, 30),
        para=box((64, 64), 38, 52, 6, 32),
        iou_line=0.8,
        iou_para=0.8,
    )
    # Clicks in the top-right quadrant land on plain background: every
    # logit map stays negative, so no word candidate exists at all.
    pred_bg = HierPrediction(
        word_kernel_lr=np.full((64, 64), -8.0, np.float32),
        word_kernel_hr=np.full((96, 96), -8.0, np.float32),
        line=np.full((64, 64), -8.0, np.float32),
        para=np.full((64, 64), -8.0, np.float32),
        iou_line=0.1,
        iou_para=0.1,
    )

    def route(x, y):
        if y >= 128:
            return pred_b
        return pred_a if x < 160 else pred_bg

    def fake_decode(embedding, points):
        return [route(x, y) for x, y in np.asarray(points)]

    def fake_text(embedding, use_hr=True):
        logits = np.full((256, 256), -5.0, np.float32)
        logits[16:40, 16:112] = 5.0
        logits[160:200, 32:120] = 5.0
        return PixelTextOutput(
            lr_logits=np.full((64, 64), -5.0, np.float32),
            hr_logits=logits,
            iou_pred=0.9,
            token=np.zeros(64, np.float32),
        )

    model.decode_hierarchy = fake_decode
    model.decode_pixel_text = fake_text


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    uuid.uuid4 = lambda: uuid.UUID(hex=FIXED_SESSION_ID)

    model = build_model("desk", seed=0)
    install_stub_decoders(model)
    client = TestClient(create_app(model))

    image = np.full((256, 256, 3), 200, np.uint8)
    image[20:40, 20:110] = 40  # cosmetic ink where the stub predicts line A
    image[160:200, 32:120] = 40  # line B
    ok, png = cv2.imencode(".png", cv2.cvtColor(image, cv2.COLOR_RGB2BGR))
    assert ok

    captured: dict[str, dict] = {}

    def record(name: str, resp, expect: int) -> None:
        assert resp.status_code == expect, (name, resp.status_code, resp.content)
        (OUT / f"{name}.json").write_bytes(resp.content)
        captured[name] = {"status": resp.status_code}

    resp = client.post("/sessions", content=bytes(png))
    record("session_create", resp, 200)
    sid = resp.json()["session_id"]

    # Click inside line A's word kernel -> full word/line/paragraph payload.
    record("prompt_click", client.post(
        f"/sessions/{sid}/prompt", json={"x": 60.0, "y": 30.0}), 200)
    # Click off to the side of line A -> no word under the cursor.
    record("prompt_background", client.post(
        f"/sessions/{sid}/prompt", json={"x": 200.0, "y": 30.0}), 200)

    record("amg", client.post(
        f"/sessions/{sid}/amg", json={"points": 40, "seed": 0}), 200)
    record("export_before", client.get(f"/sessions/{sid}/export"), 200)

    accept_all = [
        {"action": "accept", "level": "line", "index": 0},
        {"action": "accept", "level": "line", "index": 1},
        {"action": "accept", "level": "word", "index": 0},
        {"action": "accept", "level": "word", "index": 1},
    ]
    record("patch_accept_all", client.patch(
        f"/sessions/{sid}/labels", json={"version": 2, "edits": accept_all}), 200)
    record("export_accept_all", client.get(f"/sessions/{sid}/export"), 200)

    # Replaying the old version token must be refused.
    record("patch_stale", client.patch(
        f"/sessions/{sid}/labels", json={"version": 2, "edits": accept_all}), 409)

    record("patch_reject_line0", client.patch(
        f"/sessions/{sid}/labels",
        json={"version": 3,
              "edits": [{"action": "reject", "level": "line", "index": 0}]}), 200)
    record("export_reject_line0", client.get(f"/sessions/{sid}/export"), 200)

    manifest = {
        "session_id": sid,
        "input_size": 256,
        "clicks": {"prompt_click": [60.0, 30.0], "prompt_background": [200.0, 30.0]},
        "accept_all_edits": accept_all,
        "version_sequence": {
            "after_create": 1,
            "after_amg": 2,
            "after_accept_all": 3,
            "after_reject_line0": 4,
        },
        "responses": captured,
    }
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(captured) + 1} files to {OUT}")


if __name__ == "__main__":
    main()
