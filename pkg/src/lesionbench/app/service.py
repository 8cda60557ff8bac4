"""Minimal HTTP inference service.

One model, read-only after load.  ``POST /predict`` takes raw PNG or JPEG
bytes and returns the top-k classes; when a detector is configured the
response also carries the winning lesion box.  A lock serializes forward
passes so concurrent requests never interleave through the torch module.
"""

from __future__ import annotations

import io
import threading

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError

from ..detect import Detector, DetectorConfig, box_argmax
from ..detect import detect as run_detector
from ..metrics import topk_set
from ..pipeline import TrainedModel, predict_image

DEFAULT_MAX_PAYLOAD_BYTES = 8 * 1024 * 1024
_ACCEPTED_CONTENT_TYPES = ("image/png", "image/jpeg")


def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail})


def create_app(
    model: TrainedModel | None = None,
    detector: Detector | None = None,
    detector_cfg: DetectorConfig | None = None,
    topk: int = 5,
    max_payload_bytes: int = DEFAULT_MAX_PAYLOAD_BYTES,
) -> FastAPI:
    """Build the service around an already-loaded model.

    ``model=None`` yields a degraded service whose /predict answers 503 —
    useful for health probes while a model is being prepared.
    """
    if detector is not None and detector_cfg is None:
        raise ValueError("a detector needs its DetectorConfig")
    if topk < 1:
        raise ValueError(f"topk must be >= 1, got {topk}")
    app = FastAPI(title="lesionbench", docs_url=None, redoc_url=None)
    lock = threading.Lock()

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "model_loaded": model is not None}

    @app.get("/models")
    def models() -> dict:
        if model is None:
            return {"models": []}
        return {
            "models": [
                {
                    "model_id": model.model_id,
                    "backbone_id": model.backbone_id,
                    "num_classes": model.num_classes,
                    "class_names": list(model.class_names),
                }
            ]
        }

    @app.post("/predict")
    async def predict(request: Request, sample_id: str | None = Query(default=None)):
        content_type = request.headers.get("content-type", "").split(";")[0].strip().lower()
        if content_type not in _ACCEPTED_CONTENT_TYPES:
            return _error(
                400,
                f"content-type must be one of {list(_ACCEPTED_CONTENT_TYPES)}, got {content_type!r}",
            )
        body = await request.body()
        if len(body) > max_payload_bytes:
            return _error(413, f"payload of {len(body)} bytes exceeds {max_payload_bytes}")
        if model is None:
            return _error(503, "no model loaded")
        try:
            with Image.open(io.BytesIO(body)) as pil:
                image = np.asarray(pil.convert("RGB"))
        except (UnidentifiedImageError, OSError, ValueError):
            return _error(400, "payload is not a decodable image")

        with lock:
            probs = predict_image(model, image)
            box_payload = None
            if detector is not None:
                dets = run_detector(detector, image, detector_cfg, sample_id=sample_id)
                best = box_argmax(dets)
                if best is not None:
                    sbox, class_id, score = best
                    box_payload = {
                        "xmin": sbox.box.xmin,
                        "ymin": sbox.box.ymin,
                        "xmax": sbox.box.xmax,
                        "ymax": sbox.box.ymax,
                        "class_id": class_id,
                        "score": score,
                    }

        k = min(topk, model.num_classes)
        return {
            "topk": [
                {
                    "class_id": int(c),
                    "class_name": model.class_names[c],
                    "prob": float(probs[c]),
                }
                for c in topk_set(probs, k)
            ],
            "box": box_payload,
        }

    return app
