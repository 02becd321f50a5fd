"""Layout detection service.

POST /detect takes a page image (multipart field "image") and returns
PubLayNet-style components: {"components": [{"bbox": [x0, y0, x1, y1],
"label": "text|title|list|table|figure", "score": 0.97}]} in input-image
pixel coordinates.

Two modes, selected by LAYOUT_MODE:
  stub  (default) - no weights; one full-image "text" component, score 1.0
  model           - a DiT-class object-detection checkpoint from MODEL_PATH

The response schema is identical in both modes.
"""

from __future__ import annotations

import io
import logging
import os
import threading
from typing import Optional, Protocol

from fastapi import FastAPI, File, Query, UploadFile
from fastapi.responses import JSONResponse
from PIL import Image

logger = logging.getLogger(__name__)

PUBLAYNET_LABELS = ("text", "title", "list", "table", "figure")
DEFAULT_THRESHOLD = 0.5


class Backend(Protocol):
    def detect(self, image: Image.Image) -> list[dict]: ...


class StubBackend:
    """Deterministic, weight-free: the whole page as a single text block."""

    def detect(self, image: Image.Image) -> list[dict]:
        return [{"bbox": [0, 0, image.width, image.height], "label": "text", "score": 1.0}]


class DitBackend:
    """Object-detection checkpoint (DiT-class) loaded from a local path.

    Inference is serialized behind a lock; the underlying runtimes are not
    reliably reentrant.
    """

    def __init__(self, model_path: str) -> None:
        try:
            import torch
            from transformers import AutoImageProcessor, AutoModelForObjectDetection
        except ImportError as exc:
            raise RuntimeError(f"model backend needs torch+transformers: {exc}") from exc
        self._torch = torch
        self.processor = AutoImageProcessor.from_pretrained(model_path)
        self.model = AutoModelForObjectDetection.from_pretrained(model_path)
        self.model.eval()
        self._lock = threading.Lock()

    def detect(self, image: Image.Image) -> list[dict]:
        with self._lock, self._torch.no_grad():
            inputs = self.processor(images=image, return_tensors="pt")
            outputs = self.model(**inputs)
            target_size = self._torch.tensor([[image.height, image.width]])
            (result,) = self.processor.post_process_object_detection(
                outputs, threshold=0.0, target_sizes=target_size
            )
        components = []
        id2label = self.model.config.id2label
        for score, label_id, box in zip(result["scores"], result["labels"], result["boxes"]):
            label = str(id2label.get(int(label_id), "")).lower()
            if label not in PUBLAYNET_LABELS:
                continue
            x0, y0, x1, y1 = (float(v) for v in box)
            components.append({"bbox": [x0, y0, x1, y1], "label": label, "score": float(score)})
        return components


def create_app(mode: str | None = None, backend: Optional[Backend] = None) -> FastAPI:
    """App factory. `backend` overrides the mode's default backend (used by
    tests to exercise model mode without weights)."""
    mode = mode or os.environ.get("LAYOUT_MODE", "stub")
    if mode not in ("stub", "model"):
        raise ValueError(f"LAYOUT_MODE must be 'stub' or 'model', got {mode!r}")

    app = FastAPI(title="layout-service")
    state = {"mode": mode, "backend": backend, "error": None}

    if state["backend"] is None:
        if mode == "stub":
            state["backend"] = StubBackend()
        else:
            model_path = os.environ.get("MODEL_PATH", "")
            try:
                if not model_path:
                    raise RuntimeError("MODEL_PATH is not set")
                state["backend"] = DitBackend(model_path)
            except Exception as exc:
                # stay up but unloaded: /detect and /health answer 503
                state["error"] = str(exc)
                logger.error("model load failed: %s", exc)

    @app.get("/health")
    def health() -> JSONResponse:
        if state["backend"] is None:
            return JSONResponse(
                {"status": "loading", "mode": state["mode"], "error": state["error"]},
                status_code=503,
            )
        return JSONResponse({"status": "ok", "mode": state["mode"]})

    @app.post("/detect")
    async def detect(
        image: UploadFile | None = File(default=None),
        threshold: float = Query(default=DEFAULT_THRESHOLD, ge=0.0, le=1.0),
    ) -> JSONResponse:
        if state["backend"] is None:
            return JSONResponse(
                {"error": f"model not loaded: {state['error']}"}, status_code=503
            )
        if image is None:
            return JSONResponse({"error": "missing multipart field 'image'"}, status_code=400)
        payload = await image.read()
        try:
            with Image.open(io.BytesIO(payload)) as decoded:
                decoded.load()
                components = state["backend"].detect(decoded)
        except Exception as exc:
            return JSONResponse({"error": f"undecodable image: {exc}"}, status_code=400)
        kept = [c for c in components if c["score"] >= threshold]
        return JSONResponse({"components": kept})

    return app


def main() -> None:
    import uvicorn

    port = int(os.environ.get("PORT", "8081"))
    uvicorn.run(create_app(), host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()
