"""HTTP/JSON review service consumed by the review UI and the oracle loop."""

from __future__ import annotations

import io
import threading
import time
from pathlib import Path

import numpy as np
import uvicorn
from fastapi import FastAPI, HTTPException, Query, Response
from PIL import Image
from pydantic import BaseModel

from lsbseg.errors import DataError
from lsbseg.hitl.review import DecisionConflict, HitlStore
from lsbseg.imaging.image import read_lsb1
from lsbseg.masks import rle_encode

DATASET_SUBDIR = "dataset"


class DecisionBody(BaseModel):
    status: str


def _item_json(item) -> dict:
    return {
        "id": item.id,
        "sample_id": item.sample_id,
        "class": item.cls,
        "score": item.score,
        "bbox": list(item.bbox),
        "round": item.round,
        "status": item.status,
        "decided_at": item.decided_at,
    }


def render_channel_png(
    pixels: np.ndarray, channel: int, stretch: str, a: float, b: float
) -> bytes:
    """8-bit PNG of one channel, optionally arcsinh-stretched, robustly scaled."""
    if not 0 <= channel < pixels.shape[2]:
        raise DataError(f"channel {channel} out of range")
    plane = pixels[:, :, channel].astype(np.float64)
    if stretch == "arcsinh":
        plane = np.arcsinh(a * plane + b)
    elif stretch != "none":
        raise DataError(f"unknown stretch {stretch!r}")
    lo, hi = np.percentile(plane, 1.0), np.percentile(plane, 99.5)
    if hi <= lo:
        scaled = np.zeros_like(plane)
    else:
        scaled = np.clip((plane - lo) / (hi - lo), 0.0, 1.0)
    img = Image.fromarray((scaled * 255).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def create_app(state_dir: str | Path, store: HitlStore | None = None) -> FastAPI:
    state_dir = Path(state_dir)
    store = store if store is not None else HitlStore(state_dir)
    dataset_dir = state_dir / DATASET_SUBDIR
    app = FastAPI(title="lsbseg review service")
    app.state.store = store

    @app.get("/api/queue")
    def get_queue(
        round: int | None = Query(default=None),
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=50, ge=1, le=500),
    ):
        items = store.pending(round=round)
        start = (page - 1) * page_size
        return {
            "items": [_item_json(i) for i in items[start : start + page_size]],
            "total": len(items),
            "page": page,
            "page_size": page_size,
        }

    @app.get("/api/items/{item_id}/mask")
    def get_mask(item_id: str):
        item = store.items.get(item_id)
        if item is None:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id!r}")
        h, w = item.mask.shape
        return {"id": item_id, "height": h, "width": w, "mask_rle": rle_encode(item.mask)}

    @app.post("/api/items/{item_id}/decision")
    def post_decision(item_id: str, body: DecisionBody):
        try:
            item, changed = store.decide(item_id, body.status)
        except DecisionConflict as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except DataError as exc:
            code = 404 if "unknown review item" in str(exc) else 422
            raise HTTPException(status_code=code, detail=str(exc)) from exc
        return {"item": _item_json(item), "changed": changed}

    @app.get("/api/samples/{sample_id}/image")
    def get_image(
        sample_id: str,
        stretch: str = Query(default="arcsinh"),
        a: float = Query(default=1.0),
        b: float = Query(default=0.0),
        channel: int = Query(default=0, ge=0),
    ):
        image_path = dataset_dir / "images" / f"{sample_id}.lsb1"
        if not image_path.exists():
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id!r}")
        image = read_lsb1(image_path, image_id=sample_id)
        try:
            png = render_channel_png(image.pixels, channel, stretch, a, b)
        except DataError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return Response(content=png, media_type="image/png")

    @app.get("/api/progress")
    def get_progress():
        return store.progress()

    return app


class ServiceHandle:
    """A review service running on a background thread."""

    def __init__(self, server: uvicorn.Server, thread: threading.Thread, port: int):
        self.server = server
        self.thread = thread
        self.port = port

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def stop(self) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=10)


def serve_in_background(
    state_dir: str | Path, store: HitlStore | None = None, port: int = 0
) -> ServiceHandle:
    """Start the service on a daemon thread; port 0 picks a free port."""
    app = create_app(state_dir, store=store)
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("review service failed to start")
        time.sleep(0.02)
    actual_port = server.servers[0].sockets[0].getsockname()[1]
    return ServiceHandle(server=server, thread=thread, port=actual_port)


def run_service(state_dir: str | Path, port: int) -> None:
    """Blocking serve, used by the CLI."""
    app = create_app(state_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="info")
