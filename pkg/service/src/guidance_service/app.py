"""FastAPI application serving the guidance wire protocol."""

from __future__ import annotations

import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .backends import BackendConfig, MockBackend
from .wire import (
    PROTOCOL_VERSION,
    WireError,
    embed_text,
    encode_tensor,
    procedural_pointcloud,
)

log = logging.getLogger("guidance_service")


def create_app(config: BackendConfig | None = None) -> FastAPI:
    backend = MockBackend(config or BackendConfig())
    app = FastAPI(title="guidance-service", version=__version__)

    def bad_request(message: str, request_id=None):
        body = {"error": message}
        if request_id is not None:
            body["request_id"] = request_id
        return JSONResponse(status_code=400, content=body)

    async def common(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return None, bad_request("request body is not valid JSON")
        if not isinstance(payload, dict):
            return None, bad_request("request body must be a JSON object")
        if payload.get("version") != PROTOCOL_VERSION:
            return None, bad_request(
                f"protocol version {payload.get('version')!r} unsupported, "
                f"server speaks {PROTOCOL_VERSION!r}"
            )
        if "request_id" not in payload:
            return None, bad_request("request_id is required")
        return payload, None

    @app.get("/health")
    def health():
        return {"protocol": PROTOCOL_VERSION, "version": __version__, "mode": backend.mode}

    @app.post("/embed_text")
    async def embed(request: Request):
        payload, err = await common(request)
        if err is not None:
            return err
        prompt = payload.get("prompt")
        if not isinstance(prompt, str):
            return bad_request("prompt must be a string", payload["request_id"])
        log.info("embed_text id=%s prompt=%r", payload["request_id"], prompt[:80])
        return {
            "version": PROTOCOL_VERSION,
            "request_id": payload["request_id"],
            "embedding": encode_tensor(embed_text(prompt)),
        }

    @app.post("/denoise")
    async def denoise(request: Request):
        payload, err = await common(request)
        if err is not None:
            return err
        try:
            noise = backend.denoise(payload)
        except WireError as exc:
            return bad_request(str(exc), payload["request_id"])
        log.info("denoise id=%s t=%s", payload["request_id"], payload.get("timestep"))
        return {
            "version": PROTOCOL_VERSION,
            "request_id": payload["request_id"],
            "noise": encode_tensor(noise),
        }

    @app.post("/refine")
    async def refine(request: Request):
        payload, err = await common(request)
        if err is not None:
            return err
        try:
            refined = backend.refine(payload)
        except WireError as exc:
            return bad_request(str(exc), payload["request_id"])
        log.info("refine id=%s views=%d", payload["request_id"], len(refined))
        return {
            "version": PROTOCOL_VERSION,
            "request_id": payload["request_id"],
            "views": [encode_tensor(v) for v in refined],
        }

    @app.post("/pointcloud")
    async def pointcloud(request: Request):
        payload, err = await common(request)
        if err is not None:
            return err
        prompt = payload.get("prompt", "sphere")
        count = payload.get("count", 1024)
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            return bad_request("count must be a positive integer", payload["request_id"])
        try:
            points, colors = procedural_pointcloud(str(prompt), count)
        except WireError as exc:
            return bad_request(str(exc), payload["request_id"])
        log.info("pointcloud id=%s prompt=%r n=%d", payload["request_id"], prompt, len(points))
        return {
            "version": PROTOCOL_VERSION,
            "request_id": payload["request_id"],
            "points": encode_tensor(points),
            "colors": encode_tensor(colors),
        }

    @app.exception_handler(Exception)
    async def on_error(request: Request, exc: Exception):  # pragma: no cover
        log.exception("backend failure")
        return JSONResponse(status_code=500, content={"error": str(exc)})

    return app
