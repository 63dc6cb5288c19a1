"""HTTP inference service over a loaded checkpoint.

The model is immutable once loaded; every request works on its own tensors
with gradients off.  Stylize jobs run on a bounded FIFO executor so at most
``max_inflight`` inferences are in flight and excess requests wait in
arrival order.  Uploads are multipart (PNG content image plus a JSON
``options`` part naming exactly one weight selector); everything else is
JSON except the PNG responses.
"""

from __future__ import annotations

import contextlib
import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from fastapi import FastAPI, Form, Request, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .autodiff import no_grad
from .images import ImageError, decode_png, encode_png, fit_to_square, load_image
from .model import MultiStyleModel, load_checkpoint
from .remix import convex_combination, cst_weights, embed_styles, perturb_weights

__all__ = ["create_app", "ModelHolder", "find_ui_dir", "serve", "MAX_UPLOAD_BYTES"]

MAX_UPLOAD_BYTES = 8 * 1024 * 1024

_SELECTOR_KEYS = ("style", "weights", "combine", "perturb", "cst")


class ModelHolder:
    """Mutable slot so the app can exist before its checkpoint finishes loading."""

    def __init__(self, model: MultiStyleModel | None = None):
        self.model = model

    def load(self, path: str) -> None:
        self.model = load_checkpoint(path)


class _ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _resolve_weights(model: MultiStyleModel, options: dict) -> np.ndarray:
    present = [k for k in _SELECTOR_KEYS if options.get(k) is not None]
    if len(present) != 1:
        raise _ApiError(400, f"exactly one of {list(_SELECTOR_KEYS)} must be set, got {present}")
    key = present[0]
    value = options[key]
    c = model.config.basis_channels

    if key == "style":
        try:
            return model.style_weights(str(value)).data
        except KeyError as e:
            raise _ApiError(400, str(e)) from None
    if key == "weights":
        arr = np.asarray(value, dtype=np.float32)
        if arr.shape != (c,):
            raise _ApiError(400, f"weights must be a list of {c} floats")
        if not np.all(np.isfinite(arr)):
            raise _ApiError(400, "weights must be finite")
        return arr
    if key == "combine":
        try:
            a = model.style_weights(str(value["a"])).data
            b = model.style_weights(str(value["b"])).data
            return convex_combination(a, b, float(value["alpha"]))
        except KeyError as e:
            raise _ApiError(400, f"combine spec needs a, b, alpha: {e}") from None
        except ValueError as e:
            raise _ApiError(400, str(e)) from None
    if key == "perturb":
        try:
            base = model.style_weights(str(value["style"])).data
        except KeyError as e:
            raise _ApiError(400, str(e)) from None
        mu = float(value.get("mu", 1.0 / c))
        sigma = float(value.get("sigma", 0.005))
        seed = int(value.get("seed", 0))
        try:
            return perturb_weights(base, mu=mu, sigma=sigma, seed=seed)
        except (ValueError, RuntimeError) as e:
            raise _ApiError(400, str(e)) from None
    mode = str(value)
    try:
        return cst_weights(model.registry, mode)
    except ValueError as e:
        raise _ApiError(400, str(e)) from None


def _style_thumb(model: MultiStyleModel, name: str, size: int = 96) -> bytes:
    ref = model.registry.ref_images.get(name)
    if ref and os.path.exists(ref):
        try:
            return encode_png(fit_to_square(load_image(ref), size))
        except ImageError:
            pass
    # Without a reference image, render the weight vector as a color strip.
    w = model.style_weights(name).data
    lo, hi = float(w.min()), float(w.max())
    span = hi - lo if hi > lo else 1.0
    t = (w - lo) / span
    strip = np.stack([t, 0.2 + 0.6 * t, 1.0 - t])[:, None, :]
    img = np.repeat(strip, size, axis=1)
    cols = np.linspace(0, w.shape[0] - 1, size).round().astype(int)
    return encode_png(img[:, :, cols])


def create_app(model: MultiStyleModel | None = None, *, ckpt_path: str | None = None,
               holder: ModelHolder | None = None, seed: int = 0, max_inflight: int = 2,
               static_dir: str | None = None, embedding_iters: int = 500) -> FastAPI:
    """Build the FastAPI app around a model, a checkpoint path, or a holder."""
    if holder is None:
        holder = ModelHolder(model)

    @contextlib.asynccontextmanager
    async def lifespan(_app: FastAPI):
        if ckpt_path is not None and holder.model is None:
            holder.load(ckpt_path)
        yield
        _app.state.executor.shutdown(wait=False)

    app = FastAPI(title="stylemix inference service", lifespan=lifespan)
    app.state.holder = holder
    app.state.executor = ThreadPoolExecutor(max_workers=max(1, max_inflight))
    app.state.embedding_cache = None
    app.state.embedding_lock = threading.Lock()
    app.state.embedding_seed = seed
    app.state.embedding_iters = embedding_iters

    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    def _model() -> MultiStyleModel:
        m = holder.model
        if m is None:
            raise _ApiError(503, "model checkpoint is still loading")
        return m

    @app.exception_handler(_ApiError)
    async def _api_error(_request: Request, exc: _ApiError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/api/styles")
    def styles():
        m = _model()
        return [{"name": layer.name,
                 "weights": [float(v) for v in m.style_weights(layer.name).data],
                 "thumb_url": f"/api/styles/{layer.name}/thumb"}
                for layer in m.registry]

    @app.get("/api/styles/{name}/thumb")
    def style_thumb(name: str):
        m = _model()
        try:
            m.registry.get(name)
        except KeyError as e:
            raise _ApiError(404, str(e)) from None
        return Response(content=_style_thumb(m, name), media_type="image/png")

    @app.post("/api/stylize")
    def stylize(content: UploadFile, options: str = Form(...)):
        m = _model()
        raw = content.file.read(MAX_UPLOAD_BYTES + 1)
        if len(raw) > MAX_UPLOAD_BYTES:
            raise _ApiError(413, f"content image exceeds the {MAX_UPLOAD_BYTES} byte limit")
        try:
            opts = json.loads(options)
        except json.JSONDecodeError as e:
            raise _ApiError(400, f"options part is not valid JSON: {e}") from None
        if not isinstance(opts, dict):
            raise _ApiError(400, "options must be a JSON object")
        w = _resolve_weights(m, opts)
        try:
            img = decode_png(raw)
        except ImageError as e:
            raise _ApiError(400, str(e)) from None
        original = img.shape[1:]
        size = m.config.image_size

        def job() -> bytes:
            fitted = fit_to_square(img, size)
            with no_grad():
                out = m.stylize(fitted[None], w)
            return encode_png(out.data[0])

        png = app.state.executor.submit(job).result()
        headers = {"X-Resized-To": f"{size}x{size}",
                   "X-Original-Size": f"{original[0]}x{original[1]}"}
        return Response(content=png, media_type="image/png", headers=headers)

    @app.get("/api/embedding")
    def embedding():
        m = _model()
        if len(m.registry) < 3:
            raise _ApiError(409, f"embedding needs at least 3 styles, the registry has "
                                 f"{len(m.registry)}")
        with app.state.embedding_lock:
            if app.state.embedding_cache is None:
                result = embed_styles(m, seed=app.state.embedding_seed,
                                      iters=app.state.embedding_iters)
                app.state.embedding_cache = {
                    "coords": [[float(x), float(y)] for x, y in result.coords],
                    "names": result.names,
                    "perplexity": result.perplexity,
                    "seed": result.seed,
                    "final_kl": result.final_kl,
                }
        return app.state.embedding_cache

    if static_dir is not None and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def find_ui_dir() -> str | None:
    """The built frontend bundle, when running from a source checkout."""
    here = os.path.dirname(os.path.abspath(__file__))
    for base in (os.getcwd(), os.path.normpath(os.path.join(here, "..", ".."))):
        candidate = os.path.join(base, "frontend", "dist")
        if os.path.isdir(candidate):
            return candidate
    return None


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port)
