"""HTTP service exposing the conversion pipeline, plus checkpoint loading.

All state is read-only after startup (loaded checkpoints); every request is
served in isolation, so identical requests produce identical artifacts.
"""

import base64
import hashlib
import io
import json
import secrets
import threading
import time
import uuid
import zipfile
from pathlib import Path

from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import __version__
from .audio import load_wav
from .errors import (
    ClipTooShort,
    EmptyAudio,
    MalformedWav,
    MissingCheckpoint,
    SpeechMelodyError,
    UnsupportedFormat,
)
from .features import extract_features
from .model import build_model, load_checkpoint
from .pipeline import Contour, ConvertConfig, convert
from .sparsify import Level, SparsifyConfig, Technique
from .taskgen import Task

CHECKPOINT_FILES = {Task.GAPFILL: "gapfill.ckpt", Task.DENOISE: "denoise.ckpt"}
MAX_UPLOAD_BYTES = 10 * 1024 * 1024
DEFAULT_MAX_UPLOAD_S = 30.0


class ModelRegistry:
    """Checkpoint-backed models shared read-only across requests."""

    def __init__(self):
        self.models = {}
        self.digests = {}

    @classmethod
    def from_dir(cls, directory) -> "ModelRegistry":
        registry = cls()
        directory = Path(directory)
        for task, filename in CHECKPOINT_FILES.items():
            path = directory / filename
            if path.is_file():
                ckpt = load_checkpoint(path)
                if ckpt.spec.variant is not task:
                    raise MissingCheckpoint(
                        f"{filename} holds a {ckpt.spec.variant.value} model"
                    )
                registry.models[task] = build_model(ckpt)
                registry.digests[task] = hashlib.sha256(path.read_bytes()).hexdigest()[:12]
        return registry

    def add(self, task: Task, model, digest: str = "in-memory") -> None:
        self.models[task] = model
        self.digests[task] = digest


class _RequestError(Exception):
    def __init__(self, status: int, code: str, detail: str):
        self.status = status
        self.code = code
        self.detail = detail


def parse_convert_config(raw: str | None, default_seed: int) -> ConvertConfig:
    """Parse and validate the JSON config form field; raises 400-level errors."""
    if raw is None or raw == "":
        raise _RequestError(400, "missing_config", "config form field is required")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise _RequestError(400, "bad_config", f"config is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise _RequestError(400, "bad_config", "config must be a JSON object")
    try:
        model = Task(data.get("model", "denoise"))
        contour = Contour(data.get("contour", "f0"))
        technique = Technique(data.get("technique", "heuristic"))
        level = Level(data.get("level", "medium"))
        seed = int(data.get("seed", default_seed))
        temperature = float(data.get("temperature", 1.0))
    except (ValueError, TypeError) as exc:
        raise _RequestError(400, "bad_config", f"invalid config value: {exc}")
    if temperature <= 0:
        raise _RequestError(400, "bad_config", "temperature must be positive")
    return ConvertConfig(
        model=model,
        contour=contour,
        sparsify=SparsifyConfig(technique=technique, level=level),
        seed=seed,
        temperature=temperature,
    )


def _config_echo(cfg: ConvertConfig) -> dict:
    return {
        "model": cfg.model.value,
        "contour": cfg.contour.value,
        "technique": cfg.sparsify.technique.value,
        "level": cfg.sparsify.level.value,
        "seed": cfg.seed,
        "temperature": cfg.temperature,
    }


def _decode_upload(data: bytes, max_upload_s: float):
    if len(data) > MAX_UPLOAD_BYTES:
        raise _RequestError(413, "too_large", f"upload exceeds {MAX_UPLOAD_BYTES} bytes")
    try:
        clip = load_wav(data)
    except (MalformedWav, UnsupportedFormat, EmptyAudio) as exc:
        raise _RequestError(422, "undecodable_audio", str(exc))
    if clip.duration_s > max_upload_s:
        raise _RequestError(413, "too_long", f"clip longer than {max_upload_s} s")
    return clip


def all_configurations() -> list[ConvertConfig]:
    """The full cross product the download-all endpoint iterates."""
    configs = []
    for contour in Contour:
        for technique in Technique:
            for level in Level:
                configs.append(ConvertConfig(
                    model=Task.GAPFILL,
                    contour=contour,
                    sparsify=SparsifyConfig(technique=technique, level=level),
                ))
    for contour in Contour:
        configs.append(ConvertConfig(model=Task.DENOISE, contour=contour))
    return configs


def _entry_name(cfg: ConvertConfig) -> str:
    if cfg.model is Task.GAPFILL:
        return (f"gapfill_{cfg.contour.value}_{cfg.sparsify.technique.value}"
                f"_{cfg.sparsify.level.value}")
    return f"denoise_{cfg.contour.value}"


def create_app(
    registry: ModelRegistry,
    max_upload_s: float = DEFAULT_MAX_UPLOAD_S,
    max_workers: int = 2,
    static_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="speechmelody", version=__version__)
    inference_slots = threading.Semaphore(max_workers)

    def error_response(request_id: str, exc: _RequestError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status,
            content={"error": exc.code, "detail": exc.detail, "request_id": request_id},
        )

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "version": __version__,
            "checkpoints": {t.value: d for t, d in registry.digests.items()},
        }

    @app.get("/api/models")
    def models():
        out = []
        for task, model in registry.models.items():
            spec = model.spec
            out.append({
                "variant": task.value,
                "d_model": spec.d_model,
                "n_layers": spec.n_layers,
                "n_heads": spec.n_heads,
                "d_ff": spec.d_ff,
                "rel_window": spec.rel_window,
                "digest": registry.digests.get(task),
            })
        return {"models": out}

    @app.post("/api/convert")
    def convert_endpoint(
        audio: UploadFile | None = File(None),
        config: str | None = Form(None),
    ):
        request_id = uuid.uuid4().hex
        started = time.perf_counter()
        try:
            if audio is None:
                raise _RequestError(400, "missing_audio", "audio file field is required")
            cfg = parse_convert_config(config, default_seed=secrets.randbelow(2 ** 31))
            if cfg.model not in registry.models:
                raise _RequestError(
                    400, "missing_checkpoint",
                    f"no checkpoint loaded for {cfg.model.value}",
                )
            clip = _decode_upload(audio.file.read(), max_upload_s)
            try:
                t0 = time.perf_counter()
                bundle = extract_features(clip)
                extract_s = time.perf_counter() - t0
                t0 = time.perf_counter()
                with inference_slots:
                    result = convert(clip, cfg, registry.models, bundle=bundle)
                infer_s = time.perf_counter() - t0
            except ClipTooShort as exc:
                raise _RequestError(422, "clip_too_short", str(exc))
            artifacts = {
                "raw": base64.b64encode(result.raw_midi).decode(),
                "generated": base64.b64encode(result.generated_midi).decode(),
            }
            if result.sparse_midi is not None:
                artifacts["sparse"] = base64.b64encode(result.sparse_midi).decode()
            return {
                "request_id": request_id,
                "config": _config_echo(cfg),
                "artifacts": artifacts,
                "timings": {
                    "extract_s": round(extract_s, 4),
                    "infer_s": round(infer_s, 4),
                    "total_s": round(time.perf_counter() - started, 4),
                },
            }
        except _RequestError as exc:
            return error_response(request_id, exc)
        except Exception as exc:  # pragma: no cover - defensive
            return error_response(
                request_id, _RequestError(500, "internal_error", str(exc))
            )

    @app.post("/api/convert_all")
    def convert_all_endpoint(
        audio: UploadFile | None = File(None),
        seed: int | None = Form(None),
    ):
        request_id = uuid.uuid4().hex
        try:
            if audio is None:
                raise _RequestError(400, "missing_audio", "audio file field is required")
            base_seed = seed if seed is not None else secrets.randbelow(2 ** 31)
            clip = _decode_upload(audio.file.read(), max_upload_s)
            try:
                bundle = extract_features(clip)
            except ClipTooShort as exc:
                raise _RequestError(422, "clip_too_short", str(exc))

            manifest = {"request_id": request_id, "seed": base_seed, "entries": []}
            buffer = io.BytesIO()
            with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as archive:
                def add(name, payload):
                    info = zipfile.ZipInfo(name, date_time=(2020, 1, 1, 0, 0, 0))
                    archive.writestr(info, payload)

                raw_written = set()
                for cfg in all_configurations():
                    cfg.seed = base_seed
                    name = _entry_name(cfg)
                    entry = {"name": name, "config": _config_echo(cfg)}
                    if cfg.model not in registry.models:
                        entry.update(status="error", message="missing checkpoint")
                        manifest["entries"].append(entry)
                        continue
                    try:
                        with inference_slots:
                            result = convert(clip, cfg, registry.models, bundle=bundle)
                    except SpeechMelodyError as exc:
                        entry.update(status="error", message=str(exc))
                        manifest["entries"].append(entry)
                        continue
                    add(f"generated/{name}.mid", result.generated_midi)
                    if result.sparse_midi is not None:
                        add(f"sparse/{name}.mid", result.sparse_midi)
                    if cfg.contour.value not in raw_written:
                        add(f"raw/{cfg.contour.value}.mid", result.raw_midi)
                        raw_written.add(cfg.contour.value)
                    entry.update(status="ok")
                    manifest["entries"].append(entry)
                add("manifest.json", json.dumps(manifest, indent=2))
            return Response(
                content=buffer.getvalue(),
                media_type="application/zip",
                headers={
                    "Content-Disposition": 'attachment; filename="speechmelody.zip"',
                    "X-Request-Id": request_id,
                },
            )
        except _RequestError as exc:
            return error_response(request_id, exc)
        except Exception as exc:  # pragma: no cover - defensive
            return error_response(
                request_id, _RequestError(500, "internal_error", str(exc))
            )

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="webui")

    return app
