"""HTTP service for uploading, downloading and annotating training sets.

Sets travel as zip bundles of the five store files. Every write is
validated with the full dataset checks before it becomes visible, so
anything downloadable is a valid set. Updates are optimistic: clients
send ``expected_revision`` and get 409 with the current revision when
they lost the race. The server assigns revisions itself (current + 1).

The service owns no database; the store directory layout *is* the
database. There is no authentication: intended deployment is localhost
or a trusted network.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import tempfile
import threading
import zipfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import dataset
from .dataset import SET_FILES, SET_SIZE, SetManifest
from .errors import (
    CorruptSetError,
    GeometryError,
    NotFoundError,
    PayloadTooLargeError,
    PngFormatError,
    RevisionConflictError,
    SyncError,
    ValidationFailedError,
)
from .geometry import (
    SimilarityTransform,
    estimate_similarity,
    pairs_from_jsonable,
    residuals,
)
from .pngio import decode_image, encode_image
from .raster import ImageBuffer, warp

DEFAULT_MAX_UPLOAD = 64 * 1024 * 1024

_CONTENT_TYPES = {".png": "image/png", ".json": "application/json"}


def build_bundle(store_root: str | Path, set_id: str) -> bytes:
    """Zip the five files of a stored set, flat at the archive root."""
    set_dir = Path(store_root) / set_id
    if not set_dir.is_dir():
        raise NotFoundError(f"no set {set_id!r} under {store_root}")
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name in SET_FILES:
            zf.writestr(name, (set_dir / name).read_bytes())
    return buf.getvalue()


def extract_bundle(data: bytes, dest_dir: Path) -> None:
    """Unpack a bundle, requiring exactly the five flat set files."""
    try:
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            names = zf.namelist()
            if sorted(names) != sorted(SET_FILES):
                raise ValidationFailedError(
                    f"bundle must contain exactly {sorted(SET_FILES)}, got {sorted(names)}",
                    invariant="bundle_files",
                )
            for name in SET_FILES:
                (dest_dir / name).write_bytes(zf.read(name))
    except zipfile.BadZipFile as exc:
        raise ValidationFailedError(f"not a zip archive: {exc}", invariant="bundle_zip") from exc


class SetStore:
    """Store operations shared by the HTTP handlers; one lock per set id."""

    def __init__(self, data_root: str | Path):
        self.data_root = Path(data_root)
        self.data_root.mkdir(parents=True, exist_ok=True)
        self._meta_dir = self.data_root / ".remote"
        self._meta_dir.mkdir(exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock_for(self, set_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(set_id, threading.Lock())

    def current_revision(self, set_id: str) -> int:
        """Revision of the stored set, 0 when the id is new."""
        try:
            return dataset.read_manifest(self.data_root, set_id).revision
        except NotFoundError:
            return 0

    def record(self, manifest: SetManifest) -> dict:
        meta_path = self._meta_dir / f"{manifest.id}.json"
        uploaded_at = manifest.created_at
        if meta_path.is_file():
            try:
                uploaded_at = json.loads(meta_path.read_text())["uploaded_at"]
            except (json.JSONDecodeError, KeyError):
                pass
        return {
            **manifest.to_jsonable(),
            "uploaded_at": uploaded_at,
            "location": manifest.id,
        }

    def touch(self, set_id: str) -> None:
        payload = {"uploaded_at": dataset._utc_now_rfc3339()}
        (self._meta_dir / f"{set_id}.json").write_text(json.dumps(payload) + "\n")

    def accept_bundle(self, set_id: str, data: bytes, expected_revision: int | None) -> dict:
        """Validate and store an uploaded bundle; returns the new record."""
        # stage inside the data root so the final install is a same-fs rename
        with tempfile.TemporaryDirectory(prefix=".staging-", dir=self.data_root) as staging:
            staged_store = Path(staging)
            staged_dir = staged_store / set_id
            try:
                staged_dir.mkdir()
            except OSError as exc:
                raise ValidationFailedError(f"bad set id {set_id!r}", invariant="id") from exc
            extract_bundle(data, staged_dir)
            try:
                dataset.load_set(staged_store, set_id)
            except CorruptSetError as exc:
                raise ValidationFailedError(str(exc), invariant=exc.invariant) from exc

            with self.lock_for(set_id):
                current = self.current_revision(set_id)
                if expected_revision is not None and expected_revision != current:
                    raise RevisionConflictError(
                        f"expected revision {expected_revision}, store has {current}",
                        current_revision=current,
                    )
                new_revision = current + 1
                manifest_path = staged_dir / "manifest.json"
                manifest_obj = json.loads(manifest_path.read_text())
                manifest_obj["revision"] = new_revision
                manifest_path.write_bytes(dataset._canonical_json(manifest_obj))
                dataset.install_set_dir(self.data_root, set_id, staged_dir)
                self.touch(set_id)
                return self.record(SetManifest.from_jsonable(manifest_obj))

    def update_set(self, set_id: str, expected_revision: int | None, mutate) -> dict:
        """Load-modify-store under the id lock, bumping the revision once."""
        with self.lock_for(set_id):
            ts = dataset.load_set(self.data_root, set_id)
            if expected_revision is not None and expected_revision != ts.revision:
                raise RevisionConflictError(
                    f"expected revision {expected_revision}, store has {ts.revision}",
                    current_revision=ts.revision,
                )
            updated = mutate(ts)
            updated = dataset.with_revision(updated, ts.revision + 1)
            manifest = dataset.save_set(updated, self.data_root)
            self.touch(set_id)
            return self.record(manifest)

    def read_bundle(self, set_id: str) -> bytes:
        with self.lock_for(set_id):
            return build_bundle(self.data_root, set_id)

    def read_file(self, set_id: str, name: str) -> bytes:
        with self.lock_for(set_id):
            set_dir = self.data_root / set_id
            if not set_dir.is_dir():
                raise NotFoundError(f"no set {set_id!r}")
            path = set_dir / name
            if name not in SET_FILES or not path.is_file():
                raise NotFoundError(f"set {set_id!r} has no file {name!r}")
            return path.read_bytes()

    def list_records(self) -> list[dict]:
        manifests, _corrupt = dataset.list_sets(self.data_root)
        return [self.record(m) for m in manifests]


def _error_response(exc: Exception) -> JSONResponse:
    if isinstance(exc, NotFoundError):
        return JSONResponse(status_code=404, content={"error": "not_found", "detail": str(exc)})
    if isinstance(exc, RevisionConflictError):
        return JSONResponse(
            status_code=409,
            content={
                "error": "revision_conflict",
                "current_revision": exc.current_revision,
                "detail": str(exc),
            },
        )
    if isinstance(exc, ValidationFailedError):
        return JSONResponse(
            status_code=422,
            content={"error": "validation_failed", "invariant": exc.invariant, "detail": str(exc)},
        )
    if isinstance(exc, PayloadTooLargeError):
        return JSONResponse(status_code=413, content={"error": "payload_too_large", "detail": str(exc)})
    raise exc


def _parse_expected_revision(request: Request) -> int | None:
    raw = request.query_params.get("expected_revision")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValidationFailedError(
            f"expected_revision must be an integer, got {raw!r}", invariant="expected_revision"
        )


def _decode_mask_body(body: bytes, content_type: str) -> ImageBuffer:
    """Accept a mask as PNG or as raw 512*512 bytes of 0/255 samples."""
    if body.startswith(b"\x89PNG") or content_type.startswith("image/png"):
        try:
            img = decode_image(body, source="mask upload")
        except PngFormatError as exc:
            raise ValidationFailedError(str(exc), invariant="mask_png") from exc
    elif len(body) == SET_SIZE * SET_SIZE:
        arr = np.frombuffer(body, dtype=np.uint8).reshape(SET_SIZE, SET_SIZE)
        img = ImageBuffer.from_array(arr)
    else:
        raise ValidationFailedError(
            f"mask body must be a PNG or exactly {SET_SIZE * SET_SIZE} raw bytes, got {len(body)}",
            invariant="mask_body",
        )
    if img.channels != 1 or (img.width, img.height) != (SET_SIZE, SET_SIZE):
        raise ValidationFailedError(
            f"mask must be {SET_SIZE}x{SET_SIZE} grayscale", invariant="mask_size"
        )
    if not np.isin(img.plane(), (0, 255)).all():
        raise ValidationFailedError("mask values must be 0 or 255", invariant="mask_values")
    return img


def _parse_alignment_payload(obj: dict) -> tuple[SimilarityTransform, tuple]:
    try:
        transform = SimilarityTransform.from_dict(obj["transform"])
        pairs = tuple(pairs_from_jsonable(obj["pairs"]))
    except (KeyError, TypeError, ValueError, GeometryError) as exc:
        raise ValidationFailedError(f"bad alignment payload: {exc}", invariant="alignment") from exc
    return transform, pairs


def create_app(
    data_root: str | Path,
    ui_dir: str | Path | None = None,
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD,
) -> FastAPI:
    """The sync service plus, when ui_dir is given, the annotator assets."""
    store = SetStore(data_root)
    app = FastAPI(title="fundusprep sync service", docs_url=None, redoc_url=None)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/api/sets")
    def list_sets():
        return store.list_records()

    @app.get("/api/sets/{set_id}")
    def download_set(set_id: str):
        try:
            data = store.read_bundle(set_id)
        except NotFoundError as exc:
            return _error_response(exc)
        return Response(
            content=data,
            media_type="application/zip",
            headers={"Content-Disposition": f'attachment; filename="{set_id}.zip"'},
        )

    @app.put("/api/sets/{set_id}")
    async def upload_set(set_id: str, request: Request):
        declared = request.headers.get("content-length")
        if declared and declared.isdigit() and int(declared) > max_upload_bytes:
            return _error_response(
                PayloadTooLargeError(f"bundle exceeds {max_upload_bytes} bytes")
            )
        body = await request.body()
        if len(body) > max_upload_bytes:
            return _error_response(
                PayloadTooLargeError(f"bundle exceeds {max_upload_bytes} bytes")
            )
        try:
            expected = _parse_expected_revision(request)
            record = store.accept_bundle(set_id, body, expected)
        except (SyncError, NotFoundError) as exc:
            return _error_response(exc)
        status = 201 if record["revision"] == 1 else 200
        return JSONResponse(status_code=status, content=record)

    @app.get("/api/sets/{set_id}/{filename}")
    def get_set_file(set_id: str, filename: str):
        try:
            data = store.read_file(set_id, filename)
        except NotFoundError as exc:
            return _error_response(exc)
        media = _CONTENT_TYPES.get(Path(filename).suffix, "application/octet-stream")
        return Response(content=data, media_type=media)

    @app.post("/api/sets/{set_id}/transform")
    async def compute_transform(set_id: str, request: Request):
        try:
            payload = await request.json()
        except json.JSONDecodeError as exc:
            return _error_response(ValidationFailedError(f"bad JSON: {exc}", invariant="json"))
        try:
            pairs = pairs_from_jsonable(payload.get("pairs"))
        except ValueError as exc:
            return _error_response(ValidationFailedError(str(exc), invariant="pairs"))
        try:
            with store.lock_for(set_id):
                ts = dataset.load_set(store.data_root, set_id)
        except NotFoundError as exc:
            return _error_response(exc)
        try:
            transform = estimate_similarity(pairs)
        except GeometryError as exc:
            return _error_response(
                ValidationFailedError(str(exc), invariant=type(exc).__name__)
            )
        warped = warp(ts.contrast, transform, SET_SIZE, SET_SIZE)
        return {
            "transform": transform.to_dict(),
            "residuals": residuals(transform, pairs),
            "warped_contrast_png_base64": base64.b64encode(encode_image(warped)).decode("ascii"),
        }

    @app.put("/api/sets/{set_id}/mask")
    async def put_mask(set_id: str, request: Request):
        body = await request.body()
        try:
            expected = _parse_expected_revision(request)
            mask_img = _decode_mask_body(body, request.headers.get("content-type", ""))
            record = store.update_set(
                set_id, expected, lambda ts: replace(ts, mask=mask_img)
            )
        except (SyncError, NotFoundError) as exc:
            return _error_response(exc)
        except CorruptSetError as exc:
            return _error_response(ValidationFailedError(str(exc), invariant=exc.invariant))
        return record

    @app.put("/api/sets/{set_id}/alignment")
    async def put_alignment(set_id: str, request: Request):
        try:
            payload = await request.json()
        except json.JSONDecodeError as exc:
            return _error_response(ValidationFailedError(f"bad JSON: {exc}", invariant="json"))
        try:
            expected = _parse_expected_revision(request)
            transform, pairs = _parse_alignment_payload(payload)
            record = store.update_set(
                set_id,
                expected,
                lambda ts: replace(ts, transform=transform, point_pairs=pairs),
            )
        except (SyncError, NotFoundError) as exc:
            return _error_response(exc)
        except CorruptSetError as exc:
            return _error_response(ValidationFailedError(str(exc), invariant=exc.invariant))
        return record

    @app.put("/api/sets/{set_id}/annotation")
    async def put_annotation(set_id: str, request: Request):
        """Combined session save: mask plus alignment in one revision bump."""
        try:
            payload = await request.json()
        except json.JSONDecodeError as exc:
            return _error_response(ValidationFailedError(f"bad JSON: {exc}", invariant="json"))
        try:
            expected = _parse_expected_revision(request)
            try:
                mask_body = base64.b64decode(payload["mask_b64"], validate=True)
            except (KeyError, TypeError, binascii.Error) as exc:
                raise ValidationFailedError(
                    f"bad mask_b64 field: {exc}", invariant="mask_body"
                ) from exc
            mask_img = _decode_mask_body(mask_body, "")
            transform, pairs = _parse_alignment_payload(payload)
            record = store.update_set(
                set_id,
                expected,
                lambda ts: replace(
                    ts, mask=mask_img, transform=transform, point_pairs=pairs
                ),
            )
        except (SyncError, NotFoundError) as exc:
            return _error_response(exc)
        except CorruptSetError as exc:
            return _error_response(ValidationFailedError(str(exc), invariant=exc.invariant))
        return record

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index():
            return (
                "<!doctype html><title>fundusprep sync service</title>"
                "<h1>fundusprep sync service</h1>"
                "<p>No annotator UI is bundled. The API lives under <code>/api/sets</code>.</p>"
            )

    return app


class SyncClient:
    """Thin httpx wrapper speaking the bundle protocol."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        import httpx

        self._client = httpx.Client(base_url=base_url, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> SyncClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _raise_for(self, response) -> None:
        if response.status_code in (200, 201):
            return
        try:
            payload = response.json()
        except json.JSONDecodeError:
            payload = {}
        detail = payload.get("detail", response.text)
        if response.status_code == 404:
            raise NotFoundError(detail)
        if response.status_code == 409:
            raise RevisionConflictError(detail, current_revision=payload.get("current_revision", -1))
        if response.status_code == 422:
            raise ValidationFailedError(detail, invariant=payload.get("invariant", "unknown"))
        if response.status_code == 413:
            raise PayloadTooLargeError(detail)
        raise SyncError(f"unexpected status {response.status_code}: {detail}")

    def healthy(self) -> bool:
        try:
            return self._client.get("/healthz").status_code == 200
        except Exception:
            return False

    def list_remote(self) -> list[dict]:
        response = self._client.get("/api/sets")
        self._raise_for(response)
        return response.json()

    def upload_set(
        self, store_root: str | Path, set_id: str, expected_revision: int | None = None
    ) -> dict:
        params = {}
        if expected_revision is not None:
            params["expected_revision"] = expected_revision
        response = self._client.put(
            f"/api/sets/{set_id}",
            params=params,
            content=build_bundle(store_root, set_id),
            headers={"Content-Type": "application/zip"},
        )
        self._raise_for(response)
        return response.json()

    def download_bundle(self, set_id: str) -> bytes:
        response = self._client.get(f"/api/sets/{set_id}")
        self._raise_for(response)
        return response.content

    def download_set(self, set_id: str, store_root: str | Path):
        """Fetch, validate and install a set into a local store."""
        data = self.download_bundle(set_id)
        store_root = Path(store_root)
        store_root.mkdir(parents=True, exist_ok=True)
        with tempfile.TemporaryDirectory(prefix=".staging-", dir=store_root) as staging:
            staged_store = Path(staging)
            staged_dir = staged_store / set_id
            staged_dir.mkdir()
            extract_bundle(data, staged_dir)
            ts = dataset.load_set(staged_store, set_id)
            dataset.install_set_dir(store_root, set_id, staged_dir)
        return ts
