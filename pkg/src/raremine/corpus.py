"""Portable on-disk corpus: crops, embeddings, captions, scenes.

File formats
------------
* Crops: UTF-8 JSON lines, one object per line with keys
  ``object_id, scene_id, image_id, bbox, detector_class, detector_confidence``.
* Embeddings: raw row-major little-endian float32 binary plus a JSON sidecar
  declaring ``n_rows, dim, row_ids, kind, source_model``.
* Captions: UTF-8 JSON lines with keys
  ``object_id, caption_text, caption_embedding_row`` (row index optional).

The canonical object ordering for every downstream vector is the ``row_ids``
order of the image-embedding sidecar.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

CROP_FIELDS = ("object_id", "scene_id", "image_id", "bbox", "detector_class", "detector_confidence")
EMBEDDING_KINDS = ("image", "caption")


class CorpusError(ValueError):
    """Malformed or misaligned corpus data."""


@dataclass(frozen=True)
class CropRecord:
    """One detected 2-D object crop."""

    object_id: str
    scene_id: str
    image_id: str
    bbox: tuple[float, float, float, float]  # (x, y, w, h) in pixels
    detector_class: str
    detector_confidence: float

    def validate(self) -> None:
        x, y, w, h = self.bbox
        if x < 0 or y < 0:
            raise CorpusError(f"object {self.object_id!r}: bbox origin must be >= 0, got ({x}, {y})")
        if w <= 0 or h <= 0:
            raise CorpusError(f"object {self.object_id!r}: bbox extent must be positive, got ({w}, {h})")
        if not 0.0 <= self.detector_confidence <= 1.0:
            raise CorpusError(
                f"object {self.object_id!r}: detector_confidence must lie in [0,1], "
                f"got {self.detector_confidence}"
            )


@dataclass
class CropRecordSet:
    """Ordered crop records with unique object ids."""

    records: list[CropRecord]
    by_id: dict[str, CropRecord] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.by_id = {}
        for rec in self.records:
            if rec.object_id in self.by_id:
                raise CorpusError(f"duplicate object_id {rec.object_id!r}")
            self.by_id[rec.object_id] = rec

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[CropRecord]:
        return iter(self.records)

    def __contains__(self, object_id: str) -> bool:
        return object_id in self.by_id

    @property
    def object_ids(self) -> list[str]:
        return [r.object_id for r in self.records]


@dataclass
class EmbeddingMatrix:
    """Row-aligned float32 embedding matrix with per-row object ids."""

    data: np.ndarray  # (n_rows, dim) float32
    row_ids: list[str]
    kind: str = "image"
    source_model: str = ""
    row_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise CorpusError(f"embedding matrix must be 2-D, got shape {self.data.shape}")
        if len(self.row_ids) != self.data.shape[0]:
            raise CorpusError(
                f"row_ids count {len(self.row_ids)} does not match matrix rows {self.data.shape[0]}"
            )
        if not np.isfinite(self.data).all():
            raise CorpusError("embedding matrix contains non-finite entries")
        self.row_index = {}
        for i, rid in enumerate(self.row_ids):
            if rid in self.row_index:
                raise CorpusError(f"duplicate row id {rid!r} in embedding matrix")
            self.row_index[rid] = i

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row(self, object_id: str) -> np.ndarray:
        return self.data[self.row_index[object_id]]


@dataclass(frozen=True)
class CaptionRecord:
    object_id: str
    caption_text: str
    caption_embedding_row: int | None = None


@dataclass
class SceneIndex:
    """scene_id -> ordered object_id list; scenes iterate lexicographically."""

    scenes: dict[str, list[str]]

    def __len__(self) -> int:
        return len(self.scenes)

    def __iter__(self) -> Iterator[str]:
        return iter(self.scenes)

    def __getitem__(self, scene_id: str) -> list[str]:
        return self.scenes[scene_id]

    @property
    def scene_ids(self) -> list[str]:
        return list(self.scenes)

    def all_object_ids(self) -> list[str]:
        return [oid for objs in self.scenes.values() for oid in objs]


@dataclass
class CorpusBundle:
    crops: CropRecordSet
    image_embeddings: EmbeddingMatrix
    scenes: SceneIndex
    captions: dict[str, CaptionRecord] | None = None
    caption_embeddings: EmbeddingMatrix | None = None

    @property
    def object_ids(self) -> list[str]:
        # Canonical downstream order: the image-embedding sidecar order.
        return list(self.image_embeddings.row_ids)


@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def valid(self) -> bool:
        return not self.violations


def load_crop_records(path: str | Path) -> CropRecordSet:
    """Parse a JSON-lines crops file, rejecting duplicates and bad geometry."""
    path = Path(path)
    records: list[CropRecord] = []
    seen: dict[str, int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path.name}:{lineno}: malformed record: {exc.msg}") from exc
            missing = [k for k in CROP_FIELDS if k not in obj]
            if missing:
                raise CorpusError(f"{path.name}:{lineno}: missing fields {missing}")
            bbox = obj["bbox"]
            if not (isinstance(bbox, (list, tuple)) and len(bbox) == 4):
                raise CorpusError(f"{path.name}:{lineno}: bbox must be a 4-element list")
            rec = CropRecord(
                object_id=str(obj["object_id"]),
                scene_id=str(obj["scene_id"]),
                image_id=str(obj["image_id"]),
                bbox=tuple(float(v) for v in bbox),
                detector_class=str(obj["detector_class"]),
                detector_confidence=float(obj["detector_confidence"]),
            )
            if rec.object_id in seen:
                raise CorpusError(
                    f"{path.name}:{lineno}: duplicate object_id {rec.object_id!r} "
                    f"(first seen on line {seen[rec.object_id]})"
                )
            try:
                rec.validate()
            except CorpusError as exc:
                raise CorpusError(f"{path.name}:{lineno}: {exc}") from None
            seen[rec.object_id] = lineno
            records.append(rec)
    if not records:
        warnings.warn(f"{path.name}: no crop records found", stacklevel=2)
    return CropRecordSet(records)


def write_crop_records(crops: CropRecordSet, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in crops:
            fh.write(
                json.dumps(
                    {
                        "object_id": rec.object_id,
                        "scene_id": rec.scene_id,
                        "image_id": rec.image_id,
                        "bbox": list(rec.bbox),
                        "detector_class": rec.detector_class,
                        "detector_confidence": rec.detector_confidence,
                    },
                    ensure_ascii=True,
                )
                + "\n"
            )


def load_embedding_matrix(data_path: str | Path, sidecar_path: str | Path) -> EmbeddingMatrix:
    """Load a float32 binary matrix against its JSON sidecar declaration."""
    data_path, sidecar_path = Path(data_path), Path(sidecar_path)
    try:
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{sidecar_path.name}: malformed sidecar: {exc.msg}") from exc
    for key in ("n_rows", "dim", "row_ids", "kind"):
        if key not in sidecar:
            raise CorpusError(f"{sidecar_path.name}: sidecar missing {key!r}")
    n_rows, dim = int(sidecar["n_rows"]), int(sidecar["dim"])
    row_ids = [str(r) for r in sidecar["row_ids"]]
    kind = str(sidecar["kind"])
    if kind not in EMBEDDING_KINDS:
        raise CorpusError(f"{sidecar_path.name}: kind must be one of {EMBEDDING_KINDS}, got {kind!r}")
    if dim < 2:
        raise CorpusError(f"{sidecar_path.name}: dim must be >= 2, got {dim}")
    if len(row_ids) != n_rows:
        raise CorpusError(
            f"{sidecar_path.name}: declares n_rows={n_rows} but lists {len(row_ids)} row_ids"
        )
    raw = data_path.read_bytes()
    expected = n_rows * dim * 4
    if len(raw) != expected:
        raise CorpusError(
            f"{data_path.name}: size mismatch: expected {expected} bytes "
            f"({n_rows}x{dim} float32), found {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(n_rows, dim)
    bad = ~np.isfinite(data)
    if bad.any():
        row = int(np.nonzero(bad.any(axis=1))[0][0])
        raise CorpusError(f"{data_path.name}: non-finite entry in row {row} (object {row_ids[row]!r})")
    return EmbeddingMatrix(
        data=data.copy(),
        row_ids=row_ids,
        kind=kind,
        source_model=str(sidecar.get("source_model", "")),
    )


def write_embedding_matrix(matrix: EmbeddingMatrix, data_path: str | Path, sidecar_path: str | Path) -> None:
    """Canonical serialization; load -> write round-trips byte-identically."""
    Path(data_path).write_bytes(np.ascontiguousarray(matrix.data, dtype="<f4").tobytes())
    sidecar = {
        "n_rows": matrix.n_rows,
        "dim": matrix.dim,
        "kind": matrix.kind,
        "source_model": matrix.source_model,
        "row_ids": list(matrix.row_ids),
    }
    Path(sidecar_path).write_text(json.dumps(sidecar, indent=2, ensure_ascii=True) + "\n", encoding="utf-8")


def load_caption_records(path: str | Path) -> dict[str, CaptionRecord]:
    path = Path(path)
    captions: dict[str, CaptionRecord] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path.name}:{lineno}: malformed record: {exc.msg}") from exc
            if "object_id" not in obj or "caption_text" not in obj:
                raise CorpusError(f"{path.name}:{lineno}: missing object_id or caption_text")
            oid = str(obj["object_id"])
            if oid in captions:
                raise CorpusError(f"{path.name}:{lineno}: duplicate caption for object_id {oid!r}")
            row = obj.get("caption_embedding_row")
            captions[oid] = CaptionRecord(
                object_id=oid,
                caption_text=str(obj["caption_text"]),
                caption_embedding_row=None if row is None else int(row),
            )
    return captions


def write_caption_records(captions: dict[str, CaptionRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in captions.values():
            doc: dict[str, object] = {"object_id": rec.object_id, "caption_text": rec.caption_text}
            if rec.caption_embedding_row is not None:
                doc["caption_embedding_row"] = rec.caption_embedding_row
            fh.write(json.dumps(doc, ensure_ascii=True) + "\n")


def group_by_scene(crops: CropRecordSet) -> SceneIndex:
    """Partition object ids by scene; scenes ordered lexicographically."""
    buckets: dict[str, list[str]] = {}
    for rec in crops:
        buckets.setdefault(rec.scene_id, []).append(rec.object_id)
    return SceneIndex({sid: buckets[sid] for sid in sorted(buckets)})


def validate_corpus(bundle: CorpusBundle) -> ValidationReport:
    """Cross-file alignment report; the bundle is valid iff no violations."""
    violations: list[str] = []
    crop_ids = set(bundle.crops.by_id)
    emb_ids = set(bundle.image_embeddings.row_index)

    for oid in bundle.crops.object_ids:
        if oid not in emb_ids:
            violations.append(f"missing embedding: {oid}")
    for rid in bundle.image_embeddings.row_ids:
        if rid not in crop_ids:
            violations.append(f"orphan embedding row: {rid}")
    if bundle.image_embeddings.kind != "image":
        violations.append(f"image embedding sidecar kind is {bundle.image_embeddings.kind!r}, expected 'image'")

    if bundle.captions is not None:
        n_caption_rows = bundle.caption_embeddings.n_rows if bundle.caption_embeddings is not None else 0
        for rec in bundle.captions.values():
            if rec.object_id not in crop_ids:
                violations.append(f"orphan caption: {rec.object_id}")
            if rec.caption_embedding_row is not None:
                if bundle.caption_embeddings is None:
                    violations.append(f"caption {rec.object_id}: embedding row declared but no caption matrix loaded")
                elif not 0 <= rec.caption_embedding_row < n_caption_rows:
                    violations.append(
                        f"caption {rec.object_id}: embedding row {rec.caption_embedding_row} "
                        f"out of range [0, {n_caption_rows})"
                    )
    if bundle.caption_embeddings is not None and bundle.caption_embeddings.kind != "caption":
        violations.append(
            f"caption embedding sidecar kind is {bundle.caption_embeddings.kind!r}, expected 'caption'"
        )

    scene_objects = bundle.scenes.all_object_ids()
    if sorted(scene_objects) != sorted(crop_ids):
        extra = set(scene_objects) - crop_ids
        missing = crop_ids - set(scene_objects)
        for oid in sorted(extra):
            violations.append(f"scene index references unknown object: {oid}")
        for oid in sorted(missing):
            violations.append(f"object missing from scene index: {oid}")
    if len(scene_objects) != len(set(scene_objects)):
        dupes = sorted({o for o in scene_objects if scene_objects.count(o) > 1})
        for oid in dupes:
            violations.append(f"object in multiple scenes: {oid}")
    for sid, objs in bundle.scenes.scenes.items():
        for oid in objs:
            if oid in bundle.crops.by_id and bundle.crops.by_id[oid].scene_id != sid:
                violations.append(f"object {oid} indexed under scene {sid} but records scene "
                                  f"{bundle.crops.by_id[oid].scene_id}")
    return ValidationReport(violations)


def write_corpus(bundle: CorpusBundle, directory: str | Path) -> dict[str, Path]:
    """Write a bundle under canonical file names; returns the path map."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "crops": directory / "crops.jsonl",
        "image_embedding_data": directory / "image_embeddings.bin",
        "image_embedding_sidecar": directory / "image_embeddings.json",
    }
    write_crop_records(bundle.crops, paths["crops"])
    write_embedding_matrix(bundle.image_embeddings, paths["image_embedding_data"], paths["image_embedding_sidecar"])
    if bundle.captions is not None:
        paths["captions"] = directory / "captions.jsonl"
        write_caption_records(bundle.captions, paths["captions"])
    if bundle.caption_embeddings is not None:
        paths["caption_embedding_data"] = directory / "caption_embeddings.bin"
        paths["caption_embedding_sidecar"] = directory / "caption_embeddings.json"
        write_embedding_matrix(
            bundle.caption_embeddings, paths["caption_embedding_data"], paths["caption_embedding_sidecar"]
        )
    return paths


def load_corpus(
    crops_path: str | Path,
    embedding_data: str | Path,
    embedding_sidecar: str | Path,
    captions_path: str | Path | None = None,
    caption_embedding_data: str | Path | None = None,
    caption_embedding_sidecar: str | Path | None = None,
) -> CorpusBundle:
    crops = load_crop_records(crops_path)
    image_embeddings = load_embedding_matrix(embedding_data, embedding_sidecar)
    captions = load_caption_records(captions_path) if captions_path is not None else None
    caption_embeddings = None
    if caption_embedding_data is not None and caption_embedding_sidecar is not None:
        caption_embeddings = load_embedding_matrix(caption_embedding_data, caption_embedding_sidecar)
    return CorpusBundle(
        crops=crops,
        image_embeddings=image_embeddings,
        scenes=group_by_scene(crops),
        captions=captions,
        caption_embeddings=caption_embeddings,
    )
