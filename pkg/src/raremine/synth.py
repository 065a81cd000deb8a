"""Synthetic corpora with long-tail class frequencies and displaced rare clusters.

Used by the test harnesses and the demo scripts: class prototypes live on
random unit directions, common classes sit near the origin while displaced
classes are pushed out by a configurable radius, and per-object embeddings are
prototypes plus isotropic noise. Captions mention the class name so caption
parsing finds it, and detector classes mimic a coarse 2-D detector that folds
construction vehicles and trailers into "truck".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .concepts import ConceptEntry, ConceptVocabulary
from .corpus import (
    CaptionRecord,
    CorpusBundle,
    CropRecord,
    CropRecordSet,
    EmbeddingMatrix,
    group_by_scene,
)
from .rng import derive_rng

# nuScenes-scale instance counts for a few headline classes
NUSCENES_CLASS_COUNTS: dict[str, int] = {
    "car": 493_322,
    "pedestrian": 208_240,
    "construction_vehicle": 14_671,
    "bicycle": 11_859,
}

DETECTOR_CLASS_FOLD = {"construction_vehicle": "truck", "trailer": "truck"}

CONCEPT_ALIASES = {
    "construction_vehicle": ("excavator", "bulldozer"),
    "bicycle": ("bike",),
    "motorcycle": ("motorbike",),
}


@dataclass(frozen=True)
class SynthSpec:
    n_objects: int = 300
    n_scenes: int = 30
    dim: int = 16
    seed: int = 7
    class_weights: dict[str, float] = field(default_factory=lambda: dict(NUSCENES_CLASS_COUNTS))
    common_classes: tuple[str, ...] = ("car", "pedestrian")
    target_classes: tuple[str, ...] = ("bicycle",)
    displaced_classes: tuple[str, ...] | None = None  # default: every non-common class
    displacement: float = 8.0
    noise: float = 0.6
    with_captions: bool = True


def _apportion(weights: dict[str, float], total: int) -> dict[str, int]:
    """Largest-remainder apportionment; exact total, deterministic."""
    names = sorted(weights)
    wsum = sum(weights[n] for n in names)
    raw = {n: total * weights[n] / wsum for n in names}
    counts = {n: int(raw[n]) for n in names}
    leftover = total - sum(counts.values())
    by_frac = sorted(names, key=lambda n: (-(raw[n] - counts[n]), n))
    for n in by_frac[:leftover]:
        counts[n] += 1
    return counts


def make_synthetic_corpus(spec: SynthSpec = SynthSpec()) -> tuple[CorpusBundle, ConceptVocabulary]:
    if spec.n_objects < spec.n_scenes:
        raise ValueError("need at least one object per scene")
    rng = derive_rng(spec.seed, "synth-corpus")
    classes = sorted(spec.class_weights)
    displaced = set(
        spec.displaced_classes
        if spec.displaced_classes is not None
        else [c for c in classes if c not in spec.common_classes]
    )

    prototypes: dict[str, np.ndarray] = {}
    for cls in classes:
        direction = rng.standard_normal(spec.dim)
        direction /= np.linalg.norm(direction)
        radius = spec.displacement if cls in displaced else 1.5
        prototypes[cls] = direction * radius

    counts = _apportion(spec.class_weights, spec.n_objects)
    labels = [cls for cls in classes for _ in range(counts[cls])]
    order = rng.permutation(spec.n_objects)

    records: list[CropRecord] = []
    rows = np.empty((spec.n_objects, spec.dim), dtype=np.float64)
    caption_rows = np.empty((spec.n_objects, spec.dim), dtype=np.float64)
    captions: dict[str, CaptionRecord] = {}
    for i in range(spec.n_objects):
        cls = labels[int(order[i])]
        oid = f"o{i:05d}"
        scene = f"scene{i % spec.n_scenes:04d}"
        rows[i] = prototypes[cls] + spec.noise * rng.standard_normal(spec.dim)
        caption_rows[i] = prototypes[cls] + spec.noise * rng.standard_normal(spec.dim)
        x, y = rng.uniform(0, 1500, size=2)
        w, h = rng.uniform(20, 300, size=2)
        records.append(
            CropRecord(
                object_id=oid,
                scene_id=scene,
                image_id=f"{scene}_cam0",
                bbox=(float(x), float(y), float(w), float(h)),
                detector_class=DETECTOR_CLASS_FOLD.get(cls, cls),
                detector_confidence=float(rng.uniform(0.3, 1.0)),
            )
        )
        if spec.with_captions:
            captions[oid] = CaptionRecord(
                object_id=oid,
                caption_text=f"a photo of a {cls.replace('_', ' ')} on the road",
                caption_embedding_row=i,
            )

    crops = CropRecordSet(records)
    image_embeddings = EmbeddingMatrix(
        data=rows.astype(np.float32),
        row_ids=[r.object_id for r in records],
        kind="image",
        source_model="synthetic",
    )
    caption_embeddings = None
    if spec.with_captions:
        caption_embeddings = EmbeddingMatrix(
            data=caption_rows.astype(np.float32),
            row_ids=[r.object_id for r in records],
            kind="caption",
            source_model="synthetic",
        )
    bundle = CorpusBundle(
        crops=crops,
        image_embeddings=image_embeddings,
        scenes=group_by_scene(crops),
        captions=captions if spec.with_captions else None,
        caption_embeddings=caption_embeddings,
    )

    entries = [
        ConceptEntry(
            name=cls,
            embedding=prototypes[cls].copy(),
            aliases=CONCEPT_ALIASES.get(cls, ()),
        )
        for cls in classes
    ]
    vocab = ConceptVocabulary(
        entries=entries,
        common_set=frozenset(c for c in spec.common_classes if c in classes),
        target_set=frozenset(c for c in spec.target_classes if c in classes),
    )
    return bundle, vocab


def class_of(bundle: CorpusBundle, vocab: ConceptVocabulary, object_id: str) -> str:
    """Ground-truth class of a synthetic object, recovered from its caption."""
    if bundle.captions and object_id in bundle.captions:
        text = bundle.captions[object_id].caption_text
        for name in sorted(vocab.by_name, key=len, reverse=True):
            if name.replace("_", " ") in text:
                return name
    raise KeyError(f"no caption-recoverable class for {object_id!r}")
