from __future__ import annotations

import numpy as np
import pytest

from raremine.concepts import ConceptEntry, ConceptVocabulary
from raremine.corpus import (
    CaptionRecord,
    CorpusBundle,
    CropRecord,
    CropRecordSet,
    EmbeddingMatrix,
    group_by_scene,
)


def make_crop(oid: str, scene: str = "sceneA", detector_class: str = "car",
              confidence: float = 0.9) -> CropRecord:
    return CropRecord(
        object_id=oid,
        scene_id=scene,
        image_id=f"{scene}_cam0",
        bbox=(10.0, 20.0, 30.0, 40.0),
        detector_class=detector_class,
        detector_confidence=confidence,
    )


def make_bundle(
    spec: list[tuple[str, str]],
    dim: int = 4,
    seed: int = 0,
    captions: dict[str, str] | None = None,
    detector_classes: dict[str, str] | None = None,
    embeddings: dict[str, np.ndarray] | None = None,
) -> CorpusBundle:
    """Tiny hand-wired bundle: spec is a list of (object_id, scene_id)."""
    rng = np.random.default_rng(seed)
    records = [
        make_crop(oid, scene, detector_class=(detector_classes or {}).get(oid, "car"))
        for oid, scene in spec
    ]
    crops = CropRecordSet(records)
    rows = np.stack(
        [
            (embeddings or {}).get(oid, rng.normal(size=dim))
            for oid, _ in spec
        ]
    ).astype(np.float32)
    matrix = EmbeddingMatrix(data=rows, row_ids=[oid for oid, _ in spec], kind="image")
    caption_records = None
    if captions is not None:
        caption_records = {
            oid: CaptionRecord(object_id=oid, caption_text=text) for oid, text in captions.items()
        }
    return CorpusBundle(
        crops=crops,
        image_embeddings=matrix,
        scenes=group_by_scene(crops),
        captions=caption_records,
    )


@pytest.fixture
def small_vocab() -> ConceptVocabulary:
    dim = 4
    basis = np.eye(dim)
    return ConceptVocabulary(
        entries=[
            ConceptEntry("bicycle", basis[0], aliases=("bike",)),
            ConceptEntry("car", basis[1]),
            ConceptEntry("construction_vehicle", basis[2], aliases=("excavator",)),
            ConceptEntry("pedestrian", basis[3]),
        ],
        common_set=frozenset({"car", "pedestrian"}),
        target_set=frozenset({"bicycle"}),
    )
