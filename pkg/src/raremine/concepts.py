"""Concept vocabulary, weighted similarity ranking, and the rare filter.

Two distinct mechanisms, kept deliberately separate:

* the Target/Rare/Common trichotomy ranks every vocabulary concept by a
  weighted cosine similarity of the object's caption and image embeddings and
  classifies by the top concept's membership;
* the rare filter tests the combined outlier flag against the concepts parsed
  from the caption text (whole-word name/alias matching). An object is rare
  iff it was flagged by either detector and none of its parsed concepts is a
  common class. Objects without captions fall back to the image-only top
  concept for the parsed set, so the filter stays total.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TARGET = "Target"
RARE = "Rare"
COMMON = "Common"


class VocabularyError(ValueError):
    """Malformed or inconsistent concept vocabulary."""


@dataclass(frozen=True)
class ConceptEntry:
    name: str
    embedding: np.ndarray
    aliases: tuple[str, ...] = ()


@dataclass
class ConceptVocabulary:
    entries: list[ConceptEntry]
    common_set: frozenset[str]
    target_set: frozenset[str]
    by_name: dict[str, ConceptEntry] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.by_name = {}
        dim = None
        for entry in self.entries:
            if entry.name in self.by_name:
                raise VocabularyError(f"duplicate concept name {entry.name!r}")
            if dim is None:
                dim = len(entry.embedding)
            elif len(entry.embedding) != dim:
                raise VocabularyError(
                    f"concept {entry.name!r} has dim {len(entry.embedding)}, expected {dim}"
                )
            self.by_name[entry.name] = entry
        overlap = self.common_set & self.target_set
        if overlap:
            raise VocabularyError(f"concepts in both common and target sets: {sorted(overlap)}")
        for role, names in (("common", self.common_set), ("target", self.target_set)):
            unknown = names - set(self.by_name)
            if unknown:
                raise VocabularyError(f"{role} set names missing from vocabulary: {sorted(unknown)}")

    @property
    def names(self) -> set[str]:
        return set(self.by_name)

    @property
    def dim(self) -> int:
        return len(self.entries[0].embedding) if self.entries else 0


def load_vocabulary(path: str | Path) -> ConceptVocabulary:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise VocabularyError(f"{Path(path).name}: malformed vocabulary file: {exc.msg}") from exc
    if "concepts" not in doc:
        raise VocabularyError(f"{Path(path).name}: missing 'concepts' field")
    entries = []
    for item in doc["concepts"]:
        if "name" not in item or "embedding" not in item:
            raise VocabularyError(f"{Path(path).name}: concept entries need 'name' and 'embedding'")
        entries.append(
            ConceptEntry(
                name=str(item["name"]),
                embedding=np.asarray(item["embedding"], dtype=np.float64),
                aliases=tuple(str(a) for a in item.get("aliases", [])),
            )
        )
    return ConceptVocabulary(
        entries=entries,
        common_set=frozenset(str(n) for n in doc.get("common", [])),
        target_set=frozenset(str(n) for n in doc.get("target", [])),
    )


def write_vocabulary(vocab: ConceptVocabulary, path: str | Path) -> None:
    doc = {
        "concepts": [
            {"name": e.name, "aliases": list(e.aliases), "embedding": [float(v) for v in e.embedding]}
            for e in vocab.entries
        ],
        "common": sorted(vocab.common_set),
        "target": sorted(vocab.target_set),
    }
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=True) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SimilarityWeights:
    """Text/image blend; normalized so the weights sum to one."""

    text_weight: float = 0.5
    image_weight: float = 0.5

    def __post_init__(self) -> None:
        if self.text_weight < 0 or self.image_weight < 0:
            raise ValueError("weights must be >= 0")
        total = self.text_weight + self.image_weight
        if total <= 0:
            raise ValueError("weights must not both be zero")
        object.__setattr__(self, "text_weight", self.text_weight / total)
        object.__setattr__(self, "image_weight", self.image_weight / total)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.dot(a, b)) / (na * nb)


def concept_similarities(
    image_embedding: np.ndarray | None,
    caption_embedding: np.ndarray | None,
    vocab: ConceptVocabulary,
    weights: SimilarityWeights = SimilarityWeights(),
) -> list[tuple[str, float]]:
    """Weighted text/image cosine per concept, ranked descending (ties by name).

    A missing modality renormalizes the remaining weight to one.
    """
    if image_embedding is None and caption_embedding is None:
        raise ValueError("at least one of image or caption embedding is required")
    w_text, w_image = weights.text_weight, weights.image_weight
    if caption_embedding is None:
        w_text, w_image = 0.0, 1.0
    elif image_embedding is None:
        w_text, w_image = 1.0, 0.0
    scored = []
    for entry in vocab.entries:
        score = 0.0
        if w_text > 0:
            score += w_text * cosine_similarity(caption_embedding, entry.embedding)
        if w_image > 0:
            score += w_image * cosine_similarity(image_embedding, entry.embedding)
        scored.append((entry.name, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def top_concept(ranked: list[tuple[str, float]]) -> str:
    if not ranked:
        raise ValueError("empty concept ranking")
    return ranked[0][0]


def classify_object(top: str, vocab: ConceptVocabulary) -> str:
    """Target / Common membership of the top concept; everything else is Rare."""
    if top not in vocab.by_name:
        raise KeyError(f"unknown concept {top!r}")
    if top in vocab.target_set:
        return TARGET
    if top in vocab.common_set:
        return COMMON
    return RARE


def rare_filter(o_combined: int, concepts: set[str], common_set: frozenset[str] | set[str]) -> int:
    """R = 1 iff the object was flagged (O > 0) and no parsed concept is common."""
    if o_combined not in (0, 1, 2, 3):
        raise ValueError(f"combined outlier value must lie in {{0,1,2,3}}, got {o_combined}")
    return int(o_combined > 0 and not (set(concepts) & set(common_set)))


def _match_patterns(vocab: ConceptVocabulary) -> list[tuple[str, re.Pattern]]:
    patterns = []
    for entry in vocab.entries:
        candidates = {entry.name, *entry.aliases}
        if "_" in entry.name:
            candidates.add(entry.name.replace("_", " "))
        alternation = "|".join(re.escape(c) for c in sorted(candidates, key=len, reverse=True))
        patterns.append((entry.name, re.compile(rf"\b(?:{alternation})\b", re.IGNORECASE)))
    return patterns


def parse_concepts(caption_text: str, vocab: ConceptVocabulary) -> set[str]:
    """Concept names whose name or alias occurs as a whole word in the caption."""
    if not caption_text:
        return set()
    return {name for name, pattern in _match_patterns(vocab) if pattern.search(caption_text)}


@dataclass
class ConceptAssessment:
    """Concept verdict for one object."""

    object_id: str
    ranked: list[tuple[str, float]]
    top_concept: str
    category: str
    rare_flag: int

    @property
    def top_score(self) -> float:
        return self.ranked[0][1]


@dataclass
class ObjectAssessment:
    """Full per-object mining verdict consumed by selection and reports."""

    object_id: str
    if_score: float
    o_if: int
    d_knn: float
    o_tsne: int
    o_combined: int
    top_concept: str
    top_score: float
    category: str
    parsed_concepts: frozenset[str]
    rare_flag: int


def assess_objects(
    bundle,
    vocab: ConceptVocabulary,
    weights: SimilarityWeights,
    if_scores: np.ndarray,
    d_knn: np.ndarray,
    combined,
) -> list[ObjectAssessment]:
    """Assemble the mining verdict for every object in canonical corpus order."""
    object_ids = bundle.object_ids
    n = len(object_ids)
    for name, vec in (("if_scores", if_scores), ("d_knn", d_knn), ("o_combined", combined.o_combined)):
        if len(vec) != n:
            raise ValueError(f"{name} has {len(vec)} entries for {n} objects")
    if vocab.dim != bundle.image_embeddings.dim:
        raise ValueError(
            f"vocabulary dim {vocab.dim} does not match image embedding dim "
            f"{bundle.image_embeddings.dim}"
        )
    if bundle.caption_embeddings is not None and bundle.caption_embeddings.dim != vocab.dim:
        raise ValueError(
            f"caption embedding dim {bundle.caption_embeddings.dim} does not match "
            f"vocabulary dim {vocab.dim}"
        )

    assessments = []
    for i, oid in enumerate(object_ids):
        image_emb = bundle.image_embeddings.row(oid)
        caption = bundle.captions.get(oid) if bundle.captions else None
        caption_emb = None
        if caption is not None and caption.caption_embedding_row is not None and bundle.caption_embeddings is not None:
            caption_emb = bundle.caption_embeddings.data[caption.caption_embedding_row]
        ranked = concept_similarities(image_emb, caption_emb, vocab, weights)
        top = top_concept(ranked)
        if caption is not None and caption.caption_text:
            parsed = parse_concepts(caption.caption_text, vocab)
        else:
            # no caption: fall back to the image-only top concept
            parsed = {top_concept(concept_similarities(image_emb, None, vocab, weights))}
        o_i = int(combined.o_combined[i])
        assessments.append(
            ObjectAssessment(
                object_id=oid,
                if_score=float(if_scores[i]),
                o_if=int(combined.o_if[i]),
                d_knn=float(d_knn[i]),
                o_tsne=int(combined.o_tsne[i]),
                o_combined=o_i,
                top_concept=top,
                top_score=float(ranked[0][1]),
                category=classify_object(top, vocab),
                parsed_concepts=frozenset(parsed),
                rare_flag=rare_filter(o_i, parsed, vocab.common_set),
            )
        )
    return assessments


def concept_assessment(
    object_id: str,
    image_embedding: np.ndarray | None,
    caption_embedding: np.ndarray | None,
    o_combined: int,
    parsed: set[str],
    vocab: ConceptVocabulary,
    weights: SimilarityWeights = SimilarityWeights(),
) -> ConceptAssessment:
    """Standalone concept verdict (trichotomy + rare flag) for one object."""
    ranked = concept_similarities(image_embedding, caption_embedding, vocab, weights)
    top = top_concept(ranked)
    return ConceptAssessment(
        object_id=object_id,
        ranked=ranked,
        top_concept=top,
        category=classify_object(top, vocab),
        rare_flag=rare_filter(o_combined, parsed, vocab.common_set),
    )
