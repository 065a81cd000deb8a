"""Scene-level selection strategies with explainable, budgeted manifests.

The selection unit is the scene: a scene qualifies for the mined pool when at
least one of its objects satisfies the strategy's predicate, and every mined
scene in the manifest carries the qualifying objects as machine-checkable
evidence. The random part is always drawn from the scenes not already mined,
so the two sources never overlap.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .concepts import ObjectAssessment
from .corpus import SceneIndex
from .rng import derive_rng

KINDS = ("random", "random_rare", "random_target", "random_target_plus")
REASON_RANDOM = "random"
REASON_TARGET = "target_hit"
REASON_RARE = "rare_hit"
EVIDENCE_CAP = 20

# Detector classes whose label covers several annotation classes; the mapped
# candidates make an object eligible for the outlier-bypass path.
DEFAULT_NEAR_TARGET_MAP: dict[str, frozenset[str]] = {
    "truck": frozenset({"construction_vehicle", "truck", "trailer"}),
}


@dataclass(frozen=True)
class StrategySpec:
    kind: str = "random"
    random_fraction: float = 0.10
    mined_fraction: float = 0.10
    target_concepts: frozenset[str] = frozenset()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("random_fraction", "mined_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0,1], got {v}")
        if self.random_fraction + self.mined_fraction > 1.0:
            raise ValueError("random_fraction + mined_fraction must not exceed 1")
        object.__setattr__(self, "target_concepts", frozenset(self.target_concepts))
        if self.kind in ("random_target", "random_target_plus") and not self.target_concepts:
            raise ValueError(f"kind {self.kind!r} requires non-empty target_concepts")


@dataclass
class SceneExplanation:
    scene_id: str
    reason: str
    evidence: list[dict]
    evidence_total: int

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "reason": self.reason,
            "evidence": self.evidence,
            "evidence_total": self.evidence_total,
        }


@dataclass
class SelectionManifest:
    strategy: StrategySpec
    selected_scenes: list[str]
    explanations: list[SceneExplanation]
    counts: dict[str, int]
    warnings_: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "strategy": {
                "kind": self.strategy.kind,
                "random_fraction": self.strategy.random_fraction,
                "mined_fraction": self.strategy.mined_fraction,
                "target_concepts": sorted(self.strategy.target_concepts),
            },
            "seed": self.strategy.seed,
            "scenes": list(self.selected_scenes),
            "explanations": [e.to_dict() for e in self.explanations],
            "counts": dict(self.counts),
            "warnings": list(self.warnings_),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=True) + "\n"

    def explanation_for(self, scene_id: str) -> SceneExplanation:
        for e in self.explanations:
            if e.scene_id == scene_id:
                return e
        raise KeyError(f"scene {scene_id!r} is not in the manifest")


def write_manifest(manifest: SelectionManifest, path: str | Path) -> None:
    Path(path).write_text(manifest.to_json(), encoding="utf-8")


def _by_id(assessments: Iterable[ObjectAssessment]) -> dict[str, ObjectAssessment]:
    return {a.object_id: a for a in assessments}


def select_target_scenes(
    scene_index: SceneIndex,
    assessments: Sequence[ObjectAssessment],
    target_concepts: Iterable[str],
    known_concepts: set[str] | None = None,
) -> set[str]:
    """Scenes containing at least one object whose top concept is a target."""
    targets = set(target_concepts)
    if known_concepts is not None:
        unknown = targets - known_concepts
        if unknown:
            raise ValueError(f"unknown target concepts (not in vocabulary): {sorted(unknown)}")
    index = _by_id(assessments)
    return {
        sid
        for sid, objs in scene_index.scenes.items()
        if any(oid in index and index[oid].top_concept in targets for oid in objs)
    }


def select_rare_scenes(scene_index: SceneIndex, assessments: Sequence[ObjectAssessment]) -> set[str]:
    """Scenes containing at least one object with rare flag 1."""
    index = _by_id(assessments)
    return {
        sid
        for sid, objs in scene_index.scenes.items()
        if any(oid in index and index[oid].rare_flag == 1 for oid in objs)
    }


def random_sample_scenes(
    all_scenes: Sequence[str],
    fraction: float,
    seed: int,
    exclude_set: Iterable[str] = (),
) -> set[str]:
    """floor(fraction * |all_scenes|) scenes drawn uniformly from the pool.

    The pool is all_scenes minus the exclusions, sorted before drawing so the
    choice depends only on (pool contents, seed). A pool smaller than the
    quota is returned whole with a warning.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0,1], got {fraction}")
    quota = math.floor(fraction * len(all_scenes))
    pool = sorted(set(all_scenes) - set(exclude_set))
    if len(pool) < quota:
        warnings.warn(
            f"random pool has {len(pool)} scenes for a quota of {quota}; taking the whole pool",
            stacklevel=2,
        )
        return set(pool)
    rng = derive_rng(seed, "random-scenes")
    chosen = rng.choice(len(pool), size=quota, replace=False)
    return {pool[int(i)] for i in chosen}


def near_target_map(
    detector_class: str,
    mapping: dict[str, frozenset[str]] | None = None,
) -> frozenset[str]:
    """Candidate annotation classes for a detector class; identity when unmapped."""
    table = DEFAULT_NEAR_TARGET_MAP if mapping is None else mapping
    return table.get(detector_class, frozenset({detector_class}))


def _evidence_dict(a: ObjectAssessment) -> dict:
    return {
        "object_id": a.object_id,
        "top_concept": a.top_concept,
        "o_combined": a.o_combined,
        "rare_flag": a.rare_flag,
    }


def build_manifest(
    corpus,
    assessments: Sequence[ObjectAssessment],
    spec: StrategySpec,
    known_concepts: set[str] | None = None,
    near_target_mapping: dict[str, frozenset[str]] | None = None,
) -> SelectionManifest:
    """Deterministic scene manifest for the strategy.

    Mined pools per kind: random_rare collects scenes with a rare-flagged
    object; random_target collects scenes with a target-top-concept object
    that passed the outlier gate; random_target_plus additionally admits
    target-top-concept objects whose detector class maps to a near-target
    class, regardless of their outlier flags. The mined pool is capped at
    floor(mined_fraction * |scenes|) by seeded subsampling; the random part is
    drawn from the remaining scenes.
    """
    scene_index: SceneIndex = corpus.scenes
    all_scenes = scene_index.scene_ids
    index = _by_id(assessments)
    if spec.kind != "random":
        missing = [oid for oid in scene_index.all_object_ids() if oid not in index]
        if missing:
            raise ValueError(f"assessments missing for {len(missing)} objects (first: {missing[:3]})")
    if spec.target_concepts and known_concepts is not None:
        unknown = set(spec.target_concepts) - known_concepts
        if unknown:
            raise ValueError(f"unknown target concepts (not in vocabulary): {sorted(unknown)}")

    manifest_warnings: list[str] = []

    def target_eligible(a: ObjectAssessment, bypass_gate: bool) -> bool:
        if a.top_concept not in spec.target_concepts:
            return False
        if a.o_combined > 0:
            return True
        if not bypass_gate:
            return False
        detector_class = corpus.crops.by_id[a.object_id].detector_class
        return bool(near_target_map(detector_class, near_target_mapping) & spec.target_concepts)

    target_evidence: dict[str, list[ObjectAssessment]] = {}
    rare_evidence: dict[str, list[ObjectAssessment]] = {}
    if spec.kind != "random":
        if spec.target_concepts:
            bypass = spec.kind == "random_target_plus"
            for sid, objs in scene_index.scenes.items():
                hits = [index[oid] for oid in objs if target_eligible(index[oid], bypass)]
                if hits:
                    target_evidence[sid] = hits
        for sid, objs in scene_index.scenes.items():
            hits = [a for a in (index.get(oid) for oid in objs) if a is not None and a.rare_flag == 1]
            if hits:
                rare_evidence[sid] = hits

    if spec.kind == "random":
        mined: list[str] = []
        pool_size = 0
        random_quota_fraction = spec.random_fraction + spec.mined_fraction
    else:
        pool = sorted(target_evidence if spec.kind in ("random_target", "random_target_plus") else rare_evidence)
        pool_size = len(pool)
        quota = math.floor(spec.mined_fraction * len(all_scenes))
        if pool_size > quota:
            rng = derive_rng(spec.seed, "mined-scenes")
            chosen = rng.choice(pool_size, size=quota, replace=False)
            mined = sorted(pool[int(i)] for i in chosen)
        else:
            if pool_size < quota:
                msg = f"mined pool has {pool_size} scenes for a quota of {quota}; taking the whole pool"
                warnings.warn(msg, stacklevel=2)
                manifest_warnings.append(msg)
            mined = list(pool)
        random_quota_fraction = spec.random_fraction

    random_scenes = sorted(
        random_sample_scenes(all_scenes, random_quota_fraction, spec.seed, exclude_set=mined)
    )

    explanations: list[SceneExplanation] = []
    for sid in mined:
        # a scene qualifying as both rare and target records the more specific reason
        if sid in target_evidence:
            reason, hits = REASON_TARGET, target_evidence[sid]
        else:
            reason, hits = REASON_RARE, rare_evidence[sid]
        explanations.append(
            SceneExplanation(
                scene_id=sid,
                reason=reason,
                evidence=[_evidence_dict(a) for a in hits[:EVIDENCE_CAP]],
                evidence_total=len(hits),
            )
        )
    for sid in random_scenes:
        explanations.append(SceneExplanation(scene_id=sid, reason=REASON_RANDOM, evidence=[], evidence_total=0))

    selected = mined + random_scenes
    if len(selected) != len(set(selected)):
        raise RuntimeError("internal error: duplicate scenes in manifest")
    counts = {
        "total_scenes": len(all_scenes),
        "selected_scenes": len(selected),
        "mined_scenes": len(mined),
        "random_scenes": len(random_scenes),
        "mined_pool": pool_size,
        "reason_target_hit": sum(1 for e in explanations if e.reason == REASON_TARGET),
        "reason_rare_hit": sum(1 for e in explanations if e.reason == REASON_RARE),
        "reason_random": sum(1 for e in explanations if e.reason == REASON_RANDOM),
    }
    return SelectionManifest(
        strategy=spec,
        selected_scenes=selected,
        explanations=explanations,
        counts=counts,
        warnings_=manifest_warnings,
    )
