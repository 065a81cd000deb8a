"""Run configuration, stage orchestration, and content-hash stage caching.

One global seed drives everything: each stage derives its own child seed
(iforest, tsne, selection) so strategies can be re-run cheaply without
re-mining, and identical (corpus, config) inputs reproduce identical outputs
byte for byte. Stage caching is keyed by the SHA-256 of the stage inputs and
parameters; a corrupted cached table is recomputed with a warning.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tables
from .concepts import (
    ConceptVocabulary,
    ObjectAssessment,
    SimilarityWeights,
    assess_objects,
    load_vocabulary,
)
from .corpus import CorpusBundle, CorpusError, EmbeddingMatrix, load_corpus
from .iforest import IForestParams, anomaly_scores, fit_iforest, threshold_by_contamination
from .outliers import (
    CombinedOutlierVector,
    KnnOutlierParams,
    LofParams,
    class_aware_outliers,
    combine_outliers,
    knn_mean_distance,
    tsne_outlier_flags,
)
from .rng import derive_child_seed, derive_rng
from .selection import SelectionManifest, StrategySpec, build_manifest
from .tsne import Layout2D, TsneConfig, run_tsne

STAGE_FILES = {
    "iforest": ("iforest_scores.csv",),
    "tsne": ("tsne_layout.csv",),
    "knn": ("outlier_flags.csv",),
    "assess": ("assessments.csv",),
}


class ConfigError(ValueError):
    """Unusable run configuration (syntax, missing keys, missing files)."""


@dataclass
class RunConfig:
    crops_path: Path
    image_embedding_data: Path
    image_embedding_sidecar: Path
    vocabulary_path: Path
    out_dir: Path
    seed: int
    captions_path: Path | None = None
    caption_embedding_data: Path | None = None
    caption_embedding_sidecar: Path | None = None
    iforest: IForestParams = IForestParams()
    tsne: TsneConfig = TsneConfig()
    knn: KnnOutlierParams = KnnOutlierParams()
    lof: LofParams | None = None
    weights: SimilarityWeights = SimilarityWeights()
    strategy: StrategySpec = StrategySpec()
    class_aware: bool = False
    per_class_contamination: dict[str, float] | None = None
    # optional seeded row-subsample for the layout stage; rows left out keep
    # d_knn = 0 and o_tsne = 0, so only the iforest branch can flag them
    tsne_subsample: int | None = None

    @property
    def iforest_seed(self) -> int:
        return derive_child_seed(self.seed, "iforest")

    @property
    def tsne_seed(self) -> int:
        return derive_child_seed(self.seed, "tsne")

    @property
    def selection_seed(self) -> int:
        return derive_child_seed(self.seed, "select")


def _require(doc: dict, key: str, where: str) -> object:
    if key not in doc:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return doc[key]


def _build_params(factory, doc: dict, where: str):
    try:
        return factory(**doc)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_run_config(path: str | Path, seed_override: int | None = None) -> RunConfig:
    """Parse a JSON run config; paths resolve relative to the config file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path.name}: invalid JSON: {exc.msg} (line {exc.lineno})") from exc
    base = path.parent

    corpus_doc = _require(doc, "corpus", path.name)
    def resolve(key: str, required: bool) -> Path | None:
        if key not in corpus_doc:
            if required:
                raise ConfigError(f"{path.name}: corpus section missing {key!r}")
            return None
        p = base / str(corpus_doc[key])
        if not p.exists():
            raise ConfigError(f"{path.name}: referenced file does not exist: {p}")
        return p

    vocab_rel = _require(doc, "vocabulary", path.name)
    vocabulary_path = base / str(vocab_rel)
    if not vocabulary_path.exists():
        raise ConfigError(f"{path.name}: referenced file does not exist: {vocabulary_path}")

    seed = int(doc.get("seed", 0)) if seed_override is None else int(seed_override)
    strategy_doc = dict(doc.get("strategy", {}))
    if "target_concepts" in strategy_doc:
        strategy_doc["target_concepts"] = frozenset(strategy_doc["target_concepts"])
    strategy_doc["seed"] = derive_child_seed(seed, "select")  # one global knob

    knn_doc = dict(doc.get("knn", {}))
    if "threshold" in knn_doc and "quantile" not in knn_doc:
        knn_doc.setdefault("quantile", None)

    tsne_doc = dict(doc.get("tsne", {}))
    tsne_subsample = tsne_doc.pop("row_subsample", None)
    if tsne_subsample is not None and int(tsne_subsample) < 3:
        raise ConfigError(f"{path.name}: tsne.row_subsample must be >= 3")

    config = RunConfig(
        crops_path=resolve("crops", required=True),
        image_embedding_data=resolve("image_embeddings", required=True),
        image_embedding_sidecar=resolve("image_embeddings_sidecar", required=True),
        captions_path=resolve("captions", required=False),
        caption_embedding_data=resolve("caption_embeddings", required=False),
        caption_embedding_sidecar=resolve("caption_embeddings_sidecar", required=False),
        vocabulary_path=vocabulary_path,
        out_dir=base / str(doc.get("out_dir", "out")),
        seed=seed,
        iforest=_build_params(IForestParams, {**doc.get("iforest", {}), "seed": 0}, path.name),
        tsne=_build_params(TsneConfig, {**tsne_doc, "seed": 0}, path.name),
        knn=_build_params(KnnOutlierParams, knn_doc, path.name),
        lof=_build_params(LofParams, doc["lof"], path.name) if "lof" in doc else None,
        weights=_build_params(
            SimilarityWeights,
            {
                "text_weight": doc.get("weights", {}).get("text", 0.5),
                "image_weight": doc.get("weights", {}).get("image", 0.5),
            },
            path.name,
        ),
        strategy=_build_params(StrategySpec, strategy_doc, path.name),
        class_aware=bool(doc.get("class_aware", False)),
        per_class_contamination={str(k): float(v) for k, v in doc.get("per_class_contamination", {}).items()}
        or None,
        tsne_subsample=None if tsne_subsample is None else int(tsne_subsample),
    )
    # stage seeds derive from the single global seed
    config.iforest = dataclasses.replace(config.iforest, seed=config.iforest_seed)
    config.tsne = dataclasses.replace(config.tsne, seed=config.tsne_seed)
    return config


def load_corpus_from_config(config: RunConfig) -> CorpusBundle:
    return load_corpus(
        config.crops_path,
        config.image_embedding_data,
        config.image_embedding_sidecar,
        captions_path=config.captions_path,
        caption_embedding_data=config.caption_embedding_data,
        caption_embedding_sidecar=config.caption_embedding_sidecar,
    )


@dataclass
class MiningResult:
    object_ids: list[str]
    if_scores: np.ndarray
    layout: Layout2D
    d_knn: np.ndarray
    combined: CombinedOutlierVector
    assessments: list[ObjectAssessment]


def _run_layout(bundle: CorpusBundle, tsne_config: TsneConfig, tsne_subsample: int | None) -> Layout2D:
    """Layout over all rows, or over a seeded row subsample when configured."""
    X = bundle.image_embeddings
    n = X.n_rows
    if tsne_subsample is None or tsne_subsample >= n:
        return run_tsne(X, tsne_config)
    rng = derive_rng(tsne_config.seed, "tsne-subsample")
    idx = np.sort(rng.choice(n, size=tsne_subsample, replace=False))
    sub = EmbeddingMatrix(
        data=X.data[idx],
        row_ids=[X.row_ids[int(i)] for i in idx],
        kind=X.kind,
        source_model=X.source_model,
    )
    return run_tsne(sub, tsne_config)


def _knn_from_layout(
    layout: Layout2D,
    knn_params: KnnOutlierParams,
    object_ids: list[str],
) -> tuple[np.ndarray, np.ndarray]:
    """Full-length d_knn and o_tsne vectors from a possibly partial layout.

    The layout is non-parametric, so rows outside it have no 2-D position;
    they keep d_knn = 0 and o_tsne = 0, and only the iforest branch can flag
    them.
    """
    d_sub = knn_mean_distance(layout, knn_params.k)
    o_sub = tsne_outlier_flags(d_sub, knn_params)
    if layout.row_ids == object_ids:
        return d_sub, o_sub
    position = {oid: i for i, oid in enumerate(object_ids)}
    d_knn = np.zeros(len(object_ids), dtype=np.float64)
    o_tsne = np.zeros(len(object_ids), dtype=np.int64)
    for j, oid in enumerate(layout.row_ids):
        d_knn[position[oid]] = d_sub[j]
        o_tsne[position[oid]] = o_sub[j]
    return d_knn, o_tsne


def run_mining(
    bundle: CorpusBundle,
    vocab: ConceptVocabulary,
    iforest_params: IForestParams,
    tsne_config: TsneConfig,
    knn_params: KnnOutlierParams,
    weights: SimilarityWeights = SimilarityWeights(),
    n_threads: int = 1,
    class_aware: bool = False,
    per_class_contamination: dict[str, float] | None = None,
    tsne_subsample: int | None = None,
) -> MiningResult:
    """iforest -> tsne -> knn -> combine -> concept assessment, in memory."""
    X = bundle.image_embeddings
    model = fit_iforest(X, iforest_params, n_threads=n_threads)
    if_scores = anomaly_scores(model, X)
    if class_aware:
        labels = [bundle.crops.by_id[oid].detector_class for oid in bundle.object_ids]
        o_if = class_aware_outliers(
            X, labels, per_class_contamination, iforest_params, n_threads=n_threads
        )
    else:
        o_if = threshold_by_contamination(if_scores, iforest_params.contamination)
    layout = _run_layout(bundle, tsne_config, tsne_subsample)
    d_knn, o_tsne = _knn_from_layout(layout, knn_params, bundle.object_ids)
    combined = combine_outliers(o_tsne, o_if)
    assessments = assess_objects(bundle, vocab, weights, if_scores, d_knn, combined)
    return MiningResult(
        object_ids=bundle.object_ids,
        if_scores=if_scores,
        layout=layout,
        d_knn=d_knn,
        combined=combined,
        assessments=assessments,
    )


class StageCache:
    """Content-hash keyed stage cache over the output directory."""

    def __init__(self, out_dir: Path, enabled: bool = True):
        self.out_dir = Path(out_dir)
        self.enabled = enabled
        self.path = self.out_dir / "cache.json"
        self.state: dict[str, dict] = {}
        if enabled and self.path.exists():
            try:
                self.state = json.loads(self.path.read_text(encoding="utf-8")).get("stages", {})
            except (json.JSONDecodeError, OSError):
                warnings.warn("unreadable cache.json; starting with an empty cache", stacklevel=2)
                self.state = {}

    def fresh(self, stage: str, key: str) -> bool:
        if not self.enabled:
            return False
        entry = self.state.get(stage)
        if entry is None or entry.get("key") != key:
            return False
        return all((self.out_dir / name).exists() for name in STAGE_FILES[stage])

    def record(self, stage: str, key: str) -> None:
        self.state[stage] = {"key": key, "outputs": list(STAGE_FILES[stage])}
        self.path.write_text(
            json.dumps({"stages": self.state}, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _hash_parts(*parts: bytes | str) -> str:
    h = hashlib.sha256()
    for part in parts:
        data = part.encode("utf-8") if isinstance(part, str) else part
        h.update(len(data).to_bytes(8, "little"))
        h.update(data)
    return h.hexdigest()


def _params_json(params) -> str:
    return json.dumps(dataclasses.asdict(params), sort_keys=True, default=sorted)


def corpus_content_hash(config: RunConfig) -> str:
    parts: list[bytes] = []
    for p in (
        config.crops_path,
        config.image_embedding_data,
        config.image_embedding_sidecar,
        config.captions_path,
        config.caption_embedding_data,
        config.caption_embedding_sidecar,
    ):
        parts.append(b"" if p is None else Path(p).read_bytes())
    return _hash_parts(*parts)


def mine_to_disk(config: RunConfig, use_cache: bool = True, n_threads: int = 1) -> MiningResult:
    """Run the mining stages, reusing cached stage tables when inputs match."""
    bundle = load_corpus_from_config(config)
    try:
        vocab = load_vocabulary(config.vocabulary_path)
    except ValueError as exc:
        raise CorpusError(f"vocabulary: {exc}") from exc
    config.out_dir.mkdir(parents=True, exist_ok=True)
    cache = StageCache(config.out_dir, enabled=use_cache)
    corpus_hash = corpus_content_hash(config)
    object_ids = bundle.object_ids

    def load_stage(stage: str, loader):
        try:
            return loader()
        except (ValueError, OSError) as exc:
            warnings.warn(f"cached {stage} output unusable ({exc}); recomputing", stacklevel=2)
            return None

    # iforest stage
    if_key = _hash_parts(
        corpus_hash,
        _params_json(config.iforest),
        f"class_aware={config.class_aware}",
        json.dumps(config.per_class_contamination or {}, sort_keys=True),
    )
    if_scores = o_if = None
    if cache.fresh("iforest", if_key):
        loaded = load_stage("iforest", lambda: tables.read_score_table(config.out_dir / "iforest_scores.csv"))
        if loaded is not None:
            ids, if_scores, o_if = loaded
            if ids != object_ids:
                if_scores = o_if = None
    if if_scores is None:
        model = fit_iforest(bundle.image_embeddings, config.iforest, n_threads=n_threads)
        if_scores = anomaly_scores(model, bundle.image_embeddings)
        if config.class_aware:
            labels = [bundle.crops.by_id[oid].detector_class for oid in object_ids]
            o_if = class_aware_outliers(
                bundle.image_embeddings, labels, config.per_class_contamination,
                config.iforest, n_threads=n_threads,
            )
        else:
            o_if = threshold_by_contamination(if_scores, config.iforest.contamination)
        tables.write_score_table(config.out_dir / "iforest_scores.csv", object_ids, if_scores, o_if)
        cache.record("iforest", if_key)

    # tsne stage (layout possibly over a seeded row subsample)
    expected_layout_rows = min(config.tsne_subsample or len(object_ids), len(object_ids))
    if config.tsne_subsample is not None and expected_layout_rows <= config.knn.k:
        raise CorpusError(
            f"tsne.row_subsample={config.tsne_subsample} must exceed the kNN neighbor count {config.knn.k}"
        )
    tsne_key = _hash_parts(
        corpus_hash, _params_json(config.tsne), f"subsample={config.tsne_subsample}"
    )
    layout = None
    if cache.fresh("tsne", tsne_key):
        layout = load_stage("tsne", lambda: tables.read_layout_table(config.out_dir / "tsne_layout.csv"))
        if layout is not None and (
            len(layout.row_ids) != expected_layout_rows
            or not set(layout.row_ids) <= set(object_ids)
        ):
            layout = None
    if layout is None:
        layout = _run_layout(bundle, config.tsne, config.tsne_subsample)
        tables.write_layout_table(config.out_dir / "tsne_layout.csv", layout)
        cache.record("tsne", tsne_key)

    # knn + combination stage
    knn_key = _hash_parts(tsne_key, if_key, _params_json(config.knn))
    d_knn = combined = None
    if cache.fresh("knn", knn_key):
        loaded = load_stage("knn", lambda: tables.read_flag_table(config.out_dir / "outlier_flags.csv"))
        if loaded is not None and list(loaded) == object_ids:
            d_knn = np.array([loaded[o]["d_knn"] for o in object_ids])
            combined = CombinedOutlierVector.from_combined(
                np.array([loaded[o]["o_combined"] for o in object_ids], dtype=np.int64)
            )
    if d_knn is None:
        d_knn, o_tsne = _knn_from_layout(layout, config.knn, object_ids)
        combined = combine_outliers(o_tsne, np.asarray(o_if, dtype=np.int64))
        tables.write_flag_table(config.out_dir / "outlier_flags.csv", object_ids, d_knn, if_scores, combined)
        cache.record("knn", knn_key)

    # concept assessment stage
    assess_key = _hash_parts(
        corpus_hash,
        knn_key,
        Path(config.vocabulary_path).read_bytes(),
        _params_json(config.weights),
    )
    assessments = None
    if cache.fresh("assess", assess_key):
        assessments = load_stage(
            "assess",
            lambda: tables.read_assessments(
                config.out_dir / "outlier_flags.csv", config.out_dir / "assessments.csv"
            ),
        )
        if assessments is not None and [a.object_id for a in assessments] != object_ids:
            assessments = None
    if assessments is None:
        assessments = assess_objects(bundle, vocab, config.weights, if_scores, d_knn, combined)
        tables.write_assessment_table(config.out_dir / "assessments.csv", assessments)
        cache.record("assess", assess_key)

    return MiningResult(
        object_ids=object_ids,
        if_scores=np.asarray(if_scores, dtype=np.float64),
        layout=layout,
        d_knn=np.asarray(d_knn, dtype=np.float64),
        combined=combined,
        assessments=assessments,
    )


def select_to_disk(config: RunConfig, strategy: StrategySpec | None = None) -> SelectionManifest:
    """Build the manifest from the on-disk assessment tables.

    A pure-random strategy needs no mining outputs; every other kind requires
    the flag and assessment tables written by the mine command.
    """
    spec = strategy if strategy is not None else config.strategy
    flag_path = config.out_dir / "outlier_flags.csv"
    assessment_path = config.out_dir / "assessments.csv"
    bundle = load_corpus_from_config(config)
    vocab = load_vocabulary(config.vocabulary_path)
    if spec.kind == "random":
        assessments: list[ObjectAssessment] = []
    else:
        if not flag_path.exists() or not assessment_path.exists():
            raise CorpusError(
                "assessments not found in the output directory; run the mine command first"
            )
        assessments = tables.read_assessments(flag_path, assessment_path)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(bundle, assessments, spec, known_concepts=vocab.names)
    (config.out_dir / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest
