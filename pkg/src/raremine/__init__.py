"""raremine: concept-based explainable rare-object mining over image embeddings.

Detects rare objects in an embedding corpus by fusing isolation-forest and
t-SNE/kNN outlier detection, classifies objects into Target/Rare/Common via
concept similarity, and emits deterministic scene-selection manifests with
per-scene explanations.
"""

from .concepts import (
    COMMON,
    RARE,
    TARGET,
    ConceptEntry,
    ConceptVocabulary,
    ObjectAssessment,
    SimilarityWeights,
    assess_objects,
    classify_object,
    concept_similarities,
    cosine_similarity,
    load_vocabulary,
    parse_concepts,
    rare_filter,
    top_concept,
    write_vocabulary,
)
from .corpus import (
    CaptionRecord,
    CorpusBundle,
    CorpusError,
    CropRecord,
    CropRecordSet,
    EmbeddingMatrix,
    SceneIndex,
    ValidationReport,
    group_by_scene,
    load_corpus,
    load_crop_records,
    load_embedding_matrix,
    validate_corpus,
    write_corpus,
)
from .iforest import (
    IForestParams,
    IsolationForestModel,
    IsolationTree,
    anomaly_scores,
    c_factor,
    fit_iforest,
    fit_then_score_split,
    path_length,
    threshold_by_contamination,
)
from .outliers import (
    CombinedOutlierVector,
    KnnOutlierParams,
    LofParams,
    class_aware_outliers,
    combine_outliers,
    ensemble_combine,
    knn_mean_distance,
    lof_flags,
    lof_scores,
    tsne_outlier_flags,
)
from .pipeline import MiningResult, RunConfig, load_run_config, run_mining
from .report import BarChartSpec, ScatterSpec, explain_scene, render_concept_bars, render_scatter
from .selection import (
    SelectionManifest,
    StrategySpec,
    build_manifest,
    near_target_map,
    random_sample_scenes,
    select_rare_scenes,
    select_target_scenes,
    write_manifest,
)
from .synth import SynthSpec, make_synthetic_corpus
from .tsne import (
    AffinityMatrix,
    Layout2D,
    TsneConfig,
    conditional_affinities,
    kl_divergence,
    run_tsne,
    symmetrize,
    tsne_gradient,
)

__version__ = "0.1.0"
