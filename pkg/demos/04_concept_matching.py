#!/usr/bin/env python3
"""Concept vocabulary walkthrough: similarity ranking, trichotomy, rare filter.

Two deliberately distinct mechanisms:
* the Target/Rare/Common category comes from the top weighted-cosine concept;
* the rare filter R tests the combined outlier flag against concepts parsed
  out of the caption text (whole-word names and aliases).
"""

import numpy as np

from raremine import (
    ConceptEntry,
    ConceptVocabulary,
    SimilarityWeights,
    classify_object,
    concept_similarities,
    parse_concepts,
    rare_filter,
    top_concept,
)

dim = 6
axes = np.eye(dim)
vocab = ConceptVocabulary(
    entries=[
        ConceptEntry("car", axes[0]),
        ConceptEntry("pedestrian", axes[1]),
        ConceptEntry("bicycle", axes[2], aliases=("bike",)),
        ConceptEntry("motorcycle", axes[3], aliases=("motorbike", "scooter")),
        ConceptEntry("construction_vehicle", axes[4], aliases=("excavator", "bulldozer")),
        ConceptEntry("barrier", axes[5]),
    ],
    common_set=frozenset({"car", "pedestrian"}),
    target_set=frozenset({"bicycle", "motorcycle"}),
)

# An object whose image embedding leans bicycle and whose caption embedding
# leans motorcycle: the 0.5/0.5 blend decides.
image_emb = 0.9 * axes[2] + 0.3 * axes[0]
caption_emb = 0.8 * axes[3] + 0.2 * axes[2]
ranked = concept_similarities(image_emb, caption_emb, vocab, SimilarityWeights(0.5, 0.5))
print("ranked concept similarities:")
for name, score in ranked:
    print(f"  {name:22s} {score:+.3f}")

top = top_concept(ranked)
print(f"\ntop concept: {top} -> category {classify_object(top, vocab)}")

caption = "A yellow excavator working next to a parked car."
parsed = parse_concepts(caption, vocab)
print(f"\ncaption: {caption!r}")
print(f"parsed concepts (whole-word, alias-aware): {sorted(parsed)}")

# Rare filter: flagged outlier AND no parsed common concept.
for o_combined, concepts in ((3, {"construction_vehicle"}), (3, parsed), (0, {"construction_vehicle"})):
    r = rare_filter(o_combined, concepts, vocab.common_set)
    print(f"O={o_combined}, concepts={sorted(concepts)} -> R={r}")
