#!/usr/bin/env python3
"""Fusing the two detector branches: kNN distance flags, iforest flags, O_i.

The combined score O = 2*o_tsne + o_if keeps both verdicts decodable:
0 = neither branch, 1 = iforest only, 2 = tsne only, 3 = both. Downstream
selection gates on O > 0; the value itself feeds reports. LOF is available as
an alternative branch for union/intersection ensembles.
"""

import numpy as np

from raremine import (
    IForestParams,
    KnnOutlierParams,
    LofParams,
    anomaly_scores,
    combine_outliers,
    ensemble_combine,
    fit_iforest,
    knn_mean_distance,
    lof_flags,
    threshold_by_contamination,
    tsne_outlier_flags,
)
from raremine.rng import derive_rng

rng = derive_rng(42, "demo-fusion")

# Pretend 2-D layout: one dense cluster, one sparse ring, two stragglers.
cluster = rng.normal(size=(120, 2))
ring_angle = rng.uniform(0, 2 * np.pi, size=30)
ring = 6.0 * np.stack([np.cos(ring_angle), np.sin(ring_angle)], axis=1)
stragglers = np.array([[14.0, 0.0], [0.0, -15.0]])
L = np.vstack([cluster, ring, stragglers])

d_knn = knn_mean_distance(L, k=10)
o_tsne = tsne_outlier_flags(d_knn, KnnOutlierParams(k=10, quantile=0.80))
print(f"kNN mean distances: cluster~{d_knn[:120].mean():.2f}, stragglers~{d_knn[-2:].mean():.2f}")
print(f"tsne-branch flags: {o_tsne.sum()} of {len(L)}")

model = fit_iforest(L, IForestParams(contamination=0.20, seed=3))
o_if = threshold_by_contamination(anomaly_scores(model, L), 0.20)
print(f"iforest-branch flags: {o_if.sum()} (exactly floor(0.20*N))")

combined = combine_outliers(o_tsne, o_if)
values, counts = np.unique(combined.o_combined, return_counts=True)
print("combined O_i histogram:", dict(zip(values.tolist(), counts.tolist())))
print(f"stragglers got O=3 (both branches): {combined.o_combined[-2:].tolist()}")

# Ensemble modes over three detectors: union widens, intersection sharpens.
o_lof = lof_flags(L, LofParams(n_neighbors=20, contamination=0.20))
union = ensemble_combine([o_tsne, o_if, o_lof], "union")
inter = ensemble_combine([o_tsne, o_if, o_lof], "intersection")
print(f"\nunion flags {union.sum()} >= any branch; intersection flags {inter.sum()} <= any branch")
