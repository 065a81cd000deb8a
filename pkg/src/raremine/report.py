"""Deterministic SVG scatter/bar renderings and plain-text scene reports.

SVG output is byte-stable for identical inputs: coordinates are formatted to
four decimals and element order is fixed (corpus order, with flagged points
re-ordered after inliers so they stay visible on top of dense regions).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .concepts import ObjectAssessment
from .selection import REASON_RANDOM, SelectionManifest

COLOR_KEYS = ("category", "o_if", "o_tsne", "o_combined")
# slot 0 is the inlier (blue-class) slot; slots 1..3 are outlier (red-class) slots
DEFAULT_PALETTE = ("#3465a4", "#cc0000", "#f57900", "#75507b", "#4e9a06", "#c17d11")
MARGIN_FRACTION = 0.05


@dataclass
class ScatterSpec:
    layout: object  # Layout2D
    color_key: str
    values: list  # per-object key values aligned with the layout rows
    palette: tuple[str, ...] = DEFAULT_PALETTE
    point_radius: float = 3.0
    width: int = 640
    height: int = 480

    def __post_init__(self) -> None:
        if self.color_key not in COLOR_KEYS:
            raise ValueError(f"color_key must be one of {COLOR_KEYS}, got {self.color_key!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("canvas dimensions must be positive")
        if len(self.values) != len(self.layout.row_ids):
            raise ValueError(
                f"{len(self.values)} values for {len(self.layout.row_ids)} layout rows"
            )


@dataclass
class BarChartSpec:
    ranked: list[tuple[str, float]]
    top_m: int = 10
    width: int = 480
    bar_height: int = 22
    palette: tuple[str, ...] = field(default=DEFAULT_PALETTE)

    def __post_init__(self) -> None:
        if self.top_m < 1:
            raise ValueError("top_m must be >= 1")
        if not self.ranked:
            raise ValueError("ranking must be non-empty")


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def _axis_transform(vals: np.ndarray, size: float) -> tuple[float, float]:
    lo, hi = float(vals.min()), float(vals.max())
    usable = size * (1.0 - 2.0 * MARGIN_FRACTION)
    if hi == lo:
        return 0.0, size / 2.0  # degenerate extent: park everything at the center
    return usable / (hi - lo), size * MARGIN_FRACTION - lo * usable / (hi - lo)


def _slot_of(value, color_key: str, categories: list[str]) -> int:
    if color_key == "category":
        return categories.index(str(value))
    return int(value)


def render_scatter(spec: ScatterSpec) -> str:
    """One circle per object, colored by the key value; flagged points on top."""
    Y = np.asarray(spec.layout.Y, dtype=np.float64)
    if Y.shape[0] == 0:
        raise ValueError("cannot render an empty layout")
    categories = sorted({str(v) for v in spec.values}) if spec.color_key == "category" else []
    n_slots = (
        len(categories)
        if spec.color_key == "category"
        else max(int(v) for v in spec.values) + 1
    )
    if n_slots > len(spec.palette):
        raise ValueError(f"palette has {len(spec.palette)} colors for {n_slots} distinct keys")

    ax, bx = _axis_transform(Y[:, 0], float(spec.width))
    ay, by = _axis_transform(Y[:, 1], float(spec.height))

    order = list(range(Y.shape[0]))
    if spec.color_key != "category":
        # inliers first, outliers last, so outliers stay visible when overplotted
        order = [i for i in order if int(spec.values[i]) == 0] + [
            i for i in order if int(spec.values[i]) != 0
        ]

    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{spec.width}" height="{spec.height}" '
        f'viewBox="0 0 {spec.width} {spec.height}">',
        f'<rect x="0" y="0" width="{spec.width}" height="{spec.height}" fill="#ffffff"/>',
    ]
    for i in order:
        slot = _slot_of(spec.values[i], spec.color_key, categories)
        cx = ax * Y[i, 0] + bx if ax != 0.0 else bx
        cy = spec.height - (ay * Y[i, 1] + by if ay != 0.0 else by)
        lines.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(spec.point_radius)}" '
            f'fill="{spec.palette[slot]}"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_concept_bars(spec: BarChartSpec) -> str:
    """Horizontal bars for the top-m concept similarities on a [0,1] axis."""
    ranked = sorted(spec.ranked, key=lambda item: (-item[1], item[0]))[: spec.top_m]
    label_width = 170
    value_width = 60
    plot_width = spec.width - label_width - value_width
    row_gap = 6
    height = len(ranked) * (spec.bar_height + row_gap) + row_gap

    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{spec.width}" height="{height}" viewBox="0 0 {spec.width} {height}">',
        f'<rect x="0" y="0" width="{spec.width}" height="{height}" fill="#ffffff"/>',
    ]
    for row, (name, score) in enumerate(ranked):
        y = row_gap + row * (spec.bar_height + row_gap)
        clamped = min(max(score, 0.0), 1.0)  # negative cosines render at zero width
        bar_w = clamped * plot_width
        text_y = y + spec.bar_height * 0.7
        lines.append(
            f'<text x="{label_width - 6}" y="{_fmt(text_y)}" text-anchor="end" '
            f'font-family="monospace" font-size="12">{escape(name)}</text>'
        )
        lines.append(
            f'<rect x="{label_width}" y="{y}" width="{_fmt(bar_w)}" '
            f'height="{spec.bar_height}" fill="{spec.palette[0]}"/>'
        )
        lines.append(
            f'<text x="{_fmt(label_width + bar_w + 4)}" y="{_fmt(text_y)}" '
            f'font-family="monospace" font-size="12">{_fmt(score)}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


_STRATEGY_CLAUSES = {
    "random": "scene drawn by seeded uniform sampling over all scenes",
    "random_rare": "scene contains >= 1 object with rare flag R = 1 "
    "(flagged outlier, no common concept parsed)",
    "random_target": "scene contains >= 1 outlier-gated object (O > 0) whose top concept "
    "is a target concept",
    "random_target_plus": "scene contains >= 1 object whose top concept is a target concept, "
    "outlier-gated or detector-class near-target (gate bypassed)",
}


def explain_scene(
    manifest: SelectionManifest,
    corpus,
    assessments: list[ObjectAssessment],
    scene_id: str,
) -> str:
    """Human-readable account of why a manifest scene was selected."""
    explanation = manifest.explanation_for(scene_id)
    spec = manifest.strategy
    by_id = {a.object_id: a for a in assessments}

    lines = [
        f"scene {scene_id}",
        f"strategy: {spec.kind} (random {spec.random_fraction:.0%} + mined {spec.mined_fraction:.0%}"
        + (f"; targets: {', '.join(sorted(spec.target_concepts))}" if spec.target_concepts else "")
        + ")",
        f"reason: {explanation.reason}",
    ]
    if explanation.reason == REASON_RANDOM:
        lines.append(f"matched clause: {_STRATEGY_CLAUSES['random']}")
        return "\n".join(lines) + "\n"

    lines.append(f"matched clause: {_STRATEGY_CLAUSES[spec.kind]}")
    lines.append(f"evidence ({len(explanation.evidence)} of {explanation.evidence_total} qualifying objects):")
    for item in explanation.evidence:
        a = by_id.get(item["object_id"])
        detector = corpus.crops.by_id[item["object_id"]].detector_class if item["object_id"] in corpus.crops.by_id else "?"
        extra = f", score={a.top_score:.4f}" if a is not None else ""
        o_parts = f"O={item['o_combined']}"
        if a is not None:
            o_parts += f" (o_tsne={a.o_tsne}, o_if={a.o_if})"
        lines.append(
            f"  - {item['object_id']}: top_concept={item['top_concept']}{extra}, "
            f"{o_parts}, R={item['rare_flag']}, detector_class={detector}"
        )
    return "\n".join(lines) + "\n"
