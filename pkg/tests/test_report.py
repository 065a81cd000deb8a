from __future__ import annotations

import re

import numpy as np
import pytest

from raremine.report import (
    DEFAULT_PALETTE,
    BarChartSpec,
    ScatterSpec,
    explain_scene,
    render_concept_bars,
    render_scatter,
)
from raremine.selection import StrategySpec, build_manifest
from raremine.tsne import Layout2D

from conftest import make_bundle
from test_selection import assessment, ten_scene_fixture


def layout_of(points: list[tuple[float, float]]) -> Layout2D:
    return Layout2D(Y=np.asarray(points, dtype=float), row_ids=[f"o{i}" for i in range(len(points))])


class TestRenderScatter:
    def test_flag_colors_and_counts(self):
        layout = layout_of([(0, 0), (1, 1), (2, 0)])
        svg = render_scatter(ScatterSpec(layout=layout, color_key="o_if", values=[1, 0, 0]))
        assert svg.count(f'fill="{DEFAULT_PALETTE[1]}"') == 1  # flagged, red slot
        assert svg.count(f'fill="{DEFAULT_PALETTE[0]}"') == 2  # inliers, blue slot
        assert svg.count("<circle") == 3

    def test_byte_identical(self):
        layout = layout_of([(0.1, 0.7), (2.3, -1.2), (5.5, 0.0)])
        spec = lambda: ScatterSpec(layout=layout, color_key="o_combined", values=[0, 3, 1])
        assert render_scatter(spec()) == render_scatter(spec())

    def test_marker_count_matches_rows(self):
        rng = np.random.default_rng(0)
        layout = Layout2D(Y=rng.normal(size=(40, 2)), row_ids=[f"o{i}" for i in range(40)])
        svg = render_scatter(
            ScatterSpec(layout=layout, color_key="o_tsne", values=[i % 2 for i in range(40)])
        )
        assert svg.count("<circle") == 40

    def test_coordinates_within_margin(self):
        rng = np.random.default_rng(1)
        layout = Layout2D(Y=rng.normal(size=(25, 2)) * 10, row_ids=[f"o{i}" for i in range(25)])
        spec = ScatterSpec(layout=layout, color_key="o_if", values=[0] * 25, width=640, height=480)
        svg = render_scatter(spec)
        xs = [float(m) for m in re.findall(r'cx="([-\d.]+)"', svg)]
        ys = [float(m) for m in re.findall(r'cy="([-\d.]+)"', svg)]
        assert min(xs) >= 0.05 * 640 - 1e-6 and max(xs) <= 0.95 * 640 + 1e-6
        assert min(ys) >= 0.05 * 480 - 1e-6 and max(ys) <= 0.95 * 480 + 1e-6

    def test_outliers_render_after_inliers(self):
        layout = layout_of([(0, 0), (1, 1), (2, 2)])
        svg = render_scatter(ScatterSpec(layout=layout, color_key="o_if", values=[1, 0, 0]))
        first_red = svg.index(DEFAULT_PALETTE[1])
        last_blue = svg.rindex(DEFAULT_PALETTE[0])
        assert first_red > last_blue

    def test_category_key_uses_sorted_categories(self):
        layout = layout_of([(0, 0), (1, 1)])
        svg = render_scatter(
            ScatterSpec(layout=layout, color_key="category", values=["Target", "Common"])
        )
        # Common sorts first -> slot 0; Target -> slot 1
        assert f'fill="{DEFAULT_PALETTE[0]}"' in svg and f'fill="{DEFAULT_PALETTE[1]}"' in svg

    def test_empty_layout_rejected(self):
        layout = Layout2D(Y=np.zeros((0, 2)), row_ids=[])
        with pytest.raises(ValueError):
            render_scatter(ScatterSpec(layout=layout, color_key="o_if", values=[]))

    def test_palette_too_small_rejected(self):
        layout = layout_of([(0, 0)])
        with pytest.raises(ValueError, match="palette"):
            render_scatter(
                ScatterSpec(layout=layout, color_key="o_combined", values=[3], palette=("#111",))
            )

    def test_degenerate_extent_centered(self):
        layout = layout_of([(1.0, 2.0), (1.0, 2.0), (1.0, 2.0)])
        svg = render_scatter(ScatterSpec(layout=layout, color_key="o_if", values=[0, 0, 0]))
        assert 'cx="320.0000"' in svg and 'cy="240.0000"' in svg


class TestRenderConceptBars:
    def test_widths_proportional(self):
        svg = render_concept_bars(BarChartSpec(ranked=[("alpha", 1.0), ("beta", 0.5)]))
        widths = [float(w) for w in re.findall(r'rect x="170" y="\d+" width="([\d.]+)"', svg)]
        assert len(widths) == 2
        assert widths[0] == pytest.approx(2 * widths[1])

    def test_single_full_width_bar(self):
        svg = render_concept_bars(BarChartSpec(ranked=[("only", 1.0)], width=480))
        widths = [float(w) for w in re.findall(r'width="([\d.]+)" height="22"', svg)]
        assert widths == [480 - 170 - 60]

    def test_negative_score_zero_width_with_annotation(self):
        svg = render_concept_bars(BarChartSpec(ranked=[("neg", -0.4)]))
        assert 'width="0.0000"' in svg
        assert "-0.4000" in svg

    def test_descending_order_and_cap(self):
        ranked = [(f"c{i}", i / 20) for i in range(15)]
        svg = render_concept_bars(BarChartSpec(ranked=ranked, top_m=10))
        names = re.findall(r'font-size="12">([^<]+)</text>', svg)
        labels = [n for n in names if n.startswith("c")]
        assert len(labels) == 10
        assert labels[0] == "c14"

    def test_labels_escaped(self):
        svg = render_concept_bars(BarChartSpec(ranked=[("a<b&c", 0.5)]))
        assert "a&lt;b&amp;c" in svg
        assert "a<b&c" not in svg

    def test_empty_ranking_rejected(self):
        with pytest.raises(ValueError):
            BarChartSpec(ranked=[])


class TestExplainScene:
    def manifest_fixture(self):
        bundle, assessments = ten_scene_fixture()
        spec = StrategySpec(
            kind="random_target", random_fraction=0.1, mined_fraction=0.1,
            target_concepts=frozenset({"bicycle"}), seed=4,
        )
        return bundle, assessments, build_manifest(bundle, assessments, spec)

    def test_target_hit_cites_object_and_concept(self):
        bundle, assessments, manifest = self.manifest_fixture()
        report = explain_scene(manifest, bundle, assessments, "s0")
        assert "reason: target_hit" in report
        assert "o0" in report and "bicycle" in report
        assert "R=1" in report

    def test_random_scene_has_no_evidence_section(self):
        bundle, assessments, manifest = self.manifest_fixture()
        random_scene = next(e.scene_id for e in manifest.explanations if e.reason == "random")
        report = explain_scene(manifest, bundle, assessments, random_scene)
        assert "reason: random" in report
        assert "evidence" not in report

    def test_unknown_scene_rejected(self):
        bundle, assessments, manifest = self.manifest_fixture()
        with pytest.raises(KeyError):
            explain_scene(manifest, bundle, assessments, "nope")

    def test_every_manifest_scene_explainable(self):
        bundle, assessments, manifest = self.manifest_fixture()
        for sid in manifest.selected_scenes:
            assert explain_scene(manifest, bundle, assessments, sid)
