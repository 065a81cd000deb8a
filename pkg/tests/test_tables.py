from __future__ import annotations

import numpy as np
import pytest

from raremine.outliers import combine_outliers
from raremine.tables import (
    TableError,
    read_assessments,
    read_flag_table,
    read_layout_table,
    read_score_table,
    write_assessment_table,
    write_flag_table,
    write_layout_table,
    write_score_table,
)
from raremine.tsne import Layout2D

from test_selection import assessment


class TestScoreTable:
    def test_roundtrip_exact_floats(self, tmp_path):
        rng = np.random.default_rng(0)
        ids = [f"o{i}" for i in range(20)]
        scores = rng.uniform(size=20)
        flags = rng.integers(0, 2, size=20)
        path = tmp_path / "scores.csv"
        write_score_table(path, ids, scores, flags)
        rid, rscores, rflags = read_score_table(path)
        assert rid == ids
        np.testing.assert_array_equal(rscores, scores)
        np.testing.assert_array_equal(rflags, flags)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("object_id,value\a,b\n")
        with pytest.raises(TableError, match="header"):
            read_score_table(path)


class TestLayoutTable:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        layout = Layout2D(Y=rng.normal(size=(15, 2)), row_ids=[f"x{i}" for i in range(15)])
        path = tmp_path / "layout.csv"
        write_layout_table(path, layout)
        loaded = read_layout_table(path)
        assert loaded.row_ids == layout.row_ids
        np.testing.assert_array_equal(loaded.Y, layout.Y)

    def test_write_stable_bytes(self, tmp_path):
        layout = Layout2D(Y=np.array([[0.1, -2.5], [3.25, 0.0]]), row_ids=["a", "b"])
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_layout_table(p1, layout)
        write_layout_table(p2, read_layout_table(p1))
        assert p1.read_bytes() == p2.read_bytes()


class TestFlagAndAssessmentTables:
    def test_roundtrip_through_assessments(self, tmp_path):
        rng = np.random.default_rng(2)
        items = [
            assessment(f"o{i}", top="bicycle" if i % 3 == 0 else "car",
                       o_combined=int(rng.integers(0, 4)), rare_flag=int(rng.integers(0, 2)))
            for i in range(12)
        ]
        ids = [a.object_id for a in items]
        d_knn = rng.uniform(size=12)
        if_scores = rng.uniform(size=12)
        combined = combine_outliers(
            np.array([a.o_tsne for a in items]), np.array([a.o_if for a in items])
        )
        flag_path = tmp_path / "flags.csv"
        assess_path = tmp_path / "assessments.csv"
        write_flag_table(flag_path, ids, d_knn, if_scores, combined)
        write_assessment_table(assess_path, items)

        flags = read_flag_table(flag_path)
        assert list(flags) == ids
        np.testing.assert_array_equal([flags[o]["d_knn"] for o in ids], d_knn)

        rebuilt = read_assessments(flag_path, assess_path)
        for orig, back in zip(items, rebuilt):
            assert back.object_id == orig.object_id
            assert back.top_concept == orig.top_concept
            assert back.top_score == orig.top_score
            assert back.o_combined == orig.o_combined
            assert back.rare_flag == orig.rare_flag

    def test_missing_flag_row_rejected(self, tmp_path):
        items = [assessment("o1"), assessment("o2")]
        flag_path = tmp_path / "flags.csv"
        assess_path = tmp_path / "assessments.csv"
        combined = combine_outliers(np.array([0]), np.array([0]))
        write_flag_table(flag_path, ["o1"], np.array([1.0]), np.array([0.5]), combined)
        write_assessment_table(assess_path, items)
        with pytest.raises(TableError, match="o2"):
            read_assessments(flag_path, assess_path)
