"""Line-delimited stage tables (CSV with fixed headers).

Column layouts are part of the external contract:
  scores:      object_id, score, flag
  layout:      object_id, y0, y1
  flags:       object_id, d_knn, o_tsne, if_score, o_if, o_combined
  assessments: object_id, top_concept, top_score, category, r_flag

Floats are written with Python's shortest round-trip repr, so read(write(x))
reproduces values exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .concepts import ObjectAssessment
from .tsne import Layout2D

SCORE_HEADER = ["object_id", "score", "flag"]
LAYOUT_HEADER = ["object_id", "y0", "y1"]
FLAG_HEADER = ["object_id", "d_knn", "o_tsne", "if_score", "o_if", "o_combined"]
ASSESSMENT_HEADER = ["object_id", "top_concept", "top_score", "category", "r_flag"]


class TableError(ValueError):
    """Malformed stage table."""


def _open_writer(path: str | Path):
    return Path(path).open("w", encoding="utf-8", newline="")


def _read_rows(path: str | Path, header: list[str]) -> list[dict[str, str]]:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise TableError(f"{Path(path).name}: empty table") from None
        if found != header:
            raise TableError(f"{Path(path).name}: expected header {header}, found {found}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise TableError(f"{Path(path).name}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append(dict(zip(header, row)))
    return rows


def write_score_table(path: str | Path, object_ids: list[str], scores: np.ndarray, flags: np.ndarray) -> None:
    with _open_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_HEADER)
        for oid, s, f in zip(object_ids, scores, flags):
            w.writerow([oid, repr(float(s)), int(f)])


def read_score_table(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    rows = _read_rows(path, SCORE_HEADER)
    ids = [r["object_id"] for r in rows]
    scores = np.array([float(r["score"]) for r in rows], dtype=np.float64)
    flags = np.array([int(r["flag"]) for r in rows], dtype=np.int64)
    return ids, scores, flags


def write_layout_table(path: str | Path, layout: Layout2D) -> None:
    with _open_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LAYOUT_HEADER)
        for oid, (y0, y1) in zip(layout.row_ids, layout.Y):
            w.writerow([oid, repr(float(y0)), repr(float(y1))])


def read_layout_table(path: str | Path) -> Layout2D:
    rows = _read_rows(path, LAYOUT_HEADER)
    ids = [r["object_id"] for r in rows]
    Y = np.array([[float(r["y0"]), float(r["y1"])] for r in rows], dtype=np.float64)
    return Layout2D(Y=Y.reshape(len(ids), 2), row_ids=ids)


def write_flag_table(
    path: str | Path,
    object_ids: list[str],
    d_knn: np.ndarray,
    if_scores: np.ndarray,
    combined,
) -> None:
    with _open_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLAG_HEADER)
        for i, oid in enumerate(object_ids):
            w.writerow(
                [
                    oid,
                    repr(float(d_knn[i])),
                    int(combined.o_tsne[i]),
                    repr(float(if_scores[i])),
                    int(combined.o_if[i]),
                    int(combined.o_combined[i]),
                ]
            )


def read_flag_table(path: str | Path) -> dict[str, dict[str, float]]:
    rows = _read_rows(path, FLAG_HEADER)
    out: dict[str, dict[str, float]] = {}
    for r in rows:
        out[r["object_id"]] = {
            "d_knn": float(r["d_knn"]),
            "o_tsne": int(r["o_tsne"]),
            "if_score": float(r["if_score"]),
            "o_if": int(r["o_if"]),
            "o_combined": int(r["o_combined"]),
        }
    return out


def write_assessment_table(path: str | Path, assessments: list[ObjectAssessment]) -> None:
    with _open_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ASSESSMENT_HEADER)
        for a in assessments:
            w.writerow([a.object_id, a.top_concept, repr(float(a.top_score)), a.category, int(a.rare_flag)])


def read_assessments(flag_path: str | Path, assessment_path: str | Path) -> list[ObjectAssessment]:
    """Rebuild per-object assessments from the flags + assessments tables.

    Parsed caption concepts are not serialized in the tables; the rebuilt
    records carry an empty parsed set, which selection and reporting never
    consult (they read the precomputed rare flag).
    """
    flags = read_flag_table(flag_path)
    rows = _read_rows(assessment_path, ASSESSMENT_HEADER)
    out = []
    for r in rows:
        oid = r["object_id"]
        if oid not in flags:
            raise TableError(f"object {oid!r} present in assessments but missing from flag table")
        f = flags[oid]
        out.append(
            ObjectAssessment(
                object_id=oid,
                if_score=f["if_score"],
                o_if=int(f["o_if"]),
                d_knn=f["d_knn"],
                o_tsne=int(f["o_tsne"]),
                o_combined=int(f["o_combined"]),
                top_concept=r["top_concept"],
                top_score=float(r["top_score"]),
                category=r["category"],
                parsed_concepts=frozenset(),
                rare_flag=int(r["r_flag"]),
            )
        )
    return out
