"""Command-line pipeline driver.

Subcommands: validate, mine, select, plot, explain. Exit codes are a stable
contract: 0 success, 1 domain violation (corpus/stage errors), 2 usage or
config errors. RAREMINE_THREADS caps the worker count used for tree fitting;
results never depend on it.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import tables
from .concepts import concept_similarities, load_vocabulary
from .corpus import CorpusError, validate_corpus
from .pipeline import (
    ConfigError,
    RunConfig,
    load_corpus_from_config,
    load_run_config,
    mine_to_disk,
    select_to_disk,
)
from .report import BarChartSpec, ScatterSpec, explain_scene, render_concept_bars, render_scatter
from .selection import KINDS, SelectionManifest, StrategySpec
from .tsne import Layout2D

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_CONFIG = 2


def _thread_count() -> int:
    raw = os.environ.get("RAREMINE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = load_run_config(args.config, seed_override=args.seed)
    if args.out is not None:
        config.out_dir = Path(args.out)
    return config


def cmd_validate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    bundle = load_corpus_from_config(config)
    load_vocabulary(config.vocabulary_path)
    report = validate_corpus(bundle)
    if report.valid:
        print(f"corpus valid: {len(bundle.crops)} objects, {len(bundle.scenes)} scenes")
        return EXIT_OK
    for violation in report.violations:
        print(f"violation: {violation}")
    print(f"{len(report.violations)} violation(s) found")
    return EXIT_DOMAIN


def cmd_mine(args: argparse.Namespace) -> int:
    config = _load_config(args)
    result = mine_to_disk(config, use_cache=not args.no_cache, n_threads=_thread_count())
    flagged = int((result.combined.o_combined > 0).sum())
    print(f"mined {len(result.object_ids)} objects -> {config.out_dir}")
    print(f"outliers: {flagged} flagged (o_if={int(result.combined.o_if.sum())}, "
          f"o_tsne={int(result.combined.o_tsne.sum())})")
    rare = sum(a.rare_flag for a in result.assessments)
    print(f"rare objects (R=1): {rare}")
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    config = _load_config(args)
    strategy = config.strategy
    if args.strategy is not None:
        import dataclasses

        strategy = dataclasses.replace(strategy, kind=args.strategy)
    manifest = select_to_disk(config, strategy)
    counts = manifest.counts
    print(f"manifest -> {config.out_dir / 'manifest.json'}")
    print(
        f"selected {counts['selected_scenes']}/{counts['total_scenes']} scenes "
        f"(mined {counts['mined_scenes']} from pool of {counts['mined_pool']}, "
        f"random {counts['random_scenes']})"
    )
    return EXIT_OK


def _load_manifest(config: RunConfig) -> SelectionManifest:
    import json

    path = config.out_dir / "manifest.json"
    if not path.exists():
        raise CorpusError("manifest.json not found; run the select command first")
    doc = json.loads(path.read_text(encoding="utf-8"))
    strategy = StrategySpec(
        kind=doc["strategy"]["kind"],
        random_fraction=doc["strategy"]["random_fraction"],
        mined_fraction=doc["strategy"]["mined_fraction"],
        target_concepts=frozenset(doc["strategy"]["target_concepts"]),
        seed=doc["seed"],
    )
    from .selection import SceneExplanation

    return SelectionManifest(
        strategy=strategy,
        selected_scenes=list(doc["scenes"]),
        explanations=[
            SceneExplanation(
                scene_id=e["scene_id"],
                reason=e["reason"],
                evidence=list(e["evidence"]),
                evidence_total=e["evidence_total"],
            )
            for e in doc["explanations"]
        ],
        counts=dict(doc["counts"]),
        warnings_=list(doc.get("warnings", [])),
    )


def cmd_plot(args: argparse.Namespace) -> int:
    config = _load_config(args)
    layout_path = config.out_dir / "tsne_layout.csv"
    flags_path = config.out_dir / "outlier_flags.csv"
    assessments_path = config.out_dir / "assessments.csv"
    for p in (layout_path, flags_path, assessments_path):
        if not p.exists():
            raise CorpusError(f"missing stage output {p.name}; run the mine command first")

    if args.object is not None:
        bundle = load_corpus_from_config(config)
        vocab = load_vocabulary(config.vocabulary_path)
        if args.object not in bundle.image_embeddings.row_index:
            raise CorpusError(f"unknown object {args.object!r}")
        caption_emb = None
        if bundle.captions and args.object in bundle.captions and bundle.caption_embeddings is not None:
            row = bundle.captions[args.object].caption_embedding_row
            if row is not None:
                caption_emb = bundle.caption_embeddings.data[row]
        ranked = concept_similarities(
            bundle.image_embeddings.row(args.object), caption_emb, vocab, config.weights
        )
        svg = render_concept_bars(BarChartSpec(ranked=ranked))
        out = config.out_dir / f"concepts_{args.object}.svg"
        out.write_text(svg, encoding="utf-8")
        print(f"wrote {out}")
        return EXIT_OK

    layout: Layout2D = tables.read_layout_table(layout_path)
    if args.color == "category":
        assessments = tables.read_assessments(flags_path, assessments_path)
        values = [a.category for a in assessments]
    else:
        flags = tables.read_flag_table(flags_path)
        values = [int(flags[oid][args.color]) for oid in layout.row_ids]
    svg = render_scatter(ScatterSpec(layout=layout, color_key=args.color, values=values))
    out = config.out_dir / f"scatter_{args.color}.svg"
    out.write_text(svg, encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    config = _load_config(args)
    flags_path = config.out_dir / "outlier_flags.csv"
    assessments_path = config.out_dir / "assessments.csv"
    if not flags_path.exists() or not assessments_path.exists():
        raise CorpusError("missing stage outputs; run the mine command first")
    bundle = load_corpus_from_config(config)
    manifest = _load_manifest(config)
    assessments = tables.read_assessments(flags_path, assessments_path)
    try:
        report = explain_scene(manifest, bundle, assessments, args.scene)
    except KeyError as exc:
        raise CorpusError(str(exc.args[0])) from exc
    print(report, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="raremine", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the global seed")
        p.add_argument("--out", default=None, help="override the output directory")

    p = sub.add_parser("validate", help="validate corpus and vocabulary alignment")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("mine", help="run iforest -> tsne -> knn -> combine -> assess")
    common(p)
    p.add_argument("--no-cache", action="store_true", help="ignore cached stage outputs")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("select", help="build the scene-selection manifest")
    common(p)
    p.add_argument("--strategy", choices=KINDS, default=None, help="override the strategy kind")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("plot", help="render SVG scatter or concept bars")
    common(p)
    p.add_argument("--color", choices=("category", "o_if", "o_tsne", "o_combined"),
                   default="o_combined", help="scatter color key")
    p.add_argument("--object", default=None, help="render concept bars for this object instead")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("explain", help="explain why a scene was selected")
    common(p)
    p.add_argument("--scene", required=True, help="scene id from the manifest")
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusError, tables.TableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
