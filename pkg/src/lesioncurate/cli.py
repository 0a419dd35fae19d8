"""Command-line front end.

Exit codes: 0 success, 2 input/parse error, 3 domain error (segmentation or
degenerate data), 4 internal invariant violation. Machine-readable results
go to stdout; diagnostics, the resolved config and its fingerprint go to
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .diversity import image_feature
from .embeddings import read_embeddings
from .errors import CurationError, DomainError, InputError
from .formats import emit_manifest, read_scores, write_scores
from .image import load_image, save_png
from .metrics import fid_between_sets, spatial_stats
from .pipeline import (
    COHORTS,
    METRIC_MODES,
    SEED_MODES,
    PipelineConfig,
    config_fingerprint,
    curate,
    ingest_dataset,
    list_images,
    load_candidates,
    load_cohorts,
    pick_seeds,
    score_candidates,
    select_candidates,
    stratified_holdout,
)
from .segmentation import SegmentationConfig, segment_lesion_detailed

log = logging.getLogger("lesioncurate")

EXIT_OK, EXIT_INPUT, EXIT_DOMAIN, EXIT_INTERNAL = 0, 2, 3, 4

_SEG_FLAGS = {
    "close_radius": ("--close-radius", int, "closing element radius before erosion"),
    "erode_radius": ("--erode-radius", int, "erosion element radius"),
    "element_shape": ("--element-shape", str, "structuring element shape: square or disk"),
    "interp_factor": ("--interp-factor", int, "down/up bilinear smoothing factor"),
    "channel": ("--channel", str, "channel thresholded by Otsu: R, G or B"),
    "polarity": ("--polarity", str, "lesion polarity: darker or brighter"),
    "mask_close_radius": ("--mask-close-radius", int, "radius of the final mask closing"),
}


class InvariantViolation(AssertionError):
    pass


# ---------------------------------------------------------------- config


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"config {path} must hold a JSON object")
    return data


def resolve_config(args) -> PipelineConfig:
    """Built-in defaults, overlaid by ``--config`` file, overlaid by flags."""
    merged = PipelineConfig().to_dict()
    file_cfg = _load_config_file(getattr(args, "config", None))
    for key, val in file_cfg.items():
        if isinstance(val, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **val}
        else:
            merged[key] = val
    seg = merged["segmentation"]
    for key in _SEG_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            seg[key] = v
    flag_map = {
        "w1": ("weights", "w1"),
        "w2": ("weights", "w2"),
    }
    for flag, (outer, inner) in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            merged[outer][inner] = v
    for flag, key in (
        ("mode", "metric_mode"),
        ("k", "per_seed_select"),
        ("seed", "rng_seed"),
        ("cohort", "cohort"),
        ("bc_form", "bc_form"),
        ("seed_count", "seed_count"),
    ):
        v = getattr(args, flag, None)
        if v is not None:
            merged[key] = v
    if getattr(args, "no_fid", False):
        merged["compute_fid"] = False
    try:
        return PipelineConfig.from_dict(merged)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def echo_config(config: dict) -> str:
    fp = config_fingerprint(config)
    print(f"config-fingerprint {fp}", file=sys.stderr)
    print("config " + json.dumps(config, sort_keys=True), file=sys.stderr)
    return fp


# ---------------------------------------------------------------- parser


def _add_seg_flags(p):
    g = p.add_argument_group("segmentation")
    for dest, (flag, typ, help_) in _SEG_FLAGS.items():
        default = getattr(SegmentationConfig(), dest)
        g.add_argument(flag, dest=dest, type=typ, default=None, help=f"{help_} (default {default})")


def _add_weight_flags(p):
    p.add_argument("--w1", type=float, default=None, help="content weight in [0, 1] (default 0)")
    p.add_argument("--w2", type=float, default=None, help="spatial weight in [0, 1] (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesioncurate",
        description="Curate one-shot GAN augmentations for long-tailed image datasets.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log info messages to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="per-class image counts, largest first")
    p.add_argument("--metadata", required=True, help="metadata CSV with image_id and dx columns")
    p.add_argument("--images", default=None, help="image directory; rows without a file are dropped")
    p.add_argument("--figure", default=None, help="write a bar chart PNG here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("seeds", help="choose diverse (or random) seed images from one class")
    p.add_argument("--metadata", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--class", dest="class_label", required=True, help="class label, e.g. df")
    p.add_argument("--k", type=int, default=10, help="number of seeds (default 10)")
    p.add_argument("--mode", choices=SEED_MODES, default="diverse-greedy", help="default diverse-greedy")
    p.add_argument("--embeddings", default=None, help="embedding CSV replacing built-in features")
    p.add_argument("--feature-side", type=int, default=32, help="built-in feature resolution (default 32)")
    p.add_argument("--holdout", type=int, default=0, help="test images held out per class first (default 0)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--out", default=None, help="also write the ids to this file")
    p.set_defaults(func=cmd_seeds)

    p = sub.add_parser("score", help="score generated candidates against one seed")
    p.add_argument("--seed-image", required=True)
    p.add_argument("--seed-id", default=None, help="defaults to the seed file stem")
    p.add_argument("--candidates-dir", required=True)
    p.add_argument("--out", required=True, help="score CSV path")
    _add_weight_flags(p)
    p.add_argument("--bc-form", choices=("standard", "paper"), default=None, help="default standard")
    p.add_argument("--no-fid", action="store_true", help="skip the patch FID column")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--figure", default=None, help="write a score scatter PNG here")
    _add_seg_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="build a selection manifest from a score CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--mode", choices=METRIC_MODES, default=None, help="default content-space")
    p.add_argument("--k", type=int, default=None, help="selections per seed (default 10)")
    p.add_argument("--out", required=True, help="manifest JSON path")
    p.add_argument("--seed", type=int, default=None, help="RNG seed for random mode (default 0)")
    _add_weight_flags(p)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--figure", default=None, help="write a score scatter PNG with selections")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("fid", help="Frechet distance between two embedding sets")
    p.add_argument("--real-embeddings", default=None)
    p.add_argument("--gen-embeddings", default=None)
    p.add_argument("--real-dir", default=None)
    p.add_argument("--gen-dir", default=None)
    p.add_argument("--feature-side", type=int, default=8, help="built-in feature resolution (default 8)")
    p.set_defaults(func=cmd_fid)

    p = sub.add_parser("segment", help="segment one image and print its spatial statistics")
    p.add_argument("--image", required=True)
    p.add_argument("--out-prefix", required=True, help="writes <prefix>.mask.png and <prefix>.roi.png")
    p.add_argument("--debug", action="store_true", help="also write <prefix>.denoised.png")
    p.add_argument("--figure", default=None, help="write a four-panel PNG here")
    p.add_argument("--config", default=None, help="JSON config file")
    _add_seg_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("run", help="score and select every seed cohort in one go")
    p.add_argument("--seeds-dir", required=True, help="one image per seed")
    p.add_argument("--candidates-root", required=True, help="holds <seed_id>/ candidate folders")
    p.add_argument("--out-scores", required=True)
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--mode", choices=METRIC_MODES, default=None, help="default content-space")
    p.add_argument("--k", type=int, default=None, help="selections per seed (default 10)")
    _add_weight_flags(p)
    p.add_argument("--cohort", choices=COHORTS, default=None, help="normalization cohort (default per-seed)")
    p.add_argument("--bc-form", choices=("standard", "paper"), default=None)
    p.add_argument("--no-fid", action="store_true")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--figure", default=None, help="write a score scatter PNG here")
    _add_seg_flags(p)
    p.set_defaults(func=cmd_run)
    return parser


# ---------------------------------------------------------------- commands


def _check_rows(rows) -> None:
    ranks: dict[str, set] = {}
    for r in rows:
        if r.skipped:
            if any(v is not None for v in (r.c_raw, r.s_raw, r.combined, r.rank)):
                raise InvariantViolation(f"skipped row {r.seed_id}/{r.candidate_id} carries scores")
            continue
        for v in (r.c_norm, r.s_norm, r.combined):
            if v is not None and not 0.0 <= v <= 1.0:
                raise InvariantViolation(f"normalized score {v} outside [0, 1]")
        seen = ranks.setdefault(r.seed_id, set())
        if r.rank in seen:
            raise InvariantViolation(f"duplicate rank {r.rank} for seed {r.seed_id}")
        seen.add(r.rank)


def _check_manifest(manifest, rows) -> None:
    skipped = {(r.seed_id, r.candidate_id) for r in rows if r.skipped}
    for seed, ids in manifest.selections:
        if len(ids) != manifest.per_seed_select or len(set(ids)) != len(ids):
            raise InvariantViolation(f"seed {seed}: bad selection {ids}")
        if any((seed, c) in skipped for c in ids):
            raise InvariantViolation(f"seed {seed}: skipped candidate selected")


def _report_skips(rows) -> None:
    for r in rows:
        if r.skipped:
            print(f"skipped {r.seed_id}/{r.candidate_id}: {r.skipped_reason}", file=sys.stderr)


def cmd_stats(args) -> int:
    echo_config({"command": "stats", "metadata": str(args.metadata), "images": args.images})
    index = ingest_dataset(args.metadata, args.images)
    if index.missing:
        print(f"excluded {len(index.missing)} rows without image files", file=sys.stderr)
    for label, n in index.class_counts.items():
        print(f"{label}\t{n}")
    if args.figure:
        from .report import plot_class_distribution

        plot_class_distribution(index.class_counts, args.figure)
    return EXIT_OK


def cmd_seeds(args) -> int:
    echo_config(
        {
            "command": "seeds",
            "class": args.class_label,
            "k": args.k,
            "mode": args.mode,
            "embeddings": args.embeddings,
            "feature_side": args.feature_side,
            "holdout": args.holdout,
            "seed": args.seed,
        }
    )
    index = ingest_dataset(args.metadata, args.images)
    train = index
    if args.holdout:
        train, _ = stratified_holdout(index, args.holdout, args.seed)
    emb = None
    if args.embeddings:
        names, mat = read_embeddings(args.embeddings)
        emb = dict(zip(names, mat))
    ids = pick_seeds(train, args.class_label, args.k, args.mode, args.seed, emb, args.feature_side)
    text = "".join(f"{i}\n" for i in ids)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = resolve_config(args)
    config = cfg.to_dict()
    echo_config(config)
    seed_path = Path(args.seed_image)
    seed_id = args.seed_id or seed_path.stem
    rows = score_candidates(
        seed_id, load_image(seed_path), load_candidates(args.candidates_dir), cfg, args.jobs
    )
    _check_rows(rows)
    write_scores(rows, args.out)
    _report_skips(rows)
    if args.figure:
        from .report import plot_scores

        plot_scores(rows, args.figure)
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = resolve_config(args)
    rows = read_scores(args.scores)
    manifest = select_candidates(rows, cfg.metric_mode, cfg.per_seed_select, cfg.rng_seed, cfg)
    echo_config(manifest.config)
    _check_manifest(manifest, rows)
    emit_manifest(manifest, args.out)
    for seed, ids in manifest.selections:
        for c in ids:
            print(f"{seed}\t{c}")
    if args.figure:
        from .report import plot_scores

        plot_scores(rows, args.figure, manifest.selected_pairs())
    return EXIT_OK


def _dir_features(directory, side) -> np.ndarray:
    paths = list_images(directory)
    if not paths:
        raise InputError(f"no images in {directory}")
    return np.asarray([image_feature(load_image(p), side) for p in paths])


def cmd_fid(args) -> int:
    by_file = args.real_embeddings is not None or args.gen_embeddings is not None
    by_dir = args.real_dir is not None or args.gen_dir is not None
    if by_file == by_dir:
        raise InputError("give either --real-embeddings/--gen-embeddings or --real-dir/--gen-dir")
    echo_config(
        {
            "command": "fid",
            "real": args.real_embeddings or args.real_dir,
            "gen": args.gen_embeddings or args.gen_dir,
            "feature_side": None if by_file else args.feature_side,
        }
    )
    if by_file:
        if args.real_embeddings is None or args.gen_embeddings is None:
            raise InputError("both --real-embeddings and --gen-embeddings are required")
        real = read_embeddings(args.real_embeddings)[1]
        gen = read_embeddings(args.gen_embeddings)[1]
    else:
        if args.real_dir is None or args.gen_dir is None:
            raise InputError("both --real-dir and --gen-dir are required")
        real = _dir_features(args.real_dir, args.feature_side)
        gen = _dir_features(args.gen_dir, args.feature_side)
    if real.shape[1] != gen.shape[1]:
        raise InputError(f"embedding widths differ: {real.shape[1]} vs {gen.shape[1]}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        value = fid_between_sets(real, gen)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"{value:.6f}")
    return EXIT_OK


def cmd_segment(args) -> int:
    cfg = resolve_config(args)
    echo_config({"command": "segment", "segmentation": cfg.segmentation.to_dict()})
    img = load_image(args.image)
    seg = segment_lesion_detailed(img, cfg.segmentation)
    stats = spatial_stats(seg.roi, seg.plane)
    prefix = args.out_prefix
    save_png(f"{prefix}.mask.png", seg.closed_mask)
    save_png(f"{prefix}.roi.png", seg.roi.mask)
    if args.debug:
        save_png(f"{prefix}.denoised.png", seg.denoised)
    if args.figure:
        from .report import plot_segmentation

        plot_segmentation(img, seg, stats, args.figure)
    print(f"{stats.x_centroid!r} {stats.y_centroid!r} {stats.centroid_scalar!r} {stats.sigma!r}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    echo_config(cfg.to_dict())
    cohorts = load_cohorts(args.seeds_dir, args.candidates_root)
    rows, manifest = curate(cohorts, cfg, args.jobs)
    _check_rows(rows)
    _check_manifest(manifest, rows)
    for seed_id, _, cands in cohorts:
        n_skip = sum(1 for r in rows if r.seed_id == seed_id and r.skipped)
        print(f"cohort {seed_id}: {len(cands)} candidates, {n_skip} skipped", file=sys.stderr)
    write_scores(rows, args.out_scores)
    emit_manifest(manifest, args.out_manifest)
    _report_skips(rows)
    if args.figure:
        from .report import plot_scores

        plot_scores(rows, args.figure, manifest.selected_pairs())
    print(f"selected\t{manifest.total}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except CurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
