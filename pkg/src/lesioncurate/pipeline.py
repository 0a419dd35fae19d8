"""End-to-end curation: ingest, hold out, pick seeds, score and select candidates."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .diversity import (
    image_feature,
    pairwise_distances,
    select_diverse_exact,
    select_diverse_greedy,
)
from .embeddings import PATCH_SIZE, patch_embeddings
from .errors import (
    ClassTooSmall,
    CohortTooSmall,
    CsvParseError,
    CurationError,
    DimensionMismatch,
    DomainError,
    ImageIOError,
    InputError,
    NoRecords,
    SeedSegmentationFailed,
)
from .image import RasterImage, load_image
from .metrics import (
    BC_FORMS,
    FrechetReference,
    Weights,
    content_distance,
    content_space_score,
    gaussian_stats,
    min_max_normalize,
    spatial_score,
    spatial_stats,
)
from .segmentation import SegmentationConfig, segment_lesion_detailed

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")
METRIC_MODES = ("content-space", "fid-bottom", "fid-top", "random")
SEED_MODES = ("diverse-exact", "diverse-greedy", "random")
COHORTS = ("per-seed", "global")
FID_ESTIMATOR = f"patch{PATCH_SIZE}"


# ---------------------------------------------------------------- dataset


@dataclass(frozen=True)
class Record:
    image_id: str
    path: Optional[Path]
    label: str


@dataclass(frozen=True)
class DatasetIndex:
    records: tuple[Record, ...]
    missing: tuple[str, ...] = ()

    def __post_init__(self):
        ids = [r.image_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise CsvParseError("image ids must be unique")

    @property
    def class_counts(self) -> dict[str, int]:
        """Counts per label, largest class first (ties alphabetical)."""
        counts = Counter(r.label for r in self.records)
        return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))

    def members(self, label: str) -> list[Record]:
        return sorted((r for r in self.records if r.label == label), key=lambda r: r.image_id)

    def __len__(self):
        return len(self.records)


def resolve_image(image_dir: Path, image_id: str) -> Optional[Path]:
    for suffix in (".jpg", ".png"):
        p = image_dir / f"{image_id}{suffix}"
        if p.is_file():
            return p
    return None


def ingest_dataset(metadata_csv, image_dir=None) -> DatasetIndex:
    """Read a HAM10000-style metadata CSV (``image_id`` and ``dx`` columns).

    With ``image_dir`` given, rows whose ``<image_id>.jpg``/``.png`` is absent
    are logged and dropped. Without it the index is metadata-only and
    ``Record.path`` is ``None``.
    """
    metadata_csv = Path(metadata_csv)
    try:
        with metadata_csv.open(newline="", encoding="utf-8-sig") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames
            if fields is None:
                raise NoRecords(f"{metadata_csv}: empty metadata file")
            missing_cols = {"image_id", "dx"} - {f.strip() for f in fields}
            if missing_cols:
                raise CsvParseError(f"{metadata_csv}: missing column(s) {sorted(missing_cols)}")
            rows = [{k.strip(): (v or "").strip() for k, v in row.items() if k} for row in reader]
    except (OSError, UnicodeDecodeError) as exc:
        raise ImageIOError(f"cannot read {metadata_csv}: {exc}") from exc
    except csv.Error as exc:
        raise CsvParseError(f"{metadata_csv}: {exc}") from exc

    image_dir = Path(image_dir) if image_dir is not None else None
    records, missing = [], []
    for lineno, row in enumerate(rows, start=2):
        image_id, label = row.get("image_id", ""), row.get("dx", "")
        if not image_id or not label:
            raise CsvParseError(f"{metadata_csv}:{lineno}: empty image_id or dx")
        path = None
        if image_dir is not None:
            path = resolve_image(image_dir, image_id)
            if path is None:
                log.warning("no image file for %s in %s; excluded", image_id, image_dir)
                missing.append(image_id)
                continue
        records.append(Record(image_id, path, label))
    if not records:
        raise NoRecords(f"{metadata_csv}: no usable records")
    return DatasetIndex(tuple(records), tuple(missing))


def stratified_holdout(index: DatasetIndex, per_class: int, rng_seed: int = 0):
    """Draw exactly ``per_class`` test records from every class.

    Returns ``(train, test)``; train keeps the original record order.
    """
    if per_class < 0:
        raise ValueError("per_class must be >= 0")
    counts = index.class_counts
    small = {lab: n for lab, n in counts.items() if n < per_class}
    if small:
        raise ClassTooSmall(f"classes smaller than {per_class}: {small}")
    rng = np.random.default_rng(rng_seed)
    test_ids = set()
    test = []
    for label in sorted(counts):
        members = index.members(label)
        picked = np.sort(rng.choice(len(members), size=per_class, replace=False))
        for i in picked:
            test.append(members[i])
            test_ids.add(members[i].image_id)
    train = tuple(r for r in index.records if r.image_id not in test_ids)
    return DatasetIndex(train), DatasetIndex(tuple(test))


def pick_seeds(
    train: DatasetIndex,
    class_label: str,
    k: int,
    mode: str = "diverse-greedy",
    rng_seed: int = 0,
    embeddings: Optional[dict[str, np.ndarray]] = None,
    feature_side: int = 32,
) -> list[str]:
    """Choose ``k`` seed image ids from one class.

    Diverse modes maximise the disparity sum over either the supplied
    ``embeddings`` (keyed by image id or file name) or built-in downsampled
    gray features.
    """
    if mode not in SEED_MODES:
        raise ValueError(f"mode must be one of {SEED_MODES}, got {mode!r}")
    members = train.members(class_label)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(members) < k:
        raise ClassTooSmall(f"class {class_label!r} has {len(members)} members, need {k}")
    if mode == "random":
        rng = np.random.default_rng(rng_seed)
        return [members[i].image_id for i in rng.choice(len(members), size=k, replace=False)]
    if k == len(members):
        return [r.image_id for r in members]

    if embeddings is not None:
        feats = [_lookup_embedding(embeddings, r) for r in members]
    else:
        feats = []
        for r in members:
            if r.path is None:
                raise InputError(f"no image file known for {r.image_id}")
            feats.append(image_feature(load_image(r.path), feature_side))
    dist = pairwise_distances(feats)
    select = select_diverse_exact if mode == "diverse-exact" else select_diverse_greedy
    return [members[i].image_id for i in select(dist, k).indices]


def _lookup_embedding(embeddings: dict, record: Record) -> np.ndarray:
    keys = [record.image_id]
    if record.path is not None:
        keys.append(record.path.name)
    keys += [record.image_id + s for s in IMAGE_SUFFIXES]
    for key in keys:
        if key in embeddings:
            return np.asarray(embeddings[key], dtype=np.float64)
    raise InputError(f"no embedding row for {record.image_id}")


# ---------------------------------------------------------------- scoring


@dataclass(frozen=True)
class PipelineConfig:
    seed_count: int = 10
    per_seed_select: int = 10
    weights: Weights = Weights(0.0, 1.0)
    metric_mode: str = "content-space"
    segmentation: SegmentationConfig = SegmentationConfig()
    cohort: str = "per-seed"
    rng_seed: int = 0
    bc_form: str = "standard"
    compute_fid: bool = True

    def __post_init__(self):
        if self.seed_count < 1 or self.per_seed_select < 1:
            raise InputError("seed_count and per_seed_select must be >= 1")
        if self.metric_mode not in METRIC_MODES:
            raise InputError(f"metric_mode must be one of {METRIC_MODES}")
        if self.cohort not in COHORTS:
            raise InputError(f"cohort must be one of {COHORTS}")
        if self.bc_form not in BC_FORMS:
            raise InputError(f"bc_form must be one of {BC_FORMS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fid_estimator"] = FID_ESTIMATOR
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d.pop("fid_estimator", None)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        if "weights" in d and not isinstance(d["weights"], Weights):
            try:
                d["weights"] = Weights(**d["weights"])
            except TypeError as exc:
                raise InputError(f"bad weights config: {exc}") from exc
        if "segmentation" in d and not isinstance(d["segmentation"], SegmentationConfig):
            try:
                d["segmentation"] = SegmentationConfig(**d["segmentation"])
            except (TypeError, ValueError) as exc:
                raise InputError(f"bad segmentation config: {exc}") from exc
        try:
            return cls(**d)
        except TypeError as exc:
            raise InputError(str(exc)) from exc

    def fingerprint(self) -> str:
        return config_fingerprint(self.to_dict())


def config_fingerprint(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ScoreRow:
    seed_id: str
    candidate_id: str
    c_raw: Optional[float] = None
    s_raw: Optional[float] = None
    c_norm: Optional[float] = None
    s_norm: Optional[float] = None
    combined: Optional[float] = None
    fid: Optional[float] = None
    rank: Optional[int] = None
    skipped_reason: Optional[str] = None

    @property
    def skipped(self) -> bool:
        return self.skipped_reason is not None


@dataclass
class _SeedContext:
    seed_id: str
    image: RasterImage
    stats: object = None
    fid_ref: Optional[FrechetReference] = None


def _prepare_seed(seed_id: str, img: RasterImage, cfg: PipelineConfig) -> _SeedContext:
    ctx = _SeedContext(seed_id, img)
    try:
        seg = segment_lesion_detailed(img, cfg.segmentation)
        ctx.stats = spatial_stats(seg.roi, seg.plane)
    except DomainError as exc:
        if cfg.weights.w2 > 0:
            raise SeedSegmentationFailed(f"seed {seed_id} cannot be segmented: {exc}") from exc
        log.warning("seed %s cannot be segmented (%s); spatial scores omitted", seed_id, exc)
    if cfg.compute_fid:
        try:
            ctx.fid_ref = FrechetReference(gaussian_stats(patch_embeddings(img)))
        except DomainError as exc:
            log.warning("seed %s has no patch FID reference: %s", seed_id, exc)
    return ctx


def _raw_score(ctx: _SeedContext, cand_id: str, img: Optional[RasterImage], cfg: PipelineConfig) -> ScoreRow:
    row = ScoreRow(ctx.seed_id, cand_id)
    if img is None:
        row.skipped_reason = "decode-failed"
        return row
    row.c_raw = content_distance(ctx.image, img, cfg.bc_form)
    if ctx.stats is not None:
        try:
            if img.shape != ctx.image.shape:
                raise DimensionMismatch(f"{img.shape} differs from seed {ctx.image.shape}")
            seg = segment_lesion_detailed(img, cfg.segmentation)
            row.s_raw = spatial_score(ctx.stats, spatial_stats(seg.roi, seg.plane))
        except DomainError as exc:
            reason = "size-mismatch" if isinstance(exc, DimensionMismatch) else "segmentation-failed"
            if cfg.weights.w2 > 0:
                return ScoreRow(ctx.seed_id, cand_id, skipped_reason=reason)
            log.info("candidate %s/%s: %s (%s)", ctx.seed_id, cand_id, reason, exc)
    if ctx.fid_ref is not None:
        try:
            row.fid = ctx.fid_ref.distance(gaussian_stats(patch_embeddings(img)))
        except DomainError as exc:
            log.info("candidate %s/%s: no FID (%s)", ctx.seed_id, cand_id, exc)
    return row


def _normalize_cohort(rows: list[ScoreRow], w: Weights) -> None:
    live = [r for r in rows if not r.skipped]
    if not live:
        return
    for r, v in zip(live, min_max_normalize([r.c_raw for r in live])):
        r.c_norm = v
    spatial = [r for r in live if r.s_raw is not None]
    if spatial:
        for r, v in zip(spatial, min_max_normalize([r.s_raw for r in spatial])):
            r.s_norm = v
    raw = [content_space_score(r.c_norm, r.s_norm if r.s_norm is not None else 0.0, w) for r in live]
    for r, v in zip(live, min_max_normalize(raw)):
        r.combined = v


def _rank(rows: list[ScoreRow]) -> list[ScoreRow]:
    live = sorted((r for r in rows if not r.skipped), key=lambda r: (r.combined, r.candidate_id))
    for i, r in enumerate(live, start=1):
        r.rank = i
    dead = sorted((r for r in rows if r.skipped), key=lambda r: r.candidate_id)
    return live + dead


def normalize_and_rank(rows: list[ScoreRow], weights: Weights, cohort: str = "per-seed") -> list[ScoreRow]:
    """Fill in the normalized columns, combined score and rank of raw rows.

    Content and spatial columns are min-max normalized over the cohort (one
    seed, or every row for ``cohort="global"``), combined with ``weights`` and
    min-max normalized once more. Ranks are always per seed, ascending by
    combined score then candidate id. Rows are updated in place; the return
    value is grouped by seed in first-seen order, skipped rows last.
    """
    if cohort not in COHORTS:
        raise InputError(f"cohort must be one of {COHORTS}")
    by_seed: dict[str, list[ScoreRow]] = {}
    for row in rows:
        by_seed.setdefault(row.seed_id, []).append(row)
    if cohort == "global":
        _normalize_cohort(list(rows), weights)
    else:
        for group in by_seed.values():
            _normalize_cohort(group, weights)
    out = []
    for group in by_seed.values():
        out.extend(_rank(group))
    return out


# (candidate_id, image); image is None when the file could not be decoded
Candidate = tuple[str, Optional[RasterImage]]


def score_cohorts(
    cohorts: Sequence[tuple[str, RasterImage, Sequence[Candidate]]],
    cfg: PipelineConfig = PipelineConfig(),
    jobs: int = 1,
) -> list[ScoreRow]:
    """Score every seed's candidates and rank them within each seed.

    Rows come back grouped by seed in input order, each group sorted by rank
    with skipped candidates last. Output is independent of ``jobs``.
    """
    for seed_id, _, cands in cohorts:
        if not cands:
            raise CohortTooSmall(f"seed {seed_id} has no candidates")
        ids = [c[0] for c in cands]
        if len(set(ids)) != len(ids):
            raise InputError(f"seed {seed_id} has duplicate candidate ids")
    if len({c[0] for c in cohorts}) != len(cohorts):
        raise InputError("duplicate seed ids")

    tasks = []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        contexts = list(pool.map(lambda c: _prepare_seed(c[0], c[1], cfg), cohorts))
        for ctx, (_, _, cands) in zip(contexts, cohorts):
            tasks.extend((ctx, cid, img) for cid, img in cands)
        raw = list(pool.map(lambda t: _raw_score(t[0], t[1], t[2], cfg), tasks))

    return normalize_and_rank(raw, cfg.weights, cfg.cohort)


def score_candidates(
    seed_id: str,
    seed: RasterImage,
    candidates: Sequence[Candidate],
    cfg: PipelineConfig = PipelineConfig(),
    jobs: int = 1,
) -> list[ScoreRow]:
    return score_cohorts([(seed_id, seed, candidates)], cfg, jobs)


# ---------------------------------------------------------------- selection


SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SelectionManifest:
    config_fingerprint: str
    metric_mode: str
    weights: Weights
    per_seed_select: int
    selections: tuple[tuple[str, tuple[str, ...]], ...]
    config: dict = field(default_factory=dict)
    fid_estimator: str = FID_ESTIMATOR
    schema_version: int = SCHEMA_VERSION

    @property
    def total(self) -> int:
        return sum(len(ids) for _, ids in self.selections)

    def selected_pairs(self) -> set[tuple[str, str]]:
        return {(s, c) for s, ids in self.selections for c in ids}


def select_candidates(
    rows: Iterable[ScoreRow],
    mode: str = "content-space",
    per_seed_select: int = 10,
    rng_seed: int = 0,
    cfg: Optional[PipelineConfig] = None,
) -> SelectionManifest:
    """Pick ``per_seed_select`` candidates per seed.

    ``content-space`` and ``fid-bottom`` take the lowest scores, ``fid-top``
    the highest FID, ``random`` a seeded uniform draw. Skipped rows are never
    eligible; ties are broken by candidate id.
    """
    if mode not in METRIC_MODES:
        raise InputError(f"mode must be one of {METRIC_MODES}, got {mode!r}")
    if per_seed_select < 1:
        raise InputError("per_seed_select must be >= 1")
    cfg = replace(
        cfg or PipelineConfig(), metric_mode=mode, per_seed_select=per_seed_select, rng_seed=rng_seed
    )
    groups: dict[str, list[ScoreRow]] = {}
    for r in rows:
        groups.setdefault(r.seed_id, []).append(r)

    rng = np.random.default_rng(rng_seed)
    selections = []
    for seed_id, group in groups.items():
        live = [r for r in group if not r.skipped]
        if mode.startswith("fid"):
            live = [r for r in live if r.fid is not None]
        if len(live) < per_seed_select:
            raise CohortTooSmall(
                f"seed {seed_id}: {len(live)} eligible candidates, need {per_seed_select}"
            )
        if mode == "content-space":
            live.sort(key=lambda r: (r.combined, r.candidate_id))
            chosen = live[:per_seed_select]
        elif mode == "fid-bottom":
            live.sort(key=lambda r: (r.fid, r.candidate_id))
            chosen = live[:per_seed_select]
        elif mode == "fid-top":
            live.sort(key=lambda r: (-r.fid, r.candidate_id))
            chosen = live[:per_seed_select]
        else:
            live.sort(key=lambda r: r.candidate_id)
            picks = rng.choice(len(live), size=per_seed_select, replace=False)
            chosen = [live[i] for i in picks]
        selections.append((seed_id, tuple(r.candidate_id for r in chosen)))

    return SelectionManifest(
        config_fingerprint=cfg.fingerprint(),
        metric_mode=mode,
        weights=cfg.weights,
        per_seed_select=per_seed_select,
        selections=tuple(selections),
        config=cfg.to_dict(),
    )


def curate(
    cohorts: Sequence[tuple[str, RasterImage, Sequence[Candidate]]],
    cfg: PipelineConfig = PipelineConfig(),
    jobs: int = 1,
) -> tuple[list[ScoreRow], SelectionManifest]:
    rows = score_cohorts(cohorts, cfg, jobs)
    manifest = select_candidates(rows, cfg.metric_mode, cfg.per_seed_select, cfg.rng_seed, cfg)
    return rows, manifest


# ---------------------------------------------------------------- file helpers


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ImageIOError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def load_candidates(directory) -> list[Candidate]:
    """Decode every image in ``directory``; undecodable files map to ``None``."""
    out, seen = [], set()
    for p in list_images(directory):
        if p.stem in seen:
            raise InputError(f"{directory}: two images share the id {p.stem!r}")
        seen.add(p.stem)
        try:
            img = load_image(p)
        except InputError as exc:
            log.warning("candidate %s skipped: %s", p, exc)
            img = None
        out.append((p.stem, img))
    return out


def load_cohorts(seeds_dir, candidates_root) -> list[tuple[str, RasterImage, list[Candidate]]]:
    """Seeds are images in ``seeds_dir``; candidates of seed ``x`` live in ``candidates_root/x``."""
    candidates_root = Path(candidates_root)
    cohorts = []
    for p in list_images(seeds_dir):
        cohorts.append((p.stem, load_image(p), load_candidates(candidates_root / p.stem)))
    if not cohorts:
        raise NoRecords(f"no seed images in {seeds_dir}")
    return cohorts


__all__ = [
    "CurationError",
    "DatasetIndex",
    "PipelineConfig",
    "Record",
    "ScoreRow",
    "SelectionManifest",
    "curate",
    "ingest_dataset",
    "load_cohorts",
    "pick_seeds",
    "score_candidates",
    "score_cohorts",
    "select_candidates",
    "stratified_holdout",
]
