"""On-disk formats: the score table CSV and the selection manifest JSON.

Manifest layout (schema version 1), keys in this order::

    {
      "schema_version": 1,
      "config_fingerprint": "<sha256 hex of the resolved config>",
      "metric_mode": "content-space" | "fid-bottom" | "fid-top" | "random",
      "weights": {"w1": float, "w2": float},
      "per_seed_select": int,
      "fid_estimator": "patch16",
      "total_selected": int,
      "selections": [{"seed_id": str, "candidate_ids": [str, ...]}, ...],
      "config": {... resolved configuration ...}
    }
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .errors import CsvParseError, ImageIOError, InputError, SchemaVersionMismatch
from .metrics import Weights
from .pipeline import SCHEMA_VERSION, ScoreRow, SelectionManifest

SCORE_COLUMNS = (
    "seed_id",
    "candidate_id",
    "c_raw",
    "s_raw",
    "c_norm",
    "s_norm",
    "combined",
    "fid",
    "rank",
    "skipped_reason",
)
_FLOAT_COLUMNS = ("c_raw", "s_raw", "c_norm", "s_norm", "combined", "fid")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_scores(rows) -> str:
    lines = [",".join(SCORE_COLUMNS)]
    for r in rows:
        lines.append(",".join(_csv_field(_fmt(getattr(r, c))) for c in SCORE_COLUMNS))
    return "\n".join(lines) + "\n"


def _csv_field(text: str) -> str:
    if any(ch in text for ch in ',"\n\r'):
        return '"' + text.replace('"', '""') + '"'
    return text


def write_scores(rows, path) -> None:
    try:
        Path(path).write_text(format_scores(rows), encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def read_scores(path) -> list[ScoreRow]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != SCORE_COLUMNS:
                raise CsvParseError(f"{path}: header must be {','.join(SCORE_COLUMNS)}")
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                try:
                    kw = {c: (float(rec[c]) if rec[c] else None) for c in _FLOAT_COLUMNS}
                    rank = int(rec["rank"]) if rec["rank"] else None
                except (TypeError, ValueError) as exc:
                    raise CsvParseError(f"{path}:{lineno}: {exc}") from exc
                if any(v is not None and not math.isfinite(v) for v in kw.values()):
                    raise CsvParseError(f"{path}:{lineno}: non-finite score")
                rows.append(
                    ScoreRow(
                        seed_id=rec["seed_id"],
                        candidate_id=rec["candidate_id"],
                        rank=rank,
                        skipped_reason=rec["skipped_reason"] or None,
                        **kw,
                    )
                )
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    return rows


def manifest_to_dict(m: SelectionManifest) -> dict:
    return {
        "schema_version": m.schema_version,
        "config_fingerprint": m.config_fingerprint,
        "metric_mode": m.metric_mode,
        "weights": {"w1": m.weights.w1, "w2": m.weights.w2},
        "per_seed_select": m.per_seed_select,
        "fid_estimator": m.fid_estimator,
        "total_selected": m.total,
        "selections": [
            {"seed_id": seed, "candidate_ids": list(ids)} for seed, ids in m.selections
        ],
        "config": m.config,
    }


def dumps_manifest(m: SelectionManifest) -> str:
    return json.dumps(manifest_to_dict(m), indent=2, ensure_ascii=False) + "\n"


def emit_manifest(m: SelectionManifest, path) -> None:
    try:
        Path(path).write_text(dumps_manifest(m), encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def load_manifest(path) -> SelectionManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"{path}: schema_version {data.get('schema_version')!r}, expected {SCHEMA_VERSION}"
        )
    try:
        m = SelectionManifest(
            config_fingerprint=data["config_fingerprint"],
            metric_mode=data["metric_mode"],
            weights=Weights(**data["weights"]),
            per_seed_select=data["per_seed_select"],
            selections=tuple(
                (s["seed_id"], tuple(s["candidate_ids"])) for s in data["selections"]
            ),
            config=data.get("config", {}),
            fid_estimator=data["fid_estimator"],
            schema_version=data["schema_version"],
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed manifest ({exc})") from exc
    if m.total != data.get("total_selected"):
        raise InputError(f"{path}: total_selected does not match selections")
    return m
