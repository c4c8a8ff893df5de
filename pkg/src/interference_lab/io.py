"""Embedding files, DRM list files, result records and figure tables.

Binary embedding layout (little endian)::

    offset 0   5 bytes  magic b"IFLB1"
    offset 5   u64      n (rows)
    offset 13  u64      d (columns)
    offset 21  u8       encoding (0 = float32)
    offset 22  n*d*4    row-major float32 payload

Labels live in an optional sidecar ``<path>.labels`` with one label per row.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import BadMagic, DataError, MissingLabel, NonFiniteValue, TruncatedPayload
from .synth import DrmList

MAGIC = b"IFLB1"
HEADER = struct.Struct("<5sQQB")
ENC_FLOAT32 = 0
DATA_ENV = "INTERFERENCE_LAB_DATA"


def sidecar_path(path) -> Path:
    return Path(str(path) + ".labels")


def save_embeddings(path, X, labels=None) -> None:
    X = np.ascontiguousarray(np.asarray(X, dtype="<f4"))
    if X.ndim != 2:
        raise DataError(f"expected an (n, d) array, got shape {X.shape}")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, X.shape[0], X.shape[1], ENC_FLOAT32))
        fh.write(X.tobytes())
    if labels is not None:
        labels = list(labels)
        if len(labels) != X.shape[0]:
            raise DataError(f"{len(labels)} labels for {X.shape[0]} rows")
        sidecar_path(path).write_text("".join(f"{lab}\n" for lab in labels), encoding="utf-8")


def load_embeddings(path, renormalize: bool = False):
    """Read an embedding file; returns ``(float32 matrix, labels or None)``."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise TruncatedPayload(f"{path}: header needs {HEADER.size} bytes, file has {len(raw)}")
    magic, n, d, enc = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r} at byte offset 0 (expected {MAGIC!r})")
    if enc != ENC_FLOAT32:
        raise DataError(f"{path}: unknown encoding {enc} at byte offset 21")
    expected = n * d * 4
    actual = len(raw) - HEADER.size
    if actual < expected:
        raise TruncatedPayload(f"{path}: payload at byte offset {HEADER.size} should hold {expected} bytes, found {actual}")
    X = np.frombuffer(raw, dtype="<f4", count=n * d, offset=HEADER.size).reshape(n, d).copy()
    bad = np.flatnonzero(~np.isfinite(X.ravel()))
    if bad.size:
        off = HEADER.size + 4 * int(bad[0])
        raise NonFiniteValue(f"{path}: non-finite value at byte offset {off} (row {bad[0] // max(d, 1)})")
    if renormalize and n:
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise DataError(f"{path}: zero row cannot be renormalised")
        X = (X / norms).astype(np.float32)
    labels = None
    side = sidecar_path(path)
    if side.exists():
        labels = side.read_text(encoding="utf-8").splitlines()
        if len(labels) != n:
            raise DataError(f"{side}: {len(labels)} labels for {n} rows")
    return X, labels


def load_drm_lists(path, embeddings, labels) -> list:
    """Resolve a YAML list file against labelled embeddings.

    The file holds ``lists:`` entries with ``id``, ``studied`` (words),
    ``lure`` and an optional ``unrelated`` word.  Without one, the first
    studied word of the next list serves as the unrelated probe.
    """
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    entries = doc.get("lists", doc) if isinstance(doc, dict) else doc
    if not isinstance(entries, list) or not entries:
        raise DataError(f"{path}: expected a nonempty 'lists' sequence")
    where: dict[str, int] = {}
    dups = set()
    for i, lab in enumerate(labels):
        if lab in where:
            dups.add(lab)
        else:
            where[lab] = i
    if dups:
        warnings.warn(f"duplicate labels in sidecar, first occurrence used: {sorted(dups)[:5]}", stacklevel=2)
    X = np.asarray(embeddings, dtype=float)

    def vec(word, list_id):
        if word not in where:
            raise MissingLabel(f"word {word!r} of list {list_id!r} has no embedding")
        return X[where[word]]

    out = []
    for j, e in enumerate(entries):
        lid = str(e.get("id", f"list{j:02d}"))
        studied = [str(w) for w in e["studied"]]
        lure = str(e["lure"])
        unrelated = e.get("unrelated") or str(entries[(j + 1) % len(entries)]["studied"][0])
        out.append(
            DrmList(
                lid,
                np.stack([vec(w, lid) for w in studied]),
                vec(lure, lid),
                vec(str(unrelated), lid),
                tuple(studied),
                lure,
            )
        )
    return out


def data_dir(configured: str | None = None) -> Path:
    """Configured directory, else the environment override, else ``./data``."""
    if configured:
        return Path(configured)
    return Path(os.environ.get(DATA_ENV, "data"))


# --------------------------------------------------------------------------
# results


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "as_dict"):
        return _jsonable(obj.as_dict())
    return obj


def config_hash(config_dict: dict) -> str:
    blob = json.dumps(_jsonable(config_dict), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ResultRecord:
    experiment: str
    config_hash: str
    per_seed: dict = field(default_factory=dict)
    aggregates: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    code_version: str = ""
    wall_time_s: float = 0.0

    def as_dict(self) -> dict:
        return _jsonable(
            {
                "experiment": self.experiment,
                "config_hash": self.config_hash,
                "per_seed": self.per_seed,
                "aggregates": self.aggregates,
                "fits": self.fits,
                "code_version": self.code_version,
                "wall_time_s": self.wall_time_s,
            }
        )

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "ResultRecord":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(d["experiment"], d["config_hash"], d["per_seed"], d["aggregates"], d["fits"], d["code_version"], d["wall_time_s"])


def write_table(path, columns: list, rows) -> None:
    """CSV with a header row; column names carry their unit as a suffix."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def read_table(path) -> tuple[list, list]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
