"""Embedding sets, selections, run reports and their on-disk formats.

Binary embeddings (``EMB1``)::

    b"EMB1" | u32 count | u32 dim | count*dim f32      (all little-endian)

Labels (``LBL1``)::

    b"LBL1" | u32 count | count i32
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

EMB_MAGIC = b"EMB1"
LBL_MAGIC = b"LBL1"
_HEADER = struct.Struct("<4sII")
_LBL_HEADER = struct.Struct("<4sI")

CSV_MAX_DIM = 4096
CSV_MAX_COUNT = 10**6

METHODS = ("cluster_avg", "cluster_min", "domain", "entropy_active", "entropy_inverse", "random")
ORDERS = ("ascending", "descending")


class EmbeddingFormatError(ValueError):
    """Bad magic, bad header, or unparseable text."""


class EmbeddingDataError(ValueError):
    """Non-finite values or inconsistent labels."""


class EmbeddingLengthError(ValueError):
    """Payload shorter (or longer) than the header promises."""


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    data: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim == 1:
            data = data.reshape(-1, 1)
        if data.ndim != 2:
            raise EmbeddingDataError(f"data must be 2-D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise EmbeddingDataError("embedding data contains NaN or infinite values")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.labels is not None:
            labels = np.ascontiguousarray(self.labels, dtype=np.int32).reshape(-1)
            if labels.shape[0] != data.shape[0]:
                raise EmbeddingDataError(
                    f"{labels.shape[0]} labels for {data.shape[0]} rows"
                )
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((0, dim), dtype=np.float32))

    @property
    def count(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def __len__(self):
        return self.count

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return EmbeddingSet(self.data[indices], labels)

    def digest(self):
        h = hashlib.sha256()
        h.update(_HEADER.pack(EMB_MAGIC, self.count, self.dim))
        h.update(self.data.astype("<f4", copy=False).tobytes())
        if self.labels is not None:
            h.update(self.labels.astype("<i4", copy=False).tobytes())
        return h.hexdigest()

    def equals(self, other):
        """Bitwise equality of data and labels."""
        if self.data.shape != other.data.shape:
            return False
        if self.data.tobytes() != other.data.tobytes():
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)


def load_embeddings(path, format="binary"):
    path = Path(path)
    if format == "binary":
        return _load_binary(path.read_bytes())
    if format == "csv":
        return _load_csv(path.read_text())
    raise ValueError(f"unknown embedding format {format!r}")


def _load_binary(raw):
    if len(raw) < _HEADER.size:
        raise EmbeddingFormatError("file too short for EMB1 header")
    magic, count, dim = _HEADER.unpack_from(raw)
    if magic != EMB_MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r}, expected {EMB_MAGIC!r}")
    if dim == 0:
        raise EmbeddingFormatError("dim must be positive")
    expected = _HEADER.size + 4 * count * dim
    if len(raw) != expected:
        raise EmbeddingLengthError(f"expected {expected} bytes, file has {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(count, dim)
    if not np.isfinite(data).all():
        raise EmbeddingDataError("embedding data contains NaN or infinite values")
    return EmbeddingSet(data.astype(np.float32))


def _load_csv(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmbeddingFormatError("empty CSV: dimension cannot be inferred")
    if len(lines) > CSV_MAX_COUNT:
        raise EmbeddingFormatError(f"CSV limited to {CSV_MAX_COUNT} rows")
    try:
        rows = [[float(v) for v in ln.split(",")] for ln in lines]
    except ValueError as exc:
        raise EmbeddingFormatError(f"unparseable CSV value: {exc}") from None
    dim = len(rows[0])
    if dim > CSV_MAX_DIM:
        raise EmbeddingFormatError(f"CSV limited to dim <= {CSV_MAX_DIM}")
    if any(len(r) != dim for r in rows):
        raise EmbeddingFormatError("ragged CSV rows")
    data = np.asarray(rows, dtype=np.float32)
    if not np.isfinite(data).all():
        raise EmbeddingDataError("embedding data contains NaN or infinite values")
    return EmbeddingSet(data)


def save_embeddings(emb, path):
    data = np.ascontiguousarray(emb.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EMB_MAGIC, emb.count, emb.dim))
        fh.write(data.tobytes())


def save_labels(labels, path):
    labels = np.ascontiguousarray(labels, dtype="<i4").reshape(-1)
    with open(path, "wb") as fh:
        fh.write(_LBL_HEADER.pack(LBL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def load_labels(path):
    raw = Path(path).read_bytes()
    if len(raw) < _LBL_HEADER.size:
        raise EmbeddingFormatError("file too short for LBL1 header")
    magic, count = _LBL_HEADER.unpack_from(raw)
    if magic != LBL_MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r}, expected {LBL_MAGIC!r}")
    expected = _LBL_HEADER.size + 4 * count
    if len(raw) != expected:
        raise EmbeddingLengthError(f"expected {expected} bytes, file has {len(raw)}")
    return np.frombuffer(raw, dtype="<i4", offset=_LBL_HEADER.size).astype(np.int32)


def with_labels(emb, labels):
    return EmbeddingSet(emb.data, labels)


def load_manifest(path):
    """Row-index -> external id mapping, one opaque string per line."""
    return Path(path).read_text().splitlines()


# -- selections -------------------------------------------------------------


def select_indices(scores, budget, order):
    """Indices of the ``budget`` best scores, sorted ascending by row index.

    Ties go to the lower row index. Returns ``(selected, clamped)`` where
    ``clamped`` is true when ``budget`` exceeded ``len(scores)``.
    """
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order!r}")
    if isinstance(budget, bool) or int(budget) != budget or budget < 1:
        raise ValueError(f"budget must be a positive integer, got {budget!r}")
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    clamped = budget > n
    take = min(int(budget), n)
    key = scores if order == "ascending" else -scores
    # a stable sort keeps equal keys in index order
    ranked = np.argsort(key, kind="stable")[:take]
    return np.sort(ranked).astype(np.int64), clamped


@dataclass(eq=False)
class ScoredSelection:
    scores: np.ndarray
    selected: np.ndarray
    budget: int
    method: str
    seed: int
    order: str
    clamped: bool = False
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.order not in ORDERS:
            raise ValueError(f"unknown order {self.order!r}")
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.selected = np.asarray(self.selected, dtype=np.int64)

    @classmethod
    def from_scores(cls, scores, budget, method, seed, order, info=None):
        selected, clamped = select_indices(scores, budget, order)
        return cls(scores, selected, int(budget), method, int(seed), order, clamped, dict(info or {}))

    def digest(self):
        return hashlib.sha256(self.selected.astype("<i8").tobytes()).hexdigest()

    def report(self, wall_ms=0, input_digests=()):
        s = self.scores
        warnings = []
        if self.clamped:
            warnings.append("budget_clamped")
        warnings.extend(self.info.get("warnings", ()))
        extra = {k: v for k, v in self.info.items() if k != "warnings"}
        return RunReport(
            method=self.method,
            budget=self.budget,
            selected_count=int(self.selected.shape[0]),
            score_min=float(s.min()) if s.size else 0.0,
            score_max=float(s.max()) if s.size else 0.0,
            score_mean=float(s.mean()) if s.size else 0.0,
            seed=self.seed,
            wall_ms=int(wall_ms),
            input_digests=list(input_digests),
            warnings=warnings,
            extra=extra,
        )


@dataclass
class RunReport:
    method: str
    budget: int
    selected_count: int
    score_min: float
    score_max: float
    score_mean: float
    seed: int
    wall_ms: int = 0
    input_digests: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_text(self):
        """Canonical serialization: declared fields in order, then extras sorted by key."""
        doc = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "extra"}
        for key in sorted(self.extra):
            doc[key] = _plain(self.extra[key])
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_text(cls, text):
        doc = json.loads(text)
        names = [f.name for f in fields(cls) if f.name != "extra"]
        kwargs = {n: doc.pop(n) for n in names if n in doc}
        return cls(**kwargs, extra=doc)


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def write_selection(sel, path, report_path=None, wall_ms=0, input_digests=()):
    body = "".join(f"{int(i)}\n" for i in sel.selected)
    Path(path).write_text(body)
    if report_path is not None:
        Path(report_path).write_text(sel.report(wall_ms, input_digests).to_text())


def read_selection(path):
    text = Path(path).read_text()
    return np.array([int(ln) for ln in text.splitlines() if ln], dtype=np.int64)


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
