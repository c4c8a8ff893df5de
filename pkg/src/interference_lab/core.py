"""Unit-vector embeddings, memory traces and kernel-threshold retrieval.

Scores follow the vector-database convention: ``decay(age) * cosine(query, trace)``
with ``decay(t) = (1 + beta*t) ** -psi``.  Queries are corrupted with
age-proportional Gaussian noise; stored traces stay clean.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyStore, NegativeAge, ZeroVector

ZERO_NORM = 1e-12

DEFAULT_SEEDS = (42, 123, 456, 789, 1024)


def substream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for one experiment cell.

    The stream depends only on ``seed`` and the (stringified) keys, never on
    the order in which cells are executed, so parallel and sequential runs
    draw identical numbers.
    """
    spawn_key = tuple(zlib.crc32(str(k).encode()) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if not np.isfinite(n) or n < ZERO_NORM:
        raise ZeroVector(f"cannot normalize vector with norm {n:g}")
    return v / n


def normalize_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d array, got shape {X.shape}")
    norms = np.linalg.norm(X, axis=1)
    bad = np.flatnonzero(~(norms >= ZERO_NORM))
    if bad.size:
        raise ZeroVector(f"row {bad[0]} has norm {norms[bad[0]]:g}")
    return X / norms[:, None]


def cosine(u, v) -> float:
    """Cosine of two unit vectors (plain inner product, clipped to [-1, 1])."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch(f"shapes {u.shape} and {v.shape} differ")
    return float(np.clip(u @ v, -1.0, 1.0))


@dataclass(frozen=True)
class DecayParams:
    beta: float = 0.20
    psi: float = 0.5

    def __post_init__(self):
        if self.beta < 0 or self.psi < 0:
            raise ValueError("decay parameters must be nonnegative")


@dataclass(frozen=True)
class NoiseParams:
    sigma: float = 0.5

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def decay_factor(age, p: DecayParams):
    """Temporal decay ``(1 + beta*age) ** -psi``; scalar in, scalar out."""
    a = np.asarray(age, dtype=float)
    if np.any(a < 0):
        raise NegativeAge(f"age must be >= 0, got min {a.min():g}")
    s = (1.0 + p.beta * a) ** (-p.psi)
    return float(s) if s.ndim == 0 else s


def noise_scale(age, sigma: float, d: int):
    """Per-coordinate std of the age-proportional query noise."""
    return sigma * np.sqrt(np.asarray(age, dtype=float) + 0.01) / np.sqrt(d)


def perturb(v, age: float, p: NoiseParams, rng: np.random.Generator) -> np.ndarray:
    """Return ``normalize(v + eps)`` with ``eps = sigma*sqrt(age+0.01)/sqrt(d) * z``."""
    v = np.asarray(v, dtype=float)
    if age < 0:
        raise NegativeAge(f"age must be >= 0, got {age:g}")
    if p.sigma == 0:
        return v.copy()
    eps = noise_scale(age, p.sigma, v.shape[-1]) * rng.standard_normal(v.shape[-1])
    return normalize(v + eps)


def perturb_rows(X, ages, p: NoiseParams, rng: np.random.Generator, d: int | None = None) -> np.ndarray:
    """Vectorised :func:`perturb` over the rows of ``X``.

    ``d`` overrides the dimension used in the noise scale; the noise is still
    drawn in all columns of ``X``.
    """
    X = np.asarray(X, dtype=float)
    ages = np.broadcast_to(np.asarray(ages, dtype=float), (X.shape[0],))
    if np.any(ages < 0):
        raise NegativeAge("ages must be >= 0")
    if p.sigma == 0:
        return X.copy()
    scale = noise_scale(ages, p.sigma, d or X.shape[1])
    return normalize_rows(X + scale[:, None] * rng.standard_normal(X.shape))


@dataclass(frozen=True)
class MemoryTrace:
    id: int
    vec: np.ndarray
    encode_time: float = 0.0
    repetition_times: tuple = ()

    def __post_init__(self):
        reps = tuple(float(t) for t in self.repetition_times) or (float(self.encode_time),)
        if any(b < a for a, b in zip(reps, reps[1:])):
            raise ValueError("repetition_times must be nondecreasing")
        if reps[0] != float(self.encode_time):
            raise ValueError("encode_time must equal the first repetition time")
        if self.encode_time < 0:
            raise NegativeAge("encode_time must be >= 0")
        object.__setattr__(self, "repetition_times", reps)

    @property
    def last_repetition(self) -> float:
        return self.repetition_times[-1]


@dataclass(frozen=True)
class RetrievalOutcome:
    ranked: list  # [(id, score)], score descending, ties by ascending id
    accepted: list  # ids among ``ranked`` with score >= threshold


@dataclass(frozen=True, eq=False)
class MemoryStore:
    """Immutable collection of unit-norm traces sorted by id.

    ``origins`` holds the time each trace's decay clock starts from (its most
    recent repetition).
    """

    ids: np.ndarray
    vectors: np.ndarray
    origins: np.ndarray
    decay: DecayParams = field(default_factory=DecayParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    threshold: float = 0.0

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        V = np.asarray(self.vectors, dtype=float)
        origins = np.asarray(self.origins, dtype=float)
        if V.ndim != 2 or len(ids) != V.shape[0] or len(origins) != V.shape[0]:
            raise DimensionMismatch("ids, vectors and origins must have matching lengths")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("trace ids must be unique")
        if V.shape[0] and not np.allclose(np.linalg.norm(V, axis=1), 1.0, atol=1e-9):
            raise ValueError("all stored vectors must be unit-norm")
        if not -1.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be a cosine value in [-1, 1]")
        order = np.argsort(ids, kind="stable")
        for name, arr in (("ids", ids[order]), ("vectors", V[order]), ("origins", origins[order])):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_traces(cls, traces: Iterable[MemoryTrace], **kwargs) -> "MemoryStore":
        traces = list(traces)
        if not traces:
            return cls(np.zeros(0, np.int64), np.zeros((0, 0)), np.zeros(0), **kwargs)
        dims = {t.vec.shape for t in traces}
        if len(dims) != 1:
            raise DimensionMismatch(f"traces have differing shapes {sorted(dims)}")
        return cls(
            ids=np.array([t.id for t in traces]),
            vectors=np.stack([t.vec for t in traces]),
            origins=np.array([t.last_repetition for t in traces]),
            **kwargs,
        )

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def decay_weights(self, now: float) -> np.ndarray:
        ages = now - self.origins
        if np.any(ages < -1e-12):
            raise NegativeAge("now precedes the most recent repetition of some trace")
        return decay_factor(np.maximum(ages, 0.0), self.decay)

    def scores(self, queries, now: float) -> np.ndarray:
        """Score matrix ``(n_queries, n_traces)`` of decayed cosine."""
        if len(self) == 0:
            raise EmptyStore("store holds no traces")
        Q = np.atleast_2d(np.asarray(queries, dtype=float))
        if Q.shape[1] != self.dim:
            raise DimensionMismatch(f"query dim {Q.shape[1]} != store dim {self.dim}")
        return (Q @ self.vectors.T) * self.decay_weights(now)

    def top1(self, queries, now: float) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest id since ids are sorted
        return self.ids[np.argmax(self.scores(queries, now), axis=1)]


def rank_order(scores: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Indices sorting by descending score, ties broken by ascending id."""
    return np.lexsort((ids, -np.asarray(scores)))


def retrieve(store: MemoryStore, query, now: float, top_k: int = 10) -> RetrievalOutcome:
    scores = store.scores(query, now)[0]
    order = rank_order(scores, store.ids)[:top_k]
    ranked = [(int(store.ids[i]), float(scores[i])) for i in order]
    accepted = [i for i, s in ranked if s >= store.threshold]
    return RetrievalOutcome(ranked=ranked, accepted=accepted)


def as_matrix(vectors: Sequence) -> np.ndarray:
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected an (n, d) matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("embeddings contain non-finite values")
    return X
