"""Tip-of-tongue states: the right item is close but not first.

Store and queries are projected onto the top principal components, queries
get isotropic noise, and a query counts as a TOT event when its target ranks
2 to 20 while the best match is still similar (cosine above 0.5).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import DEFAULT_SEEDS, normalize_rows, substream
from ..errors import ConfigError, StoreTooSmall
from ..parallel import run_cells


@dataclass(frozen=True)
class TotConfig:
    pca_dim: int = 96
    noise_sd: float = 1.5 / np.sqrt(96)  # per coordinate
    rank_window: tuple = (2, 20)
    sim_gate: float = 0.5
    seeds: tuple = DEFAULT_SEEDS

    def __post_init__(self):
        lo, hi = self.rank_window
        if not 2 <= lo <= hi:
            raise ConfigError("rank window must satisfy 2 <= lo <= hi")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be nonnegative")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass
class TotResult:
    tot_rate: float
    recall_rate: float
    records: list = field(default_factory=list)  # (seed, query, rank, top1_sim)
    config: TotConfig | None = None

    @staticmethod
    def classify(rank: int, top1: float, cfg: TotConfig) -> str:
        if rank == 1:
            return "recall"
        lo, hi = cfg.rank_window
        if lo <= rank <= hi and top1 > cfg.sim_gate:
            return "tot"
        return "miss"

    def rates_from_records(self) -> tuple[float, float]:
        cfg = self.config or TotConfig()
        kinds = [self.classify(r, s, cfg) for _, _, r, s in self.records]
        n = len(kinds)
        return kinds.count("tot") / n, kinds.count("recall") / n


def pca_project(X, dim: int):
    """Centred PCA basis of ``X`` and the mean; rows are not renormalised."""
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    _, _, Vt = np.linalg.svd(X - mu, full_matrices=False)
    return Vt[:dim].T, mu


def tot_cell(cfg: TotConfig, seed: int, store_p: np.ndarray, target_idx: np.ndarray):
    rng = substream(seed, "tot", "noise")
    T = store_p[target_idx]
    Q = T + cfg.noise_sd * rng.standard_normal(T.shape)
    Q = normalize_rows(Q)
    S = Q @ store_p.T
    correct = S[np.arange(len(target_idx)), target_idx]
    # rank 1 + number strictly better + ties with a lower id
    better = (S > correct[:, None]).sum(axis=1)
    ties_before = ((S == correct[:, None]) & (np.arange(S.shape[1]) < target_idx[:, None])).sum(axis=1)
    rank = 1 + better + ties_before
    top1 = S.max(axis=1)
    return [(seed, int(i), int(r), float(s)) for i, r, s in zip(target_idx, rank, top1)]


def run_tot(cfg: TotConfig, store, target_idx=None, jobs: int = 1) -> TotResult:
    """TOT and recall rates over all query targets and seeds.

    The store is projected onto its top ``pca_dim`` centred principal
    components and rows renormalised, so similarities stay cosines.
    """
    X = np.asarray(store, dtype=float)
    lo, hi = cfg.rank_window
    if len(X) <= hi:
        raise StoreTooSmall(f"store has {len(X)} items; the rank window needs more than {hi}")
    dim = min(cfg.pca_dim, X.shape[1], len(X) - 1)
    basis, mu = pca_project(X, dim)
    Xp = normalize_rows((X - mu) @ basis)
    idx = np.arange(len(X)) if target_idx is None else np.asarray(target_idx, dtype=int)
    per = run_cells(tot_cell, [(cfg, s, Xp, idx) for s in cfg.seeds], jobs)
    records = [r for block in per for r in block]
    res = TotResult(0.0, 0.0, records, cfg)
    res.tot_rate, res.recall_rate = res.rates_from_records()
    return res
