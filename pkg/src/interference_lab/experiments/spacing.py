"""Spacing: retention at a delayed test after massed or distributed repetition.

Every fact is stored three times, once per repetition, at times drawn
uniformly in the condition's window; each copy decays from its own
timestamp.  At test the query noise follows the age of the most recent
repetition, and retrieval succeeds when any copy of the fact ranks first.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import DEFAULT_SEEDS, DecayParams, NoiseParams, decay_factor, noise_scale, normalize_rows, substream
from ..errors import ConfigError, PoolTooSmall, ZeroVariance
from ..parallel import run_cells
from ..stats import cohens_d, wilcoxon_one_sided

DAY = 1.0
SECONDS = 1.0 / 86400.0
HOURS = 1.0 / 24.0

DEFAULT_WINDOWS = {
    "massed": 120 * SECONDS,
    "short": 2 * HOURS,
    "medium": 2 * DAY,
    "long": 14 * DAY,
}


@dataclass(frozen=True)
class SpacingConfig:
    n_facts: int = 100
    n_reps: int = 3
    windows: dict = field(default_factory=lambda: dict(DEFAULT_WINDOWS))  # days
    test_time: float = 30.0
    n_distractors: int = 10_000
    decay: DecayParams = field(default_factory=DecayParams)
    noise: NoiseParams = field(default_factory=lambda: NoiseParams(0.25))
    seeds: tuple = DEFAULT_SEEDS

    def __post_init__(self):
        if self.n_reps < 1:
            raise ConfigError("n_reps must be >= 1")
        if any(w < 0 or w > self.test_time for w in self.windows.values()):
            raise ConfigError("repetition windows must lie within [0, test_time]")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass
class SpacingResult:
    condition: str
    retention: float
    per_seed: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.retention <= 1.0:
            raise ValueError("retention must lie in [0, 1]")


@dataclass
class SpacingReport:
    results: dict  # condition -> SpacingResult
    cohens_d: float  # long vs massed
    wilcoxon_p: float  # one-sided, long > massed

    def retention(self, condition: str) -> float:
        return self.results[condition].retention


def spacing_cell(cfg: SpacingConfig, seed: int, facts: np.ndarray, distractors: np.ndarray) -> dict:
    """Retention per condition for one seed."""
    n, d = facts.shape
    rng = substream(seed, "spacing", "schedule")
    # one uniform draw per repetition, scaled by each window (common random numbers)
    u = np.sort(rng.random((n, cfg.n_reps)), axis=1)
    d_age = rng.random(len(distractors)) * cfg.test_time
    z = substream(seed, "spacing", "noise").standard_normal((n, d))
    owner = np.concatenate([np.repeat(np.arange(n), cfg.n_reps), np.full(len(distractors), -1)])
    store = np.vstack([np.repeat(facts, cfg.n_reps, axis=0), distractors])
    base = facts @ store.T
    noise_part = z @ store.T
    out = {}
    for name, w in cfg.windows.items():
        times = u * w
        ages = np.concatenate([(cfg.test_time - times).ravel(), d_age])
        q_age = cfg.test_time - times[:, -1]
        if cfg.noise.sigma == 0:
            raw = base
        else:
            # cosine of normalize(fact + s*z) against the store, via shared products
            s = noise_scale(q_age, cfg.noise.sigma, d)
            qnorm = np.linalg.norm(facts + s[:, None] * z, axis=1)
            raw = (base + s[:, None] * noise_part) / qnorm[:, None]
        top = np.argmax(raw * decay_factor(ages, cfg.decay), axis=1)
        out[name] = float(np.mean(owner[top] == np.arange(n)))
    return out


def run_spacing(cfg: SpacingConfig, facts, distractors, jobs: int = 1) -> SpacingReport:
    facts = normalize_rows(np.asarray(facts, dtype=float))
    distractors = np.asarray(distractors, dtype=float).reshape(-1, facts.shape[1])
    if len(facts) != cfg.n_facts:
        raise ConfigError(f"config expects {cfg.n_facts} facts, got {len(facts)}")
    if len(distractors) < cfg.n_distractors:
        raise PoolTooSmall(f"need {cfg.n_distractors} distractors, got {len(distractors)}")
    distractors = distractors[: cfg.n_distractors]
    cells = [(cfg, s, facts, distractors) for s in cfg.seeds]
    per = run_cells(spacing_cell, cells, jobs)
    results = {}
    for name in cfg.windows:
        vals = np.array([p[name] for p in per])
        results[name] = SpacingResult(name, float(vals.mean()), vals)
    d, p = float("nan"), float("nan")
    if "long" in results and "massed" in results and len(cfg.seeds) >= 2:
        a, b = results["long"].per_seed, results["massed"].per_seed
        try:
            d = cohens_d(a, b)
        except ZeroVariance:
            d = float(np.sign(a.mean() - b.mean()) * np.inf)
        p = wilcoxon_one_sided(a, b, alternative="greater")
    return SpacingReport(results, d, p)
