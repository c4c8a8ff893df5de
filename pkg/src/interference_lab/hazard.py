"""Competitor arrival processes and the retention laws they induce.

Competitors arrive as an inhomogeneous Poisson process with intensity
``lambda0 * t**-alpha``.  Each arrival lands inside an item's retrieval cap with
probability ``mu_cap``; the item is lost at the first in-cap arrival.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .errors import InsufficientEvents, QuadratureFailure
from .stats import r_squared

T_MIN = 1e-6  # arrivals start here; the intensity is singular at 0


@dataclass(frozen=True)
class ArrivalConfig:
    lambda0: float
    alpha: float
    horizon: float

    def __post_init__(self):
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    def cumulative(self, t):
        """Integrated intensity ``lambda0 * t**(1-alpha) / (1-alpha)``."""
        t = np.asarray(t, dtype=float)
        out = self.lambda0 * t ** (1.0 - self.alpha) / (1.0 - self.alpha)
        return float(out) if out.ndim == 0 else out

    def inverse(self, u):
        u = np.asarray(u, dtype=float)
        return ((1.0 - self.alpha) * u / self.lambda0) ** (1.0 / (1.0 - self.alpha))


@dataclass(frozen=True)
class MixtureConfig:
    """Gamma(beta_shape, c_scale) heterogeneity of the per-item hazard scale."""

    beta_shape: float
    alpha: float
    c_scale: float = 1.0

    def __post_init__(self):
        if self.beta_shape <= 0 or self.c_scale <= 0:
            raise ValueError("beta_shape and c_scale must be positive")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")

    @property
    def exponent(self) -> float:
        """Asymptotic population forgetting exponent ``beta * (1 - alpha)``."""
        return self.beta_shape * (1.0 - self.alpha)


@dataclass
class RetentionCurve:
    times: np.ndarray
    retention: np.ndarray
    n_items: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.retention = np.asarray(self.retention, dtype=float)
        if self.times.shape != self.retention.shape:
            raise ValueError("times and retention must have equal length")


def simulate_arrivals(cfg: ArrivalConfig, rng: np.random.Generator, t_min: float = T_MIN) -> np.ndarray:
    """Arrival times on ``(t_min, horizon]`` by time-change inversion."""
    if cfg.horizon <= t_min:
        return np.empty(0)
    lo, hi = cfg.cumulative(t_min), cfg.cumulative(cfg.horizon)
    n = rng.poisson(hi - lo)
    u = np.sort(rng.uniform(lo, hi, n))
    return cfg.inverse(u)


def retention_analytic(t, mu_cap: float, cfg: ArrivalConfig):
    """``exp(-mu_cap * Lambda(t))``, the survival probability of one item."""
    r = np.exp(-mu_cap * np.asarray(cfg.cumulative(np.asarray(t, dtype=float))))
    return float(r) if np.ndim(r) == 0 else r


def stretched_scale(mu_cap: float, cfg: ArrivalConfig) -> float:
    """Scale ``c`` of the equivalent stretched exponential ``exp(-c t**(1-alpha))``."""
    return mu_cap * cfg.lambda0 / (1.0 - cfg.alpha)


def first_in_cap_arrival(mu_cap: float, cfg: ArrivalConfig, n_items: int, rng, chunk_events: int = 4_000_000) -> np.ndarray:
    """Time of each item's first arrival marked as in-cap (``inf`` if none)."""
    first = np.full(n_items, np.inf)
    lo, hi = cfg.cumulative(T_MIN), cfg.cumulative(cfg.horizon)
    per_item = max(hi - lo, 1e-12)
    step = max(1, int(chunk_events // per_item))
    for start in range(0, n_items, step):
        m = min(step, n_items - start)
        counts = rng.poisson(hi - lo, m)
        total = int(counts.sum())
        if total == 0:
            continue
        u = rng.uniform(lo, hi, total)
        marked = rng.random(total) < mu_cap
        owner = np.repeat(np.arange(m), counts)
        if not marked.any():
            continue
        times = cfg.inverse(u[marked])
        block = np.full(m, np.inf)
        np.minimum.at(block, owner[marked], times)
        first[start : start + m] = block
    return first


def retention_empirical(mu_cap: float, cfg: ArrivalConfig, n_items: int, t_grid, rng) -> RetentionCurve:
    """Fraction of simulated items with no in-cap arrival up to each grid time."""
    if n_items < 100:
        raise ValueError("n_items must be >= 100")
    t_grid = np.asarray(t_grid, dtype=float)
    horizon = max(cfg.horizon, float(t_grid.max()))
    sim_cfg = ArrivalConfig(cfg.lambda0, cfg.alpha, horizon)
    first = np.sort(first_in_cap_arrival(mu_cap, sim_cfg, n_items, rng))
    dead = np.searchsorted(first, t_grid, side="right")
    return RetentionCurve(t_grid, 1.0 - dead / n_items, n_items)


def population_retention_closed_form(mix: MixtureConfig, t):
    t = np.asarray(t, dtype=float)
    return (1.0 + mix.c_scale * t ** (1.0 - mix.alpha)) ** (-mix.beta_shape)


def population_retention(mix: MixtureConfig, t_grid, rtol: float = 1e-8) -> RetentionCurve:
    """Mixture of stretched exponentials over Gamma-distributed scales.

    Evaluated by adaptive quadrature after substituting ``u = c * s`` with
    ``s = t**(1-alpha)``; the Gamma closed form is a cross-check.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    beta, theta = mix.beta_shape, mix.c_scale
    out = np.empty_like(t_grid)
    for i, t in enumerate(t_grid):
        if t <= 0:
            out[i] = 1.0
            continue
        st = t ** (1.0 - mix.alpha) * theta
        rate = 1.0 + 1.0 / st
        norm = gamma_fn(beta) * st**beta

        def smooth(u):
            return math.exp(-u * rate) / norm

        # u**(beta-1) handled as an algebraic weight near 0
        head, err_h = integrate.quad(smooth, 0.0, 1.0, weight="alg", wvar=(beta - 1.0, 0.0), epsrel=rtol, epsabs=0, limit=200)
        tail, err_t = integrate.quad(lambda u: u ** (beta - 1.0) * smooth(u), 1.0, np.inf, epsrel=rtol, epsabs=0, limit=200)
        val = head + tail
        if not np.isfinite(val) or (err_h + err_t) > max(10 * rtol * abs(val), 1e-300):
            raise QuadratureFailure(f"quadrature error {err_h + err_t:g} too large at t={t:g}")
        out[i] = val
    return RetentionCurve(t_grid, out)


# --------------------------------------------------------------------------
# inter-arrival statistics


def interarrival_alpha(event_streams, n_bins: int = 20, min_count: int = 5):
    """Power-law exponent of the recurrence rate of event streams.

    Events are pooled by their time since the stream origin (t = 0), and the
    log-binned event density is regressed on time in log-log space; a rate
    ``~ t**-alpha`` gives slope ``-alpha``.  The window is cut at the shortest
    stream's last event so every stream is observed over it.

    Returns ``(alpha_hat, r_squared)``.  Streams whose inter-arrival gaps all
    fall in one logarithmic bin carry no scale information and raise
    :class:`InsufficientEvents`.
    """
    streams = [np.sort(np.asarray(s, dtype=float)) for s in event_streams if len(s) > 0]
    gaps = np.concatenate([np.diff(s) for s in streams]) if streams else np.empty(0)
    if gaps.size < 100:
        raise InsufficientEvents(f"need >= 100 inter-arrival gaps, got {gaps.size}")
    pos = gaps[gaps > 0]
    if pos.size == 0 or np.ptp(np.log10(pos)) < 1.0 / n_bins:
        raise InsufficientEvents("degenerate gap distribution: all gaps fall in a single bin")
    t_obs = min(s[-1] for s in streams)
    times = np.concatenate([s[(s > 0) & (s <= t_obs)] for s in streams])
    lo = times.min()
    edges = np.geomspace(lo, t_obs, n_bins + 1)
    counts, _ = np.histogram(times, bins=edges)
    density = counts / (np.diff(edges) * len(streams))
    centers = np.sqrt(edges[:-1] * edges[1:])
    ok = counts >= min_count
    # the first bin is anchored at the earliest event and is biased low
    ok[0] = False
    if ok.sum() < 3:
        raise InsufficientEvents("too few populated bins for a power-law fit")
    x, y = np.log(centers[ok]), np.log(density[ok])
    slope, icpt = np.polyfit(x, y, 1)
    return float(-slope), r_squared(y, icpt + slope * x)


def pareto_gaps(alpha: float, size, rng, x_min: float = 1.0) -> np.ndarray:
    """Pareto(alpha) variates with scale ``x_min`` (survival ``(x/x_min)**-alpha``)."""
    return x_min * (1.0 - rng.random(size)) ** (-1.0 / alpha)
