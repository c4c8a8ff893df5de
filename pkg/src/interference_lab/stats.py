"""Curve fits (power law, stretched exponential, logistic) and inferential statistics."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize
from scipy import stats as _st

from .errors import (
    InsufficientData,
    NonpositiveInput,
    NoTransition,
    RetentionOutOfRange,
    TooFewPoints,
    ZeroVariance,
)


@dataclass
class FitResult:
    model: str
    params: dict
    r_squared: float
    n_points: int
    ci: dict = field(default_factory=dict)
    r_squared_linear: float | None = None
    flags: tuple = ()

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "params": dict(self.params),
            "r_squared": self.r_squared,
            "r_squared_linear": self.r_squared_linear,
            "n_points": self.n_points,
            "ci": {k: list(v) for k, v in self.ci.items()},
            "flags": list(self.flags),
        }


def r_squared(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return 1.0 - ss_res / ss_tot


def _linfit(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def _pairs_bootstrap(fit_one: Callable, t, r, n_boot: int, rng, level: float) -> dict:
    n = len(t)
    draws = []
    for _ in range(n_boot):
        idx = rng.integers(0, n, n)
        if len(np.unique(t[idx])) < 2:
            continue
        try:
            draws.append(fit_one(t[idx], r[idx]))
        except (ValueError, np.linalg.LinAlgError):
            continue
    if not draws:
        return {}
    draws = np.asarray(draws)
    lo, hi = np.quantile(draws, [(1 - level) / 2, (1 + level) / 2], axis=0)
    return {i: (float(a), float(b)) for i, (a, b) in enumerate(zip(lo, hi))}


def _name_ci(raw: dict, names, point: dict) -> dict:
    out = {}
    for i, name in enumerate(names):
        if i in raw:
            lo, hi = raw[i]
            # a percentile interval can miss the point estimate on tiny samples
            out[name] = (min(lo, point[name]), max(hi, point[name]))
    return out


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if t.size < 3:
        raise TooFewPoints(f"need at least 3 points, got {t.size}")
    if np.any(t <= 0):
        raise NonpositiveInput("t must be positive")
    return t


def fit_power(t, r, n_boot: int = 0, rng=None, level: float = 0.95) -> FitResult:
    """Least-squares fit of ``r = a * t**(-b)`` on the log-log scale."""
    t = _check_t(t)
    r = np.asarray(r, dtype=float)
    if r.shape != t.shape:
        raise ValueError("t and r must have the same length")
    if np.any(r <= 0):
        raise NonpositiveInput("retention values must be positive for a log fit")
    lt, lr = np.log(t), np.log(r)
    slope, icpt = _linfit(lt, lr)
    params = {"a": math.exp(icpt), "b": -slope}
    r2 = r_squared(lr, icpt + slope * lt)
    r2_lin = r_squared(r, params["a"] * t ** (-params["b"]))
    ci = {}
    if n_boot and rng is not None:

        def one(tt, rr):
            s, i = _linfit(np.log(tt), np.log(rr))
            return (math.exp(i), -s)

        ci = _name_ci(_pairs_bootstrap(one, t, r, n_boot, rng, level), ("a", "b"), params)
    return FitResult("power", params, r2, t.size, ci, r2_lin)


def fit_stretched(t, r, n_boot: int = 0, rng=None, level: float = 0.95) -> FitResult:
    """Fit ``r = exp(-c * t**exponent)`` by least squares on ``log(-log r)`` vs ``log t``.

    Points with ``r == 1`` carry no information on this scale and are dropped
    with a warning; values outside ``(0, 1]`` raise.
    """
    t = _check_t(t)
    r = np.asarray(r, dtype=float)
    if np.any((r <= 0) | (r > 1)):
        raise RetentionOutOfRange("retention must lie in (0, 1) for a stretched-exponential fit")
    keep = r < 1
    flags = ()
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} points with retention == 1", stacklevel=2)
        flags = ("dropped_unit_retention",)
        t, r = t[keep], r[keep]
        if t.size < 3:
            raise TooFewPoints("fewer than 3 points left after dropping r == 1")
    lt, y = np.log(t), np.log(-np.log(r))
    slope, icpt = _linfit(lt, y)
    params = {"c": math.exp(icpt), "exponent": slope}
    r2 = r_squared(y, icpt + slope * lt)
    r2_lin = r_squared(r, np.exp(-params["c"] * t ** params["exponent"]))
    ci = {}
    if n_boot and rng is not None:

        def one(tt, rr):
            s, i = _linfit(np.log(tt), np.log(-np.log(rr)))
            return (math.exp(i), s)

        ci = _name_ci(_pairs_bootstrap(one, t, r, n_boot, rng, level), ("c", "exponent"), params)
    return FitResult("stretched_exp", params, r2, t.size, ci, r2_lin, flags)


def logistic(n, n0, k):
    return 1.0 / (1.0 + np.exp(np.clip(k * (np.asarray(n, dtype=float) - n0), -700, 700)))


def fit_logistic(n, acc) -> FitResult:
    """Levenberg-Marquardt fit of ``acc = 1 / (1 + exp(k (n - n0)))``.

    A fitted ``k < 0`` means accuracy rises with ``n``; this is flagged and
    warned about, never silently returned.
    """
    n = np.asarray(n, dtype=float)
    acc = np.asarray(acc, dtype=float)
    if n.size < 3:
        raise TooFewPoints("need at least 3 points")
    if np.any((acc < 0) | (acc > 1)):
        raise ValueError("accuracy must lie in [0, 1]")
    if acc.max() - acc.min() < 0.2:
        raise NoTransition(f"accuracy range {acc.max() - acc.min():.3f} < 0.2")
    order = np.argsort(n)
    n, acc = n[order], acc[order]
    n0 = float(np.median(n))
    # slope at the transition midpoint; the logistic has slope -k/4 there
    slope = np.gradient(acc, n)
    mid = int(np.argmin(np.abs(acc - 0.5)))
    k0 = -4.0 * slope[mid]
    if k0 == 0:
        k0 = 4.0 / (n[-1] - n[0])
    res = optimize.least_squares(
        lambda p: logistic(n, p[0], p[1]) - acc,
        x0=[n0, k0],
        method="lm",
        xtol=1e-10,
        ftol=1e-10,
        gtol=1e-10,
        max_nfev=20_000,
    )
    n0_hat, k_hat = map(float, res.x)
    flags = ()
    if k_hat < 0:
        warnings.warn("logistic fit has negative k: accuracy increases with n", stacklevel=2)
        flags = ("increasing",)
    r2 = r_squared(acc, logistic(n, n0_hat, k_hat))
    return FitResult("logistic", {"n0": n0_hat, "k": k_hat}, r2, n.size, {}, r2, flags)


def loglog_slope(t, r) -> float:
    slope, _ = _linfit(np.log(np.asarray(t, dtype=float)), np.log(np.asarray(r, dtype=float)))
    return slope


def floor_zero_bins(acc, n_per_bin):
    """Replace zero accuracies by ``0.5 / n`` so they can enter a log fit.

    Returns the floored array and a boolean mask of floored entries.
    """
    acc = np.asarray(acc, dtype=float)
    n = np.broadcast_to(np.asarray(n_per_bin, dtype=float), acc.shape)
    mask = acc <= 0
    return np.where(mask, 0.5 / np.maximum(n, 1), acc), mask


# --------------------------------------------------------------------------
# inference


def bootstrap_ci(samples, statistic=np.mean, n_resamples: int = 10_000, level: float = 0.95, rng=None):
    """Percentile bootstrap interval ``(lo, hi)``.

    ``statistic`` is called with an ``axis`` keyword when it accepts one
    (numpy reductions do), otherwise once per resample.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise InsufficientData("bootstrap needs at least one sample")
    if x.size == 1:
        warnings.warn("bootstrap of a single sample is degenerate", stacklevel=2)
        v = float(statistic(x))
        return (v, v)
    rng = rng if rng is not None else np.random.default_rng(0)
    n = x.size
    stats_ = np.empty(n_resamples)
    block = max(1, 2_000_000 // n)
    for s in range(0, n_resamples, block):
        m = min(block, n_resamples - s)
        draws = x[rng.integers(0, n, (m, n))]
        try:
            stats_[s : s + m] = statistic(draws, axis=1)
        except TypeError:
            stats_[s : s + m] = [statistic(row) for row in draws]
    lo, hi = np.quantile(stats_, [(1 - level) / 2, (1 + level) / 2])
    return (float(lo), float(hi))


def cohens_d(a, b) -> float:
    """Standardised mean difference with the pooled standard deviation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise InsufficientData("need at least two samples per group")
    pooled = math.sqrt(((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / (a.size + b.size - 2))
    diff = a.mean() - b.mean()
    if pooled == 0:
        if diff == 0:
            return 0.0
        raise ZeroVariance("both groups are constant; Cohen's d is infinite")
    return float(diff / pooled)


def paired_t(a, b, sided: str = "two-sided"):
    """Paired t-test on ``a - b``; ``sided`` in {two-sided, greater, less}."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise InsufficientData("paired test needs equal lengths >= 2")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0:
        if d.mean() == 0:
            return 0.0, 1.0
        raise ZeroVariance("differences are constant and nonzero")
    t = d.mean() / (sd / math.sqrt(d.size))
    df = d.size - 1
    if sided == "two-sided":
        p = 2 * _st.t.sf(abs(t), df)
    elif sided == "greater":
        p = _st.t.sf(t, df)
    elif sided == "less":
        p = _st.t.cdf(t, df)
    else:
        raise ValueError(f"unknown alternative {sided!r}")
    return float(t), float(min(p, 1.0))


def _signed_rank_null_upper(ranks2: np.ndarray, w2: int) -> float:
    """P(W2 >= w2) under random signs, with ``ranks2`` doubled integer ranks."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in ranks2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return float(counts[w2:].sum() / counts.sum())


def wilcoxon_one_sided(a, b, alternative: str = "greater", exact_max: int = 25) -> float:
    """One-sided Wilcoxon signed-rank p-value for ``a - b``.

    Zero differences are dropped.  Exact null distribution (by enumeration of
    sign patterns) up to ``exact_max`` pairs, else the normal approximation with
    continuity and tie corrections.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise InsufficientData("paired test needs equal lengths >= 2")
    d = a - b
    if alternative == "less":
        d = -d
    elif alternative != "greater":
        raise ValueError(f"unknown alternative {alternative!r}")
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    ranks = _st.rankdata(np.abs(d))
    w_plus = ranks[d > 0].sum()
    if n <= exact_max:
        ranks2 = np.rint(2 * ranks).astype(int)
        return _signed_rank_null_upper(ranks2, int(round(2 * w_plus)))
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    return float(_st.norm.sf(z))
