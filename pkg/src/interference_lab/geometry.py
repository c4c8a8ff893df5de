"""Spherical cap mass, effective-dimensionality estimators and the SPP test."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats as _st

from .errors import (
    DegenerateCovariance,
    DomainError,
    DuplicatePoints,
    InsufficientData,
)

# Dimensions and half-angles of the cap-volume verification grid.
CAP_GRID_DIMS = (8, 16, 32, 64, 128)
CAP_GRID_ANGLES_DEG = (10.0, 20.0, 30.0, 45.0, 60.0)
MIN_EXPECTED_HITS = 20


# --------------------------------------------------------------------------
# regularized incomplete beta


def _beta_cf(a: float, b: float, x: float, rtol: float, max_iter: int) -> float:
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < rtol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float, rtol: float = 1e-12, max_iter: int = 10_000) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise DomainError("incomplete beta shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    # the fraction converges fast only on one side of the mode
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x, rtol, max_iter) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x, rtol, max_iter) / b


def log_regularized_incomplete_beta(a: float, b: float, x: float, rtol: float = 1e-12, max_iter: int = 10_000) -> float:
    """log I_x(a, b); stays finite where I_x underflows (0 < x)."""
    if a <= 0 or b <= 0:
        raise DomainError("incomplete beta shape parameters must be positive")
    if not 0.0 < x <= 1.0:
        raise DomainError(f"x must lie in (0, 1], got {x}")
    if x == 1.0:
        return 0.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return log_front + math.log(_beta_cf(a, b, x, rtol, max_iter) / a)
    return math.log1p(-math.exp(log_front) * _beta_cf(b, a, 1.0 - x, rtol, max_iter) / b)


# --------------------------------------------------------------------------
# cap mass


def cap_fraction_analytic(d: int, theta: float) -> float:
    """Fraction of the unit sphere in R^d lying within angle ``theta`` of a pole."""
    if d < 2:
        raise DomainError("dimension must be >= 2")
    if not 0.0 < theta < math.pi:
        raise DomainError(f"theta must lie in (0, pi), got {theta}")
    if theta > math.pi / 2:
        return 1.0 - cap_fraction_analytic(d, math.pi - theta)
    if theta == math.pi / 2:
        return 0.5
    return 0.5 * regularized_incomplete_beta((d - 1) / 2.0, 0.5, math.sin(theta) ** 2)


def log_cap_fraction_analytic(d: int, theta: float) -> float:
    """Natural log of :func:`cap_fraction_analytic`, finite for every theta in (0, pi/2]."""
    if d < 2:
        raise DomainError("dimension must be >= 2")
    if not 0.0 < theta < math.pi:
        raise DomainError(f"theta must lie in (0, pi), got {theta}")
    if theta >= math.pi / 2:
        return math.log(cap_fraction_analytic(d, theta))
    return math.log(0.5) + log_regularized_incomplete_beta((d - 1) / 2.0, 0.5, math.sin(theta) ** 2)


def cap_fraction_mc(d: int, theta, n: int, rng: np.random.Generator, chunk: int = 200_000):
    """Monte Carlo cap fraction from ``n`` uniform points on the sphere.

    ``theta`` may be a scalar or an array of angles; the same sample is reused
    for every angle.  Returns ``(estimate, stderr)`` with matching shape.
    """
    thetas = np.atleast_1d(np.asarray(theta, dtype=float))
    cos_t = np.cos(thetas)
    hits = np.zeros(thetas.shape, dtype=np.int64)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        z = rng.standard_normal((m, d))
        # the anchor is the first basis vector
        c = np.clip(z[:, 0] / np.linalg.norm(z, axis=1), -1.0, 1.0)
        c.sort()
        hits += m - np.searchsorted(c, cos_t, side="left")
        done += m
    p = hits / n
    se = np.sqrt(p * (1 - p) / n)
    if np.ndim(theta) == 0:
        return float(p[0]), float(se[0])
    return p, se


@dataclass
class CapEstimate:
    d: int
    theta: float
    analytic_fraction: float
    mc_fraction: float
    mc_stderr: float
    n_samples: int
    low_signal: bool = False

    @property
    def ratio(self) -> float:
        return self.mc_fraction / self.analytic_fraction

    @property
    def expected_hits(self) -> float:
        return self.analytic_fraction * self.n_samples


def cap_verification(
    rng: np.random.Generator,
    dims=CAP_GRID_DIMS,
    angles_deg=CAP_GRID_ANGLES_DEG,
    n: int = 1_000_000,
    min_hits: float = MIN_EXPECTED_HITS,
) -> list[CapEstimate]:
    """Analytic vs Monte Carlo cap fraction over a (d, theta) grid.

    Cells where fewer than ``min_hits`` hits are expected are flagged
    ``low_signal`` instead of being compared.
    """
    out = []
    thetas = np.radians(np.asarray(angles_deg, dtype=float))
    for d in dims:
        p, se = cap_fraction_mc(d, thetas, n, rng)
        for th, pi, si in zip(thetas, p, se):
            a = cap_fraction_analytic(d, float(th))
            out.append(CapEstimate(d, float(th), a, float(pi), float(si), n, a * n < min_hits))
    return out


# --------------------------------------------------------------------------
# spectra and effective dimension


def _strip_zero_columns(X: np.ndarray) -> np.ndarray:
    # all-zero columns add exact zero eigenvalues / distances; dropping them
    # keeps padded and unpadded data bit-identical
    keep = np.any(X != 0, axis=0)
    return X if keep.all() else X[:, keep]


def covariance_spectrum(X) -> np.ndarray:
    """Eigenvalues (descending, length d_nom) of the column-centered covariance."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < 2:
        raise InsufficientData("need at least two samples")
    Xs = _strip_zero_columns(X)
    Xc = Xs - Xs.mean(axis=0)
    if Xc.shape[1] <= n:
        ev = np.linalg.eigvalsh(Xc.T @ Xc / (n - 1))
    else:
        # same nonzero spectrum from the smaller Gram matrix
        ev = np.linalg.eigvalsh(Xc @ Xc.T / (n - 1))
    ev = np.clip(ev[::-1], 0.0, None)
    full = np.zeros(d)
    k = min(len(ev), d)
    full[:k] = ev[:k]
    return full


def participation_ratio(X=None, eigenvalues=None) -> float:
    """``(sum lambda)^2 / sum lambda^2`` of the centered covariance spectrum."""
    ev = covariance_spectrum(X) if eigenvalues is None else np.asarray(eigenvalues, dtype=float)
    if np.all(ev < 1e-12):
        raise DegenerateCovariance("all covariance eigenvalues vanish")
    return float(ev.sum() ** 2 / np.sum(ev**2))


def pca_variance_dims(X=None, fraction: float = 0.95, eigenvalues=None) -> int:
    """Smallest number of components explaining ``fraction`` of the variance."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    ev = covariance_spectrum(X) if eigenvalues is None else np.asarray(eigenvalues, dtype=float)
    cum = np.cumsum(ev) / ev.sum()
    return int(min(np.searchsorted(cum, fraction, side="left") + 1, len(ev)))


def spectral_effective_rank(eigenvalues, gamma: float) -> int:
    """Number of eigenvalues strictly above ``gamma``."""
    return int(np.count_nonzero(np.asarray(eigenvalues) > gamma))


def knn_distances(X, k: int, chunk: int = 1024) -> np.ndarray:
    """Sorted Euclidean distances from each row to its ``k`` nearest other rows."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    sq = np.einsum("ij,ij->i", X, X)
    out = np.empty((n, k))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * X[start:stop] @ X.T
        rows = np.arange(stop - start)
        d2[rows, rows + start] = np.inf
        cand = np.argpartition(d2, k, axis=1)[:, : k + 1]
        # exact distances for the candidates; the expansion above cancels badly
        diff = X[cand] - X[start:stop, None, :]
        dist = np.linalg.norm(diff, axis=2)
        dist[cand == (rows + start)[:, None]] = np.inf
        dist.sort(axis=1)
        out[start:stop] = dist[:, :k]
    return out


def levina_bickel(X, k: int = 10) -> float:
    """Maximum-likelihood intrinsic dimension from k-nearest-neighbour distances.

    Per-point inverse estimates ``mean_j log(T_k / T_j)`` (j < k) are averaged
    and the result inverted (the MacKay-Ghahramani pooling).  ``k=2`` gives the
    two-nearest-neighbour estimator.
    """
    X = _strip_zero_columns(np.asarray(X, dtype=float))
    n = X.shape[0]
    if k < 2:
        raise ValueError("k must be >= 2")
    if n <= k:
        raise InsufficientData(f"need more than k={k} points, got {n}")
    T = knn_distances(X, k)
    if np.any(T[:, 0] <= 0):
        raise DuplicatePoints(f"{int(np.sum(T[:, 0] <= 0))} points have a duplicate neighbour")
    inv = np.mean(np.log(T[:, -1:] / T[:, :-1]), axis=1)
    return float(1.0 / inv.mean())


def two_nn_dimension(X) -> float:
    """Intrinsic dimension from the ratio of second to first neighbour distance.

    Under local uniformity ``mu = T_2 / T_1`` is Pareto with index ``d``, whose
    maximum-likelihood estimate is ``n / sum(log mu)``.
    """
    X = _strip_zero_columns(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 3:
        raise InsufficientData(f"need at least 3 points, got {n}")
    T = knn_distances(X, 2)
    if np.any(T[:, 0] <= 0):
        raise DuplicatePoints(f"{int(np.sum(T[:, 0] <= 0))} points have a duplicate neighbour")
    return float(n / np.sum(np.log(T[:, 1] / T[:, 0])))


@dataclass
class DimReport:
    d_nom: int
    participation_ratio: float
    levina_bickel: float
    d95: int
    d99: int
    eigenvalues: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        return {
            "d_nom": self.d_nom,
            "participation_ratio": self.participation_ratio,
            "levina_bickel": self.levina_bickel,
            "d95": self.d95,
            "d99": self.d99,
        }


def dim_report(X, k: int = 10, lb_sample: int | None = None, rng: np.random.Generator | None = None) -> DimReport:
    """All three dimensionality estimates for one embedding matrix.

    ``lb_sample`` limits the Levina-Bickel estimate to a random row subset.
    """
    X = np.asarray(X, dtype=float)
    ev = covariance_spectrum(X)
    Xlb = X
    if lb_sample is not None and lb_sample < X.shape[0]:
        rng = rng or np.random.default_rng(0)
        Xlb = X[np.sort(rng.choice(X.shape[0], lb_sample, replace=False))]
    return DimReport(
        d_nom=X.shape[1],
        participation_ratio=participation_ratio(eigenvalues=ev),
        levina_bickel=levina_bickel(Xlb, k),
        d95=pca_variance_dims(fraction=0.95, eigenvalues=ev),
        d99=pca_variance_dims(fraction=0.99, eigenvalues=ev),
        eigenvalues=ev,
    )


# --------------------------------------------------------------------------
# semantic proximity test


# spread below this (relative to the mean difference) is rounding noise
_ZERO_SD = 1e-12


class SppResult(NamedTuple):
    t_stat: float
    p_value: float
    cohens_d: float
    degenerate: bool = False


def spp_test(related_sims, unrelated_sims, paired: bool = True) -> SppResult:
    """Two-sided t-test that related pairs are more similar than unrelated ones.

    Paired mode tests the per-item differences and reports Cohen's d of the
    difference distribution.  A zero-variance nonzero difference is returned
    as ``p=0`` with ``degenerate=True``.
    """
    r = np.asarray(related_sims, dtype=float)
    u = np.asarray(unrelated_sims, dtype=float)
    if paired:
        if r.shape != u.shape:
            raise InsufficientData("paired test needs equal-length arrays")
        if r.size < 2:
            raise InsufficientData("need at least two pairs")
        diff = r - u
        mean, sd, n = diff.mean(), diff.std(ddof=1), diff.size
        if sd <= _ZERO_SD * max(1.0, abs(mean)):
            if mean == 0:
                return SppResult(0.0, 1.0, 0.0, True)
            return SppResult(math.copysign(math.inf, mean), 0.0, math.copysign(math.inf, mean), True)
        t = mean / (sd / math.sqrt(n))
        p = 2.0 * _st.t.sf(abs(t), n - 1)
        return SppResult(float(t), float(p), float(mean / sd))
    if r.size < 2 or u.size < 2:
        raise InsufficientData("need at least two samples per group")
    nr, nu = r.size, u.size
    pooled = math.sqrt(((nr - 1) * r.var(ddof=1) + (nu - 1) * u.var(ddof=1)) / (nr + nu - 2))
    mean = r.mean() - u.mean()
    if pooled <= _ZERO_SD * max(1.0, abs(mean)):
        if mean == 0:
            return SppResult(0.0, 1.0, 0.0, True)
        return SppResult(math.copysign(math.inf, mean), 0.0, math.copysign(math.inf, mean), True)
    t = mean / (pooled * math.sqrt(1 / nr + 1 / nu))
    p = 2.0 * _st.t.sf(abs(t), nr + nu - 2)
    return SppResult(float(t), float(p), float(mean / pooled))
