"""DRM false recall: centroid-similarity recognition and lure convexity.

A list is probed by the cosine between a probe word and the (normalised)
centroid of the studied words.  The convexity analysis measures how far the
critical lure sits from the convex hull of the studied vectors and checks the
resulting lower bound on the lure's score.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import NonConvergence

THETA_GRID = np.round(np.arange(0.50, 0.95 + 1e-9, 0.01), 2)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


@dataclass
class ConvexityReport:
    delta_star: float
    weights: np.ndarray
    margin: float
    tau: float
    lure_score: float
    theorem_bound: float
    accepted: bool
    iterations: int = 0
    grad_norm: float = 0.0


class Theorem4Check(NamedTuple):
    bound_holds: bool  # lure_score >= tau + m - delta_star
    premise_holds: bool  # delta_star < m, acceptance is then forced
    status: str  # "guaranteed" or "not guaranteed"


def _grad_map_norm(G, h, a, L) -> float:
    g = G @ a - h
    return float(L * np.linalg.norm(a - project_simplex(a - g / L)))


def _polish(G, h, a, tol):
    """Solve the equality-constrained problem on the current support exactly."""
    supp = np.flatnonzero(a > 1e-12)
    k = supp.size
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G[np.ix_(supp, supp)]
    K[:k, k] = K[k, :k] = 1.0
    rhs = np.concatenate([h[supp], [1.0]])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    if np.any(sol[:k] < 0):
        return None
    b = np.zeros_like(a)
    b[supp] = sol[:k]
    return b / b.sum()


def delta_convexity(
    lure,
    studied: Sequence,
    tau: float = 0.0,
    query=None,
    margin: float | None = None,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> ConvexityReport:
    """Distance from ``lure`` to the convex hull of ``studied``.

    Minimises ``||lure - sum_i a_i studied_i||`` over simplex weights by
    accelerated projected gradient (step ``1/L``, ``L`` the top eigenvalue of
    the Gram matrix) with restarts, stopping once the projected-gradient norm
    falls below ``tol``.  Scores are inner products with the unit ``query``
    (default: the normalised studied centroid); ``margin`` defaults to the
    smallest studied score minus ``tau``.
    """
    X = np.asarray(studied, dtype=float)
    c = np.asarray(lure, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two studied vectors")
    k = X.shape[0]
    G = X @ X.T
    h = X @ c
    L = float(np.linalg.eigvalsh(G)[-1])
    a = np.full(k, 1.0 / k)
    y, t = a.copy(), 1.0
    gnorm = _grad_map_norm(G, h, a, L)
    it = 0
    while gnorm >= tol:
        if it >= max_iter:
            raise NonConvergence(
                f"simplex least squares stalled after {max_iter} iterations (gradient norm {gnorm:.3g})",
                residual=gnorm,
                iterations=it,
            )
        it += 1
        a_new = project_simplex(y - (G @ y - h) / L)
        if (y - a_new) @ (a_new - a) > 0:
            # momentum points uphill: restart from the plain step
            t, y = 1.0, a_new.copy()
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = a_new + ((t - 1.0) / t_new) * (a_new - a)
            t = t_new
        a = a_new
        gnorm = _grad_map_norm(G, h, a, L)
        if it % 50 == 0 and gnorm >= tol:
            b = _polish(G, h, a, tol)
            if b is not None:
                gb = _grad_map_norm(G, h, b, L)
                if gb < gnorm:
                    a, y, t, gnorm = b, b.copy(), 1.0, gb
    delta = float(np.linalg.norm(c - a @ X))
    q = X.mean(axis=0) if query is None else np.asarray(query, dtype=float)
    q = q / np.linalg.norm(q)
    scores = X @ q
    m = float(scores.min() - tau) if margin is None else float(margin)
    lure_score = float(c @ q)
    return ConvexityReport(
        delta_star=delta,
        weights=a,
        margin=m,
        tau=float(tau),
        lure_score=lure_score,
        theorem_bound=float(tau + m - delta),
        accepted=bool(lure_score >= tau),
        iterations=it,
        grad_norm=gnorm,
    )


def theorem4_check(report: ConvexityReport, atol: float = 1e-9) -> Theorem4Check:
    """Whether the lure-score lower bound holds and whether acceptance is forced."""
    holds = report.lure_score >= report.theorem_bound - atol
    premise = report.delta_star < report.margin
    return Theorem4Check(bool(holds), bool(premise), "guaranteed" if premise else "not guaranteed")


def centroid_scores(lst) -> tuple[np.ndarray, float, float]:
    """Cosine of studied words, lure and unrelated probe to the list centroid."""
    X = np.asarray(lst.studied, dtype=float)
    q = X.mean(axis=0)
    q = q / np.linalg.norm(q)

    def cos(v):
        v = np.asarray(v, dtype=float)
        return float(np.clip(v @ q / np.linalg.norm(v), -1.0, 1.0))

    studied = np.clip(X @ q / np.linalg.norm(X, axis=1), -1.0, 1.0)
    return studied, cos(lst.lure), cos(lst.unrelated_probe)


@dataclass
class DrmSweep:
    theta: np.ndarray
    hit: np.ndarray
    lure_fa: np.ndarray
    unrelated_fa: np.ndarray
    calibrated_theta: float | None
    list_ids: list
    studied_scores: np.ndarray  # (n_lists, n_studied)
    lure_scores: np.ndarray
    unrelated_scores: np.ndarray
    convexity: list = field(default_factory=list)  # ConvexityReport per list
    checks: list = field(default_factory=list)  # Theorem4Check per list
    overlap: bool = False

    def at(self, theta: float) -> dict:
        i = int(np.argmin(np.abs(self.theta - theta)))
        return {"theta": float(self.theta[i]), "hit": float(self.hit[i]), "lure_fa": float(self.lure_fa[i]), "unrelated_fa": float(self.unrelated_fa[i])}

    @property
    def premise_count(self) -> int:
        return sum(c.premise_holds for c in self.checks)


def run_drm(lists: Sequence, theta_grid=THETA_GRID, convexity: bool = True) -> DrmSweep:
    """Threshold sweep of hit, lure and unrelated false-alarm rates.

    The calibrated threshold is the smallest grid value at which no list's
    unrelated probe is accepted.  At that threshold each list also gets a
    convexity report with ``tau`` equal to the threshold.
    """
    if not lists:
        raise ValueError("need at least one list")
    theta = np.asarray(theta_grid, dtype=float)
    st, lu, un = [], [], []
    for lst in lists:
        s, l_, u = centroid_scores(lst)
        st.append(s)
        lu.append(l_)
        un.append(u)
    st = np.array(st)
    lu = np.array(lu)
    un = np.array(un)
    hit = (st[None, :, :] >= theta[:, None, None]).mean(axis=(1, 2))
    lure_fa = (lu[None, :] >= theta[:, None]).mean(axis=1)
    unrel_fa = (un[None, :] >= theta[:, None]).mean(axis=1)
    ok = np.flatnonzero(unrel_fa == 0)
    cal = float(theta[ok[0]]) if ok.size else None
    overlap = bool(un.max() >= st.min())
    if overlap:
        warnings.warn("unrelated probe scores overlap studied scores; threshold calibration is unreliable", stacklevel=2)
    if cal is None:
        warnings.warn("no grid threshold rejects every unrelated probe", stacklevel=2)
    sweep = DrmSweep(theta, hit, lure_fa, unrel_fa, cal, [lst.list_id for lst in lists], st, lu, un, overlap=overlap)
    if convexity and cal is not None:
        for lst in lists:
            rep = delta_convexity(lst.lure, lst.studied, tau=cal)
            sweep.convexity.append(rep)
            sweep.checks.append(theorem4_check(rep))
    return sweep
