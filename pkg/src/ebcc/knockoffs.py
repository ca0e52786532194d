"""Model-X Gaussian knockoffs, derandomized knockoff e-values, and the
conditional-randomization resampler used to boost them.

The design rows are i.i.d. ``N(mu, Sigma)`` with ``Sigma`` known.  Variable
importances are lasso coefficient differences on the augmented design; the
knockoff filter's stopping rule is converted into e-values that e-BH can
consume, and independent knockoff draws are averaged to derandomize them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import Lasso


# ---------------------------------------------------------------------------
# knockoff construction


def s_matrix(Sigma, method: str = "equi", tol: float = 1e-10,
             max_iter: int = 50) -> np.ndarray:
    """Diagonal of the knockoff gap matrix S (returned as a vector).

    ``equi``: equicorrelated choice ``min(2 lambda_min(Sigma), min_j Sigma_jj)``
    for every coordinate.  ``mvr``: coordinate descent on the joint-precision
    objective ``Tr((2 Sigma - S)^{-1}) + sum_j 1/s_j``; each coordinate update
    has the closed form ``s_j = 1 / (sqrt((M^{-2})_jj) + (M^{-1})_jj)`` with
    ``M = 2 Sigma - S + s_j e_j e_j'``, which is strictly feasible.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    m = Sigma.shape[0]
    lam_min = np.linalg.eigvalsh(Sigma)[0]
    if lam_min <= 0:
        raise ValueError("Sigma must be positive definite")
    equi = min(2.0 * lam_min, np.diag(Sigma).min()) * np.ones(m)
    if method == "equi":
        return equi
    if method != "mvr":
        raise ValueError(f"unknown method {method!r}")
    s = 0.999 * equi  # strictly feasible start
    prev = np.inf
    for _ in range(max_iter):
        M = 2.0 * Sigma - np.diag(s)
        Minv = np.linalg.inv(M)
        obj = np.trace(Minv) + np.sum(1.0 / s)
        for j in range(m):
            Mj = 2.0 * Sigma - np.diag(s)
            Mj[j, j] += s[j]
            Minv_j = np.linalg.inv(Mj)
            a = (Minv_j @ Minv_j)[j, j]
            b = Minv_j[j, j]
            s[j] = 1.0 / (np.sqrt(a) + b)
        if abs(prev - obj) <= tol * (1.0 + abs(obj)):
            break
        prev = obj
    return s


@dataclass
class GaussianModel:
    """Known design law N(mu, Sigma) plus a chosen knockoff gap vector."""

    mu: np.ndarray
    Sigma: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.Sigma = np.asarray(self.Sigma, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        Sinv_s = np.linalg.solve(self.Sigma, np.diag(self.s))
        self._mean_mult = Sinv_s                     # Sigma^{-1} S
        C = 2.0 * np.diag(self.s) - np.diag(self.s) @ Sinv_s
        C = 0.5 * (C + C.T)
        w, V = np.linalg.eigh(C)
        self._chol = V * np.sqrt(np.maximum(w, 0.0))

    @classmethod
    def from_sigma(cls, mu, Sigma, method: str = "equi") -> "GaussianModel":
        return cls(mu, Sigma, s_matrix(Sigma, method))


def sample_knockoffs(X, model: GaussianModel, rng) -> np.ndarray:
    """Row-wise Gaussian knockoffs: X~ ~ N(X - (X-mu) Sigma^{-1} S, 2S - S Sigma^{-1} S)."""
    X = np.asarray(X, dtype=float)
    mean = X - (X - model.mu) @ model._mean_mult
    noise = rng.standard_normal(X.shape) @ model._chol.T
    return mean + noise


# ---------------------------------------------------------------------------
# importance statistics and filter


def lcd_stats(X, Xk, y, lam: float) -> np.ndarray:
    """Lasso coefficient-difference statistics W_j = |b_j| - |b_{j+m}|.

    Fits the lasso at penalty ``lam`` on the column-standardized augmented
    design [X, Xk] with an intercept; ``lam = 0`` falls back to least
    squares.
    """
    X = np.asarray(X, dtype=float)
    Xk = np.asarray(Xk, dtype=float)
    y = np.asarray(y, dtype=float)
    m = X.shape[1]
    A = np.hstack([X, Xk])
    A = A - A.mean(axis=0)
    sd = A.std(axis=0)
    sd[sd == 0] = 1.0
    A = A / sd
    yc = y - y.mean()
    if lam <= 0:
        beta, *_ = np.linalg.lstsq(A, yc, rcond=None)
    else:
        fit = Lasso(alpha=lam, fit_intercept=False, max_iter=10000, tol=1e-8)
        fit.fit(A, yc)
        beta = fit.coef_
    return np.abs(beta[:m]) - np.abs(beta[m:])


def knockoff_threshold(W, alpha: float, variant: str = "early_stop") -> float:
    """Data-dependent threshold of the knockoff filter.

    Scans ``t`` over the positive magnitudes of W in increasing order and
    returns the first with ``(1 + #{W_k <= -t}) / #{W_k >= t} <= alpha``;
    the ``early_stop`` variant additionally accepts any ``t`` where fewer
    than ``1/alpha`` statistics remain at or above it.  Returns ``inf``
    when no candidate qualifies.
    """
    W = np.asarray(W, dtype=float)
    if variant not in ("standard", "early_stop"):
        raise ValueError(f"unknown variant {variant!r}")
    for t in np.unique(np.abs(W[W != 0])):
        npos = (W >= t).sum()
        ok = npos > 0 and (1.0 + (W <= -t).sum()) / npos <= alpha
        if variant == "early_stop":
            ok = ok or npos < 1.0 / alpha
        if ok:
            return float(t)
    return np.inf


def knockoff_rejections(W, alpha: float) -> np.ndarray:
    """The knockoff filter itself: {j : W_j >= T} at the standard threshold."""
    T = knockoff_threshold(W, alpha, variant="standard")
    return np.flatnonzero(np.asarray(W) >= T).astype(np.int64)


def knockoff_evalues(W, alpha_kn: float, variant: str = "early_stop") -> np.ndarray:
    """e_j = m 1{W_j >= T} / (1 + #{W_k <= -T}) at the (early-stopped) threshold."""
    W = np.asarray(W, dtype=float)
    T = knockoff_threshold(W, alpha_kn, variant)
    if not np.isfinite(T):
        return np.zeros(W.size)
    return W.size * (W >= T) / (1.0 + (W <= -T).sum())


def derandomized_evalues(X, y, model: GaussianModel, rng, d: int,
                         alpha_kn: float, lam: float,
                         variant: str = "early_stop") -> np.ndarray:
    """Average the knockoff e-values over ``d`` independent knockoff draws."""
    m = np.asarray(X).shape[1]
    acc = np.zeros(m)
    for _ in range(d):
        Xk = sample_knockoffs(X, model, rng)
        W = lcd_stats(X, Xk, y, lam)
        acc += knockoff_evalues(W, alpha_kn, variant)
    return acc / d


# ---------------------------------------------------------------------------
# conditional randomization resampler


class KnockoffCRTResampler:
    """Redraws design column j from its Gaussian conditional given the other
    columns, then recomputes the derandomized knockoff e-values with fresh
    knockoff noise.  No closed-form conditional budget exists."""

    def __init__(self, X, y, model: GaussianModel, j: int, d: int,
                 alpha_kn: float, lam: float, variant: str = "early_stop"):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.model = model
        self.j = j
        self.d = d
        self.alpha_kn = alpha_kn
        self.lam = lam
        self.variant = variant
        m = self.X.shape[1]
        keep = np.arange(m) != j
        Soo = model.Sigma[np.ix_(keep, keep)]
        soj = model.Sigma[keep, j]
        coef = np.linalg.solve(Soo, soj)
        self._keep = keep
        self._coef = coef
        self._cond_mean = model.mu[j] + (self.X[:, keep] - model.mu[keep]) @ coef
        self._cond_sd = np.sqrt(model.Sigma[j, j] - soj @ coef)

    def draw(self, rng) -> np.ndarray:
        Xnew = self.X.copy()
        Xnew[:, self.j] = self._cond_mean + self._cond_sd * rng.standard_normal(
            self.X.shape[0])
        return derandomized_evalues(Xnew, self.y, self.model, rng, self.d,
                                    self.alpha_kn, self.lam, self.variant)

    def draw_batch(self, rng, n: int) -> np.ndarray:
        return np.stack([self.draw(rng) for _ in range(n)])

    def exact_support(self):
        return None

    def conditional_budget(self):
        return None
