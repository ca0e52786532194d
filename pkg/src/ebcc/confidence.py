"""Confidence intervals and anytime-valid confidence sequences for a mean.

Three constructions, all used by the calibration layer to decide whether a
conditional expectation lies below a budget:

* :func:`bernstein_ci` -- fixed-sample empirical-Bernstein interval for
  bounded variables.
* :class:`HedgedCS` -- capital-process (betting) confidence sequence for
  variables in [0, 1]; exact, time-uniform coverage.
* :class:`AsymptoticCS` -- Gaussian-mixture asymptotic confidence sequence;
  no boundedness assumption, approximate coverage.
* :func:`hybrid_cs` -- sequential driver that runs the hedged sequence on a
  first block of (rescaled) samples and falls back to the asymptotic one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar


def bernstein_ci(x, alpha: float, lo: float, hi: float) -> tuple[float, float]:
    """Empirical-Bernstein confidence interval for the mean of bounded draws.

    Half width is ``sqrt(2 V ln(3/alpha) / K) + 3 (hi-lo) ln(3/alpha) / K``
    with ``V`` the sample variance.
    """
    x = np.asarray(x, dtype=float)
    K = x.size
    if K < 2:
        raise ValueError("need at least two samples")
    if hi <= lo:
        raise ValueError("invalid bounds")
    mean = x.mean()
    v = x.var(ddof=1)
    logterm = np.log(3.0 / alpha)
    half = np.sqrt(2.0 * v * logterm / K) + 3.0 * (hi - lo) * logterm / K
    return mean - half, mean + half


class HedgedCS:
    """Betting confidence sequence for the mean of [0, 1]-valued variables.

    For each candidate mean ``q`` on a uniform grid, long and short capital
    processes are grown by the factors ``1 + lam_t (x_t - q)`` and
    ``1 - lam_t (x_t - q)``; ``q`` stays in the interval while
    ``max(long, short) < 1/alpha``.  The bet size is
    ``lam_t = sqrt(2 ln(2/alpha) / (sigma2_{t-1} t))``, clipped per
    candidate so capital cannot go negative.
    """

    def __init__(self, alpha: float, grid_size: int = 1024):
        if not (0 < alpha < 1):
            raise ValueError("alpha must be in (0, 1)")
        self.alpha = alpha
        self.grid = np.linspace(0.0, 1.0, grid_size)
        self.log_cap_long = np.zeros(grid_size)
        self.log_cap_short = np.zeros(grid_size)
        self.t = 0
        self._sum = 0.0
        self._sumsq_dev = 0.0  # running sum of (x_i - muhat_{i-1})^2
        self._mu = 0.5
        self._sigma2 = 0.25
        # clip limits keep 1 +/- lam (x - q) bounded away from zero
        with np.errstate(divide="ignore"):
            self._cap_long = np.where(self.grid > 0, 0.5 / self.grid, np.inf)
            self._cap_short = np.where(self.grid < 1, 0.5 / (1.0 - self.grid), np.inf)

    def update(self, batch) -> None:
        batch = np.asarray(batch, dtype=float)
        if batch.size and (batch.min() < 0 or batch.max() > 1):
            raise ValueError("hedged CS requires samples in [0, 1]")
        log2a = np.log(2.0 / self.alpha)
        for x in batch:
            self.t += 1
            lam = np.sqrt(2.0 * log2a / (self._sigma2 * self.t))
            lam_long = np.minimum(lam, self._cap_long)
            lam_short = np.minimum(lam, self._cap_short)
            dev = x - self.grid
            self.log_cap_long += np.log1p(lam_long * dev)
            self.log_cap_short += np.log1p(-lam_short * dev)
            # predictable running mean / variance with a flat prior
            self._sum += x
            self._sumsq_dev += (x - self._mu) ** 2
            self._mu = (0.5 + self._sum) / (self.t + 1)
            self._sigma2 = (0.25 + self._sumsq_dev) / (self.t + 1)

    def interval(self) -> tuple[float, float]:
        thresh = np.log(1.0 / self.alpha)
        keep = np.maximum(self.log_cap_long, self.log_cap_short) < thresh
        if not keep.any():
            mu = self._sum / max(self.t, 1)
            return mu, mu
        qs = self.grid[keep]
        return float(qs.min()), float(qs.max())


class AsymptoticCS:
    """Asymptotic anytime-valid confidence sequence around the running mean.

    Radius after k samples is
    ``sigma_k * sqrt(2 (rho^2 k + 1) / (k^2 rho^2) * ln(sqrt(rho^2 k + 1) / alpha))``.
    ``rho`` is tuned to minimize the radius at a target sample count.
    """

    def __init__(self, alpha: float, target_k: int):
        if not (0 < alpha < 1):
            raise ValueError("alpha must be in (0, 1)")
        self.alpha = alpha
        self.rho = _tune_rho(alpha, max(target_k, 2))
        self.k = 0
        self.mean = 0.0
        self._m2 = 0.0

    def update(self, batch) -> None:
        batch = np.asarray(batch, dtype=float)
        for x in batch:  # Welford
            self.k += 1
            d = x - self.mean
            self.mean += d / self.k
            self._m2 += d * (x - self.mean)

    def interval(self) -> tuple[float, float]:
        if self.k < 2:
            return -np.inf, np.inf
        var = self._m2 / self.k
        if var <= 0.0:
            eps = 1e-12 * (1.0 + abs(self.mean))
            return self.mean - eps, self.mean + eps
        r = _acs_radius(np.sqrt(var), self.k, self.rho, self.alpha)
        return self.mean - r, self.mean + r


def _acs_radius(sigma: float, k: int, rho: float, alpha: float) -> float:
    a = rho * rho * k + 1.0
    return sigma * np.sqrt(2.0 * a / (k * k * rho * rho) * np.log(np.sqrt(a) / alpha))


def _tune_rho(alpha: float, k0: int) -> float:
    res = minimize_scalar(
        lambda lr: _acs_radius(1.0, k0, np.exp(lr), alpha),
        bounds=(-20.0, 5.0),
        method="bounded",
    )
    return float(np.exp(res.x))


@dataclass
class HybridResult:
    decision: bool          # True if the mean was certified <= target
    lower: float
    upper: float
    samples_used: int
    stop_reason: str        # "below-target" | "above-target" | "budget-exhausted"


def hybrid_cs(
    draw_batch,
    alpha_cs: float,
    target: float,
    exact_budget: int,
    asymptotic_budget: int,
    batch_size: int = 100,
    bounds: tuple[float, float] | None = None,
) -> HybridResult:
    """Sequentially test whether a mean is ``<= target``.

    ``draw_batch(n)`` must return ``n`` fresh i.i.d. samples.  With ``bounds``
    given, the first ``exact_budget`` samples feed a hedged confidence
    sequence on the rescaled values; afterwards (or with ``bounds=None``, from
    the start) an asymptotic sequence on the raw values takes over.  Stops as
    soon as the current interval puts the mean entirely on one side of
    ``target``.
    """
    if bounds is not None and bounds[1] <= bounds[0]:
        raise ValueError("invalid bounds")
    use_hedged = bounds is not None and exact_budget > 0
    total_budget = exact_budget + asymptotic_budget
    hedged = HedgedCS(alpha_cs) if use_hedged else None
    asy = AsymptoticCS(alpha_cs, target_k=max(total_budget, 2))
    used = 0
    lower, upper = -np.inf, np.inf
    while used < total_budget:
        n = min(batch_size, total_budget - used)
        batch = np.asarray(draw_batch(n), dtype=float)
        if batch.size != n:
            raise ValueError("draw_batch returned wrong number of samples")
        used += n
        asy.update(batch)
        if hedged is not None and used <= exact_budget:
            lo, hi = bounds
            scaled = (batch - lo) / (hi - lo)
            hedged.update(np.clip(scaled, 0.0, 1.0))
            slo, shi = hedged.interval()
            lower, upper = lo + slo * (hi - lo), lo + shi * (hi - lo)
        else:
            lower, upper = asy.interval()
        if upper <= target:
            return HybridResult(True, lower, upper, used, "below-target")
        if lower > target:
            return HybridResult(False, lower, upper, used, "above-target")
    return HybridResult(False, lower, upper, used, "budget-exhausted")
