"""Conformal outlier-detection e-values, unweighted and under covariate shift.

Scores follow the convention "large = more outlying".  Hypothesis ``j`` says
test point ``j`` is an inlier, i.e. exchangeable with (unweighted) or
weighted-exchangeable with (covariate shift, weight function ``w = dQ/dP``
up to a constant) the ``n`` calibration points.  Weights never need to be
normalized: every formula uses weight ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import BaseResampler
from .evalues import bh


# ---------------------------------------------------------------------------
# unweighted (exchangeable) case


def conformal_pvalues(calib, test) -> np.ndarray:
    """p_j = (1 + #{V_i >= V_{n+j}}) / (n + 1)."""
    calib = np.asarray(calib, dtype=float)
    test = np.asarray(test, dtype=float)
    counts = (calib[None, :] >= test[:, None]).sum(axis=1)
    return (1.0 + counts) / (calib.size + 1.0)


def conformal_threshold(calib, test, alpha: float) -> float:
    """Smallest score t with (m/(n+1)) (1 + #{V_i>=t}) / (#{V_test>=t} ∨ 1) <= alpha.

    Returns ``inf`` when no grid point qualifies.
    """
    calib = np.asarray(calib, dtype=float)
    test = np.asarray(test, dtype=float)
    n, m = calib.size, test.size
    grid = np.concatenate([calib, test])
    num = 1.0 + (calib[None, :] >= grid[:, None]).sum(axis=1)
    den = np.maximum((test[None, :] >= grid[:, None]).sum(axis=1), 1)
    ok = (m / (n + 1.0)) * num / den <= alpha
    return float(grid[ok].min()) if ok.any() else np.inf


def conformal_evalues(calib, test, alpha: float) -> np.ndarray:
    """e_j = (n+1) 1{V_{n+j} >= T} / (1 + #{V_i >= T}) with the shared threshold T."""
    calib = np.asarray(calib, dtype=float)
    test = np.asarray(test, dtype=float)
    T = conformal_threshold(calib, test, alpha)
    if not np.isfinite(T):
        return np.zeros(test.size)
    denom = 1.0 + (calib >= T).sum()
    return (calib.size + 1.0) * (test >= T) / denom


# ---------------------------------------------------------------------------
# weighted (covariate shift) case


@dataclass
class WeightedInstance:
    """Calibration/test scores with their covariate-shift weights."""

    calib_scores: np.ndarray
    calib_weights: np.ndarray
    test_scores: np.ndarray
    test_weights: np.ndarray

    def __post_init__(self):
        self.calib_scores = np.asarray(self.calib_scores, dtype=float)
        self.calib_weights = np.asarray(self.calib_weights, dtype=float)
        self.test_scores = np.asarray(self.test_scores, dtype=float)
        self.test_weights = np.asarray(self.test_weights, dtype=float)
        if self.calib_scores.shape != self.calib_weights.shape:
            raise ValueError("calibration scores/weights mismatch")
        if self.test_scores.shape != self.test_weights.shape:
            raise ValueError("test scores/weights mismatch")
        if (self.calib_weights <= 0).any() or (self.test_weights <= 0).any():
            raise ValueError("weights must be positive")

    @property
    def n(self) -> int:
        return self.calib_scores.size

    @property
    def m(self) -> int:
        return self.test_scores.size


def weighted_pvalues(inst: WeightedInstance) -> np.ndarray:
    """p_j = (w_{n+j} + sum_i w_i 1{V_i >= V_{n+j}}) / (w_{n+j} + sum_i w_i)."""
    wsum_ge = ((inst.calib_scores[None, :] >= inst.test_scores[:, None])
               * inst.calib_weights).sum(axis=1)
    wtot = inst.calib_weights.sum()
    return (inst.test_weights + wsum_ge) / (inst.test_weights + wtot)


def _fdphat_grid(inst: WeightedInstance):
    """Shared pieces of the per-test thresholds over the pooled score grid."""
    grid = np.concatenate([inst.calib_scores, inst.test_scores])
    S = ((inst.calib_scores[None, :] >= grid[:, None])
         * inst.calib_weights).sum(axis=1)                        # (n+m,)
    D = (inst.test_scores[None, :] >= grid[:, None]).sum(axis=1)  # (n+m,)
    return grid, S, D


def weighted_thresholds(inst: WeightedInstance, alpha: float) -> np.ndarray:
    """Per-test thresholds T_j.

    ``T_j = inf{t in pooled scores :
    m / (w_{n+j} + W) * (w_{n+j} + sum_i w_i 1{V_i>=t}) / (#{V_test>=t} ∨ 1)
    <= alpha}``, with ``W = sum_i w_i``; ``inf`` when no point qualifies.
    """
    grid, S, D = _fdphat_grid(inst)
    wtot = inst.calib_weights.sum()
    wj = inst.test_weights[:, None]
    fdp = inst.m / (wj + wtot) * (wj + S[None, :]) / np.maximum(D[None, :], 1)
    ok = fdp <= alpha
    out = np.full(inst.m, np.inf)
    any_ok = ok.any(axis=1)
    masked = np.where(ok, grid[None, :], np.inf)
    out[any_ok] = masked.min(axis=1)[any_ok]
    return out


def weighted_thresholds_alt(inst: WeightedInstance, alpha: float) -> np.ndarray:
    """Alternative thresholds with test j's own indicator in the numerator and
    ``1 + #{k != j : V_{n+k} >= t}`` in the denominator; measurable given the
    bag of calibration points plus test j and the other test points, and equal
    to T_j whenever V_{n+j} >= T_j."""
    grid, S, D = _fdphat_grid(inst)
    wtot = inst.calib_weights.sum()
    wj = inst.test_weights[:, None]
    own = (inst.test_scores[:, None] >= grid[None, :]).astype(float)
    num = wj * own + S[None, :]
    den = 1.0 + D[None, :] - own
    fdp = inst.m / (wj + wtot) * num / den
    ok = fdp <= alpha
    out = np.full(inst.m, np.inf)
    any_ok = ok.any(axis=1)
    masked = np.where(ok, grid[None, :], np.inf)
    out[any_ok] = masked.min(axis=1)[any_ok]
    return out


def weighted_evalues(inst: WeightedInstance, alpha: float,
                     thresholds: np.ndarray | None = None) -> np.ndarray:
    """e_j = (w_{n+j} + W) 1{V_{n+j} >= T_j} / (w_{n+j} + sum_i w_i 1{V_i >= T_j})."""
    if thresholds is None:
        thresholds = weighted_thresholds(inst, alpha)
    wtot = inst.calib_weights.sum()
    out = np.zeros(inst.m)
    for j in range(inst.m):
        T = thresholds[j]
        if not np.isfinite(T) or inst.test_scores[j] < T:
            continue
        denom = inst.test_weights[j] + (
            inst.calib_weights * (inst.calib_scores >= T)).sum()
        out[j] = (inst.test_weights[j] + wtot) / denom
    return out


def wcs_evalues(inst: WeightedInstance, alpha: float) -> np.ndarray:
    """Weighted-conformal-selection e-values 1{p_j <= alpha r_j / m}/(alpha r_j / m).

    ``r_j`` is the size of the BH rejection set on the auxiliary p-values
    ``p^{(j)}`` (test j's own entry replaced by 0).  Deterministically
    dominated by :func:`weighted_evalues`.
    """
    p = weighted_pvalues(inst)
    wtot = inst.calib_weights.sum()
    S = ((inst.calib_scores[None, :] >= inst.test_scores[:, None])
         * inst.calib_weights).sum(axis=1)  # sum_i w_i 1{V_i >= V_{n+l}}
    out = np.zeros(inst.m)
    for j in range(inst.m):
        own = inst.test_weights[j] * (
            inst.test_scores[j] >= inst.test_scores).astype(float)
        paux = (S + own) / (wtot + inst.test_weights[j])
        paux[j] = 0.0
        r = bh(paux, alpha).size
        level = alpha * max(r, 1) / inst.m
        if p[j] <= level:
            out[j] = 1.0 / level
    return out


# ---------------------------------------------------------------------------
# conditional resampling


def _swap(inst: WeightedInstance, j: int, pick: int) -> WeightedInstance:
    """Swap test point j with calibration point ``pick`` (or keep, pick == n)."""
    if pick == inst.n:
        return inst
    cs = inst.calib_scores.copy()
    cw = inst.calib_weights.copy()
    ts = inst.test_scores.copy()
    tw = inst.test_weights.copy()
    cs[pick], ts[j] = inst.test_scores[j], inst.calib_scores[pick]
    cw[pick], tw[j] = inst.test_weights[j], inst.calib_weights[pick]
    return WeightedInstance(cs, cw, ts, tw)


class ConformalResampler(BaseResampler):
    """Draw from the e-vector law given the bag of calibration points plus
    test j (and the other test points): test j's point is re-picked from the
    bag with probability proportional to its weight, the rest become the
    calibration set, and all thresholds/e-values are recomputed."""

    def __init__(self, inst: WeightedInstance, j: int, alpha: float):
        self.inst = inst
        self.j = j
        self.alpha = alpha
        self._bag_w = np.concatenate([inst.calib_weights, [inst.test_weights[j]]])
        self._probs = self._bag_w / self._bag_w.sum()

    def _evec(self, pick: int) -> np.ndarray:
        swapped = _swap(self.inst, self.j, pick)
        return weighted_evalues(swapped, self.alpha)

    def draw(self, rng) -> np.ndarray:
        pick = rng.choice(self._probs.size, p=self._probs)
        return self._evec(int(pick))

    def exact_support(self):
        # deduplicate identical (score, weight) picks: they give the same world
        inst = self.inst
        keys = {}
        for pick in range(inst.n + 1):
            if pick < inst.n:
                key = (inst.calib_scores[pick], inst.calib_weights[pick])
            else:
                key = (inst.test_scores[self.j], inst.test_weights[self.j])
            if key in keys:
                keys[key][1] += self._probs[pick]
            else:
                keys[key] = [pick, self._probs[pick]]
        return [(self._evec(pick), p) for pick, p in keys.values()]

    def conditional_budget(self):
        # the weighted conformal e-value has conditional mean exactly 1
        return 1.0


class ConformalExactInstance:
    """Adapter exposing a weighted conformal problem to multi-round
    calibration: resampled worlds are swapped instances."""

    def __init__(self, inst: WeightedInstance, alpha: float):
        self.inst = inst
        self.alpha = alpha
        self._e = weighted_evalues(inst, alpha)

    def evalues(self) -> np.ndarray:
        return self._e

    def exact_support(self, j: int):
        rs = ConformalResampler(self.inst, j, self.alpha)
        out = []
        seen = {}
        for pick in range(self.inst.n + 1):
            if pick < self.inst.n:
                key = (self.inst.calib_scores[pick], self.inst.calib_weights[pick])
            else:
                key = (self.inst.test_scores[j], self.inst.test_weights[j])
            if key in seen:
                out[seen[key]][1] += rs._probs[pick]
            else:
                seen[key] = len(out)
                out.append([ConformalExactInstance(_swap(self.inst, j, pick),
                                                   self.alpha),
                            rs._probs[pick]])
        return [(sub, p) for sub, p in out]

    def cache_key(self):
        return (self.inst.calib_scores.tobytes(), self.inst.calib_weights.tobytes(),
                self.inst.test_scores.tobytes(), self.inst.test_weights.tobytes())
