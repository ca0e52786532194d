"""Core rejection procedures for e-values and p-values.

Conventions used throughout the package:

* hypotheses are indexed ``0..m-1``;
* an e-value vector is a 1-d float array with nonnegative entries
  (``inf`` is allowed, ``nan`` is not);
* a rejection set is a sorted 1-d integer array of hypothesis indices.
"""

from __future__ import annotations

import numpy as np


def _as_evalues(e) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    if e.ndim != 1 or e.size == 0:
        raise ValueError("expected a non-empty 1-d array of e-values")
    if np.isnan(e).any() or (e < 0).any():
        raise ValueError("e-values must be nonnegative and not NaN")
    return e


def ebh(e, alpha: float) -> np.ndarray:
    """e-BH rejection set at level ``alpha``.

    Rejects the k* largest e-values where k* is the largest k with
    ``e_(k) >= m / (alpha * k)`` (``e_(k)`` the k-th largest value);
    every hypothesis tied with the threshold is rejected.
    """
    e = _as_evalues(e)
    if not (0 < alpha <= 1):
        raise ValueError("alpha must be in (0, 1]")
    m = e.size
    order = np.sort(e)[::-1]
    k = np.arange(1, m + 1)
    ok = order >= m / (alpha * k)
    if not ok.any():
        return np.empty(0, dtype=np.int64)
    kstar = k[ok].max()
    thresh = m / (alpha * kstar)
    return np.flatnonzero(e >= thresh).astype(np.int64)


def ebh_batch(E: np.ndarray, alpha: float) -> np.ndarray:
    """Sizes of the e-BH rejection sets for each row of ``E``.

    Vectorized helper for Monte-Carlo loops where only ``|R|`` per draw is
    needed alongside a per-row membership test done by the caller.
    """
    E = np.asarray(E, dtype=float)
    m = E.shape[1]
    order = np.sort(E, axis=1)[:, ::-1]
    k = np.arange(1, m + 1)
    ok = order >= m / (alpha * k)
    kstar = np.where(ok.any(axis=1), m - np.argmax(ok[:, ::-1], axis=1), 0)
    return kstar.astype(np.int64)


def bh(p, alpha: float) -> np.ndarray:
    """Benjamini-Hochberg rejection set at level ``alpha``.

    Rejects the k* smallest p-values where k* is the largest k with
    ``p_(k) <= alpha * k / m``.  Values above one are clamped to one
    (they can arise from weighted constructions and never reject).
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("expected a non-empty 1-d array of p-values")
    if np.isnan(p).any() or (p < 0).any():
        raise ValueError("p-values must be nonnegative and not NaN")
    if not (0 < alpha <= 1):
        raise ValueError("alpha must be in (0, 1]")
    p = np.minimum(p, 1.0)
    m = p.size
    order = np.sort(p)
    k = np.arange(1, m + 1)
    ok = order <= alpha * k / m
    if not ok.any():
        return np.empty(0, dtype=np.int64)
    kstar = k[ok].max()
    return np.flatnonzero(p <= alpha * kstar / m).astype(np.int64)


def fdp(rejected, nulls) -> float:
    """False discovery proportion: |R ∩ nulls| / max(|R|, 1)."""
    rejected = np.asarray(rejected, dtype=np.int64)
    nulls = set(np.asarray(nulls, dtype=np.int64).tolist())
    if rejected.size == 0:
        return 0.0
    nfalse = sum(1 for j in rejected.tolist() if j in nulls)
    return nfalse / rejected.size


def power(rejected, non_nulls) -> float:
    """True positive proportion: |R ∩ non-nulls| / max(|non-nulls|, 1)."""
    rejected = np.asarray(rejected, dtype=np.int64)
    non_nulls = set(np.asarray(non_nulls, dtype=np.int64).tolist())
    if not non_nulls:
        return 0.0
    hits = sum(1 for j in rejected.tolist() if j in non_nulls)
    return hits / len(non_nulls)


def self_consistent(e, alpha: float, rejected) -> bool:
    """Check ``j in R  <=>  e_j >= m / (alpha * |R|)`` (vacuous for empty R)."""
    e = _as_evalues(e)
    rejected = np.asarray(rejected, dtype=np.int64)
    if rejected.size == 0:
        return True
    thresh = e.size / (alpha * rejected.size)
    inset = np.zeros(e.size, dtype=bool)
    inset[rejected] = True
    return bool(np.all(inset == (e >= thresh)))
