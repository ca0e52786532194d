"""Conditional calibration of e-values ("boosting").

Given generalized e-values ``e`` and, for each hypothesis ``j``, a resampler
for the conditional null law of the whole e-vector given a sufficient
statistic ``S_j``, each candidate ``j`` is either *boosted* to the value

    m / (alpha_cc * |ebh(e, alpha_cc) ∪ {j}|)

or zeroed out, in a way that keeps the boosted vector a valid generalized
e-value family.  The boost decision tests whether the conditional mean

    phi_j = E[ (m/alpha_cc) * 1{ e~_j / e_j >= |R_j(e)| / |R_j(e~)| }
               / |R_j(e~)|  -  e~_j  |  S_j ]

is <= 0, where ``R_j(x) = ebh(x, alpha_cc) ∪ {j}``.  The test is run either
exactly (finite-support resamplers), or sequentially with an anytime-valid
confidence sequence, or with a fixed-sample Bernstein interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, runtime_checkable

import numpy as np

from .confidence import HybridResult, bernstein_ci, hybrid_cs
from .evalues import ebh, ebh_batch


@runtime_checkable
class Resampler(Protocol):
    """Conditional resampler of the e-value vector given S_j."""

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """One draw of the full e-vector with coordinate j resampled."""
        ...

    def draw_batch(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n draws stacked as rows; default implementations loop draw()."""
        ...

    def exact_support(self):
        """List of (e-vector, probability) atoms, or None if uncountable."""
        ...

    def conditional_budget(self):
        """E[e~_j | S_j] when known in closed form, else None."""
        ...


class BaseResampler:
    """Mixin supplying the generic pieces of the Resampler protocol."""

    def draw_batch(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.stack([self.draw(rng) for _ in range(n)])

    def exact_support(self):
        return None

    def conditional_budget(self):
        return None


@dataclass
class CCConfig:
    alpha: float
    alpha0: float = 0.0
    alpha_cc: float | None = None   # defaults to alpha
    exact_cs_budget: int = 3000
    asymptotic_cs_budget: int = 2000
    batch_size: int = 100
    prefer_exact: bool = True       # use finite-support oracle when offered

    def __post_init__(self):
        if self.alpha_cc is None:
            self.alpha_cc = self.alpha


@dataclass
class BoostOutcome:
    index: int
    status: str            # "boosted-direct" | "boosted" | "not-boosted" | "skipped"
    value: float           # boosted e-value actually assigned
    samples_used: int = 0
    lower: float = np.nan
    upper: float = np.nan

    @property
    def boosted(self) -> bool:
        return self.status in ("boosted-direct", "boosted")


def _rhat_size(e: np.ndarray, j: int, alpha_cc: float) -> int:
    r = ebh(e, alpha_cc)
    return r.size if j in r else r.size + 1


def mc_sample(e, j: int, e_tilde, alpha_cc: float) -> tuple[float, float]:
    """One Monte-Carlo sample of the boost criterion at hypothesis ``j``.

    Returns ``(indicator_term, difference_term)`` where
    ``difference_term = indicator_term - e_tilde[j]`` and the expectation of
    ``difference_term`` over the resampling law is ``phi_j``.
    """
    e = np.asarray(e, dtype=float)
    e_tilde = np.asarray(e_tilde, dtype=float)
    m = e.size
    if e[j] <= 0:
        raise ValueError("mc_sample requires e_j > 0")
    r0 = _rhat_size(e, j, alpha_cc)
    r1 = _rhat_size(e_tilde, j, alpha_cc)
    ind = 0.0
    if e_tilde[j] / e[j] >= r0 / r1:
        ind = (m / alpha_cc) / r1
    return ind, ind - e_tilde[j]


def mc_sample_batch(e, j: int, E_tilde, alpha_cc: float,
                    scale: np.ndarray | float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`mc_sample` over rows of ``E_tilde``.

    ``scale`` multiplies both ``e`` and the draws before the rejection-set
    computations (used for boosting an already rescaled target vector while
    the resampler produces draws on the original scale); the subtracted term
    stays on the original scale.
    """
    e = np.asarray(e, dtype=float)
    E_tilde = np.atleast_2d(np.asarray(E_tilde, dtype=float))
    m = e.size
    es = e * scale
    Es = E_tilde * scale
    if es[j] <= 0:
        raise ValueError("requires scaled e_j > 0")
    r0 = _rhat_size(es, j, alpha_cc)
    k1 = ebh_batch(Es, alpha_cc)
    thresh = np.where(k1 > 0, m / (alpha_cc * np.maximum(k1, 1)), np.inf)
    member = Es[:, j] >= thresh
    r1 = k1 + (~member).astype(np.int64)
    ind = np.where(Es[:, j] / es[j] >= r0 / r1, (m / alpha_cc) / r1, 0.0)
    return ind, ind - E_tilde[:, j]


def phi_exact(e, j: int, support: Iterable[tuple[np.ndarray, float]],
              alpha_cc: float) -> float:
    """Exact value of ``phi_j`` for a finite-support resampler."""
    total = 0.0
    psum = 0.0
    for atom, p in support:
        _, diff = mc_sample(e, j, atom, alpha_cc)
        total += p * diff
        psum += p
    if not np.isclose(psum, 1.0, atol=1e-8):
        raise ValueError("support probabilities must sum to 1")
    return total


def budget_mode_select(resampler) -> tuple[str, float]:
    """Pick the sampling mode for the sequential boost test.

    When ``E[e~_j | S_j]`` is known to equal some ``B``, the test targets the
    mean of the bounded indicator terms against ``B`` ("budget" mode, hedged
    then asymptotic CS).  Otherwise it targets the mean of the unbounded
    difference terms against 0 ("difference" mode, asymptotic CS only).
    """
    b = resampler.conditional_budget()
    if b is not None:
        return "budget", float(b)
    return "difference", 0.0


def _sample_stream(e, j, resampler, alpha_cc, rng, mode, scale=1.0):
    def draw(n):
        draws = resampler.draw_batch(rng, n)
        ind, diff = mc_sample_batch(e, j, draws, alpha_cc, scale=scale)
        return ind if mode == "budget" else diff
    return draw


def boost_avcs(e, j: int, resampler, cfg: CCConfig, alpha_avcs: float,
               rng: np.random.Generator, scale: np.ndarray | float = 1.0,
               ) -> tuple[bool, HybridResult]:
    """Sequential boost decision for hypothesis ``j`` via a hybrid AVCS."""
    e = np.asarray(e, dtype=float)
    m = e.size
    mode, target = budget_mode_select(resampler)
    draw = _sample_stream(e, j, resampler, cfg.alpha_cc, rng, mode, scale)
    if mode == "budget":
        res = hybrid_cs(draw, alpha_avcs, target, cfg.exact_cs_budget,
                        cfg.asymptotic_cs_budget, cfg.batch_size,
                        bounds=(0.0, m / cfg.alpha_cc))
    else:
        res = hybrid_cs(draw, alpha_avcs, 0.0, 0,
                        cfg.exact_cs_budget + cfg.asymptotic_cs_budget,
                        cfg.batch_size, bounds=None)
    return res.decision, res


def boost_ci(e, j: int, resampler, cfg: CCConfig, alpha_ci: float, n_samples: int,
             rng: np.random.Generator,
             diff_bounds: tuple[float, float] | None = None) -> tuple[bool, tuple[float, float]]:
    """Fixed-sample boost decision via an empirical-Bernstein interval.

    Boosts iff the upper endpoint is below the budget (budget mode) or below
    zero (difference mode; requires explicit ``diff_bounds`` on the
    difference terms so the Bernstein bound applies).
    """
    e = np.asarray(e, dtype=float)
    m = e.size
    mode, target = budget_mode_select(resampler)
    draws = resampler.draw_batch(rng, n_samples)
    ind, diff = mc_sample_batch(e, j, draws, cfg.alpha_cc)
    if mode == "budget":
        lo, hi = bernstein_ci(ind, alpha_ci, 0.0, m / cfg.alpha_cc)
    else:
        if diff_bounds is None:
            raise ValueError("difference mode needs explicit bounds")
        lo, hi = bernstein_ci(diff, alpha_ci, *diff_bounds)
    return hi <= target, (lo, hi)


def apply_mask(e_boost, mask) -> np.ndarray:
    """Zero out boosted e-values outside ``mask`` (an index iterable)."""
    e_boost = np.asarray(e_boost, dtype=float).copy()
    keep = np.zeros(e_boost.size, dtype=bool)
    keep[np.asarray(list(mask), dtype=np.int64)] = True
    e_boost[~keep] = 0.0
    return e_boost


@dataclass
class CCResult:
    rejected: np.ndarray
    e_boost: np.ndarray
    outcomes: dict[int, BoostOutcome] = field(repr=False, default_factory=dict)
    mask: np.ndarray | None = None
    alpha_avcs: float = np.nan

    @property
    def n_boosted(self) -> int:
        return sum(1 for o in self.outcomes.values() if o.boosted)

    @property
    def samples_used(self) -> int:
        return sum(o.samples_used for o in self.outcomes.values())


def ebhcc(e, resamplers: Mapping[int, "Resampler"] | Callable[[int], "Resampler"],
          cfg: CCConfig, mask=None,
          rng_factory: Callable[[int], np.random.Generator] | None = None) -> CCResult:
    """Boosted e-BH.

    ``resamplers`` maps a hypothesis index to its conditional resampler (a
    mapping or a callable); it is consulted only for indices that actually
    need sampling.  ``mask`` optionally restricts boosting to a subset of
    hypotheses (the e-BH rejection set of ``e`` is always added back to the
    mask so the procedure can only grow the rejection set when
    ``alpha_cc == alpha``).  Sequential decisions use a per-hypothesis AVCS
    at level ``alpha0 * max(|ebh(e, alpha)|, 1) / |mask|``.
    """
    e = np.asarray(e, dtype=float)
    m = e.size
    base = ebh(e, cfg.alpha)
    if mask is None:
        mset = set(range(m))
    else:
        mset = set(int(v) for v in mask)
    mset |= set(base.tolist())
    if not mset:
        return CCResult(np.empty(0, dtype=np.int64), np.zeros(m), {}, None)
    alpha_avcs = cfg.alpha0 * max(base.size, 1) / len(mset)
    direct = set(ebh(e, cfg.alpha_cc).tolist())
    if rng_factory is None:
        rng_factory = lambda j: np.random.default_rng(
            np.random.SeedSequence([0xEBCC, j]))
    get = resamplers.__getitem__ if hasattr(resamplers, "__getitem__") else resamplers
    e_boost = np.zeros(m)
    outcomes: dict[int, BoostOutcome] = {}
    for j in sorted(mset):
        if e[j] <= 0:
            outcomes[j] = BoostOutcome(j, "skipped", 0.0)
            continue
        val = m / (cfg.alpha_cc * _rhat_size(e, j, cfg.alpha_cc))
        if j in direct:
            e_boost[j] = val
            outcomes[j] = BoostOutcome(j, "boosted-direct", val)
            continue
        rs = get(j)
        support = rs.exact_support() if cfg.prefer_exact else None
        if support is not None:
            phi = phi_exact(e, j, support, cfg.alpha_cc)
            ok = phi <= 0.0
            out = BoostOutcome(j, "boosted" if ok else "not-boosted",
                               val if ok else 0.0, 0, phi, phi)
        else:
            if cfg.alpha0 <= 0:
                raise ValueError("sequential boosting needs alpha0 > 0")
            ok, res = boost_avcs(e, j, rs, cfg, alpha_avcs, rng_factory(j))
            out = BoostOutcome(j, "boosted" if ok else "not-boosted",
                               val if ok else 0.0, res.samples_used,
                               res.lower, res.upper)
        if ok:
            e_boost[j] = val
        outcomes[j] = out
    mask_arr = np.asarray(sorted(mset), dtype=np.int64)
    return CCResult(ebh(e_boost, cfg.alpha), e_boost, outcomes, mask_arr, alpha_avcs)


def boost_with_budget(target_e, budget_e, j: int, resampler, cfg: CCConfig,
                      alpha_avcs: float, rng: np.random.Generator,
                      ) -> tuple[bool, HybridResult]:
    """Boost decision for a rescaled e-vector paid for by the original one.

    ``target_e`` must be ``scale * budget_e`` coordinatewise on the support
    of ``budget_e`` (e.g. marginally pre-boosted e-values).  The indicator
    terms are computed on the target scale while the subtracted draws -- and
    the analytic budget, when available -- stay on the budget scale, so the
    boosted target vector remains a valid generalized e-value family.
    """
    target_e = np.asarray(target_e, dtype=float)
    budget_e = np.asarray(budget_e, dtype=float)
    if budget_e[j] <= 0:
        raise ValueError("requires budget e_j > 0")
    pos = budget_e > 0
    scale = np.ones_like(budget_e)
    scale[pos] = target_e[pos] / budget_e[pos]
    if (target_e[~pos] != 0).any():
        raise ValueError("target must vanish where the budget vanishes")
    return boost_avcs(budget_e, j, resampler, cfg, alpha_avcs, rng, scale=scale)


class ExactInstance(Protocol):
    """A testing problem whose conditional resampling laws are finite.

    ``exact_support(j)`` returns atoms as *instances* (not just e-vectors),
    so multi-round calibration can recurse into each resampled world.
    """

    def evalues(self) -> np.ndarray: ...
    def exact_support(self, j: int) -> list[tuple["ExactInstance", float]]: ...
    def cache_key(self): ...


def cc_rounds_exact(instance: "ExactInstance", alpha: float,
                    max_rounds: int = 5) -> list[np.ndarray]:
    """Recursive multi-round calibration for finite-support problems.

    Returns ``[R^(0), R^(1), ...]``: ``R^(0)`` is plain e-BH and round ``t+1``
    keeps ``j`` iff the round-``t`` criterion

        E[ (m/alpha) 1{c_j e~_j >= m/(alpha |R_j^(0)(e~)|)} / |R_j^(t)(e~)|
           - e~_j | S_j ]  <=  0

    holds, where the denominator set is obtained by running the same
    ``t``-round procedure inside each resampled world.  The list stops at a
    fixed point or after ``max_rounds`` refinements; sets are nested
    increasing.
    """
    cache: dict[tuple, np.ndarray] = {}

    def rejset(inst, t) -> np.ndarray:
        key = (inst.cache_key(), t)
        got = cache.get(key)
        if got is not None:
            return got
        e = inst.evalues()
        m = e.size
        base = ebh(e, alpha)
        if t == 0:
            cache[key] = base
            return base
        out = []
        for j in range(m):
            if e[j] <= 0:
                continue
            r0 = _rhat_size(e, j, alpha)
            ctil = (m / (alpha * r0)) / e[j]
            phi = 0.0
            for sub, p in inst.exact_support(j):
                et = sub.evalues()
                r0t = _rhat_size(et, j, alpha)
                rt = set(rejset(sub, t - 1).tolist()) | {j}
                ind = (m / alpha) / len(rt) if ctil * et[j] >= m / (alpha * r0t) else 0.0
                phi += p * (ind - et[j])
            if phi <= 0.0:
                out.append(j)
        res = np.asarray(sorted(out), dtype=np.int64)
        cache[key] = res
        return res

    rounds = [rejset(instance, 0)]
    for t in range(1, max_rounds + 1):
        rounds.append(rejset(instance, t))
        if np.array_equal(rounds[-1], rounds[-2]):
            break
    return rounds
