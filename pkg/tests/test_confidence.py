"""Confidence intervals / sequences: formulas, invariances, stop logic."""

import numpy as np
import pytest

from ebcc.confidence import (AsymptoticCS, HedgedCS, _acs_radius, bernstein_ci,
                             hybrid_cs)


# ---------------------------------------------------------------------------
# empirical Bernstein


def test_bernstein_constant_samples():
    # variance term vanishes; only the range term remains
    K, alpha, lo, hi = 10, 0.05, 0.0, 2.0
    L, U = bernstein_ci(np.full(K, 0.7), alpha, lo, hi)
    half = 3.0 * (hi - lo) * np.log(3.0 / alpha) / K
    assert L == pytest.approx(0.7 - half)
    assert U == pytest.approx(0.7 + half)


def test_bernstein_width_monotone_in_alpha():
    x = np.array([0.1, 0.4, 0.8, 0.2, 0.9])
    widths = [np.diff(bernstein_ci(x, a, 0, 1))[0]
              for a in [0.01, 0.05, 0.2, 0.5, 0.9]]
    assert all(w1 > w2 for w1, w2 in zip(widths, widths[1:]))


def test_bernstein_width_shrinks_with_k():
    x = np.array([0.1, 0.9] * 5)
    w1 = np.diff(bernstein_ci(x, 0.05, 0, 1))[0]
    w2 = np.diff(bernstein_ci(np.tile(x, 2), 0.05, 0, 1))[0]
    assert w2 < w1


def test_bernstein_needs_two_samples():
    with pytest.raises(ValueError):
        bernstein_ci([0.5], 0.05, 0, 1)
    with pytest.raises(ValueError):
        bernstein_ci([0.5, 0.5], 0.05, 1, 0)


# ---------------------------------------------------------------------------
# hedged-capital CS


def test_hedged_point_mass_always_covered():
    cs = HedgedCS(0.05)
    for _ in range(20):
        cs.update(np.full(50, 0.5))
        lo, hi = cs.interval()
        assert lo <= 0.5 <= hi


def test_hedged_rejects_out_of_range():
    cs = HedgedCS(0.05)
    with pytest.raises(ValueError):
        cs.update([1.2])
    with pytest.raises(ValueError):
        HedgedCS(1.5)


def test_hedged_smaller_alpha_never_narrower():
    rng = np.random.default_rng(3)
    x = rng.random(500)
    wide, narrow = HedgedCS(0.01), HedgedCS(0.2)
    wide.update(x)
    narrow.update(x)
    assert wide.interval()[0] <= narrow.interval()[0]
    assert wide.interval()[1] >= narrow.interval()[1]


def test_hedged_concentrates():
    rng = np.random.default_rng(5)
    cs = HedgedCS(0.05)
    cs.update(rng.beta(2, 6, size=4000))  # mean 0.25
    lo, hi = cs.interval()
    assert lo <= 0.25 <= hi
    assert hi - lo < 0.1


def test_hedged_deterministic():
    x = np.linspace(0, 1, 97)
    a, b = HedgedCS(0.05), HedgedCS(0.05)
    a.update(x)
    b.update(x[:50])
    b.update(x[50:])
    assert a.interval() == b.interval()


# ---------------------------------------------------------------------------
# asymptotic CS


def test_asymptotic_zero_variance_guard():
    cs = AsymptoticCS(0.05, target_k=100)
    cs.update(np.full(10, 3.0))
    lo, hi = cs.interval()
    eps = 1e-12 * 4.0
    assert lo == pytest.approx(3.0 - eps) and hi == pytest.approx(3.0 + eps)


def test_asymptotic_trivial_before_two_samples():
    cs = AsymptoticCS(0.05, target_k=100)
    cs.update([1.0])
    assert cs.interval() == (-np.inf, np.inf)


def test_asymptotic_radius_decreasing_in_k():
    rho, alpha = 0.1, 0.05
    ks = np.arange(int(1 / rho**2) + 1, 5000, 50)
    radii = [_acs_radius(1.0, k, rho, alpha) for k in ks]
    assert all(r1 > r2 for r1, r2 in zip(radii, radii[1:]))


def test_asymptotic_tracks_mean():
    rng = np.random.default_rng(11)
    cs = AsymptoticCS(0.05, target_k=2000)
    cs.update(rng.normal(2.0, 1.0, size=2000))
    lo, hi = cs.interval()
    assert lo <= 2.0 <= hi
    assert hi - lo < 0.5


# ---------------------------------------------------------------------------
# hybrid driver


def _const_stream(value):
    return lambda n: np.full(n, float(value))


def test_hybrid_decisive_negative():
    res = hybrid_cs(_const_stream(-1.0), 0.05, target=0.0,
                    exact_budget=0, asymptotic_budget=2000, batch_size=100)
    assert res.decision and res.stop_reason == "below-target"
    assert res.samples_used < 2000


def test_hybrid_decisive_positive():
    res = hybrid_cs(_const_stream(1.0), 0.05, target=0.0,
                    exact_budget=0, asymptotic_budget=2000, batch_size=100)
    assert not res.decision and res.stop_reason == "above-target"


def test_hybrid_budget_exhausted_on_borderline():
    rng = np.random.default_rng(0)
    res = hybrid_cs(lambda n: rng.normal(0.0, 1.0, n), 0.05, target=0.0,
                    exact_budget=0, asymptotic_budget=500, batch_size=100)
    assert res.stop_reason == "budget-exhausted"
    assert res.samples_used == 500
    assert not res.decision


def test_hybrid_bounded_phase_then_asymptotic():
    # bounded samples well below the target: hedged phase already decides
    rng = np.random.default_rng(1)
    res = hybrid_cs(lambda n: rng.random(n) * 0.2, 0.05, target=0.5,
                    exact_budget=3000, asymptotic_budget=2000,
                    batch_size=100, bounds=(0.0, 1.0))
    assert res.decision and res.samples_used <= 3000


def test_hybrid_pure_asymptotic_when_no_exact_budget():
    res = hybrid_cs(_const_stream(-1.0), 0.05, target=0.0,
                    exact_budget=0, asymptotic_budget=1000,
                    batch_size=50, bounds=(-2.0, 0.0))
    assert res.decision


def test_hybrid_checks_sample_count():
    with pytest.raises(ValueError):
        hybrid_cs(lambda n: np.zeros(n - 1), 0.05, 0.0, 0, 100, 10)
    with pytest.raises(ValueError):
        hybrid_cs(_const_stream(0.0), 0.05, 0.0, 10, 10, 10, bounds=(1.0, 0.0))
