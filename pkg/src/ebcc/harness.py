"""Reproducible simulation harness.

Experiments are described by flat ``key = value`` config files, run
replication-by-replication with counter-based seeding (every random stream
is keyed by ``(base_seed, replication, hypothesis, purpose)``, so results
are independent of scheduling and thread count), and emitted as CSV.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import stats

from . import calibration, conformal, knockoffs, parametric
from .calibration import CCConfig, ebhcc
from .evalues import bh, ebh, fdp, power

KINDS = ("zstat", "tstat", "knockoff_dense", "knockoff_sparse", "outlier",
         "marginal_boost_compare")

# purpose tags for keyed random streams
_P_DATA = 1
_P_BOOST = 2
_P_KNOCKOFF = 3


@dataclass
class ExperimentConfig:
    kind: str
    m: int = 50
    n: int = 0                      # dof pool (tstat), rows (knockoff), calib size (outlier)
    alpha: float = 0.05
    alpha0: float = 0.005
    alpha_cc: float = -1.0          # -1 means "same as alpha"
    amplitude: float = 3.0          # signal strength A
    lrt_alternative: float = -1.0   # a in the LRT; -1 means "same as amplitude"
    rho: float = 0.5
    n_signals: int = 10
    signal_layout: str = "head"     # head | spaced_alternating
    d: int = 5                      # knockoff derandomization runs
    alpha_kn_mult: float = 1.0      # alpha_kn = mult * alpha
    lasso_lambda: float = -1.0      # -1 means sqrt(2 log(2m) / n) / 2
    s_method: str = "equi"
    pi1: float = 0.2                # outlier fraction
    dimension: int = 50
    theta: tuple = (0.3, 0.3, 0.2, 0.2, 0.1, 0.1)
    replications: int = 100
    base_seed: int = 20240801
    exact_cs_budget: int = 3000
    asymptotic_cs_budget: int = 2000
    batch_size: int = 100
    filter_mult: float = 0.0        # mask = {j : p_j <= mult * alpha}; 0 = no filter

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.alpha_cc < 0:
            self.alpha_cc = self.alpha
        if self.lrt_alternative < 0:
            self.lrt_alternative = self.amplitude
        for name in ("alpha", "alpha0", "alpha_cc"):
            v = getattr(self, name)
            if not (0 <= v < 1) or (name != "alpha0" and v == 0):
                raise ValueError(f"{name} out of range: {v} (need a level in (0, 1))")
        if self.replications < 1:
            raise ValueError(f"replications out of range: {self.replications}")

    def cc_config(self) -> CCConfig:
        return CCConfig(alpha=self.alpha, alpha0=self.alpha0,
                        alpha_cc=self.alpha_cc,
                        exact_cs_budget=self.exact_cs_budget,
                        asymptotic_cs_budget=self.asymptotic_cs_budget,
                        batch_size=self.batch_size)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines (# comments); unknown keys are an error."""
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in kv:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        f = _FIELDS[key]
        if key == "theta":
            kv[key] = tuple(float(v) for v in val.split(","))
        elif f.type == "int":
            kv[key] = int(val)
        elif f.type == "float":
            kv[key] = float(val)
        else:
            kv[key] = val
    if "kind" not in kv:
        raise ValueError("config must set 'kind'")
    return ExperimentConfig(**kv)


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def _rng(cfg: ExperimentConfig, rep: int, purpose: int, j: int = 0):
    seq = np.random.SeedSequence([cfg.base_seed, rep, j, purpose])
    return np.random.Generator(np.random.Philox(seq))


def _signal_mu(cfg: ExperimentConfig) -> np.ndarray:
    mu = np.zeros(cfg.m)
    if cfg.signal_layout == "head":
        mu[: cfg.n_signals] = cfg.amplitude
    elif cfg.signal_layout == "spaced_alternating":
        if cfg.n_signals > 0:
            idx = np.linspace(0, cfg.m - 1, cfg.n_signals).round().astype(int)
            mu[idx] = cfg.amplitude * (-1.0) ** np.arange(cfg.n_signals)
    else:
        raise ValueError(f"unknown signal layout {cfg.signal_layout!r}")
    return mu


def _ar1(m: int, rho: float) -> np.ndarray:
    idx = np.arange(m)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _row(method, rep, rejected, non_nulls, nulls, n_boosted, samples, seconds, seed):
    return {
        "method": method,
        "rep": rep,
        "power": power(rejected, non_nulls),
        "fdp": fdp(rejected, nulls),
        "n_reject": int(np.asarray(rejected).size),
        "n_boosted": n_boosted,
        "samples": samples,
        "seconds": seconds,
        "seed": seed,
    }


# ---------------------------------------------------------------------------
# per-kind replications


def _check_containment(cfg: ExperimentConfig, base, boosted) -> None:
    # base rejections can never be lost to boosting (guaranteed for
    # alpha_cc = alpha); checked on every replication of every run.
    if cfg.alpha_cc == cfg.alpha and not set(base).issubset(set(boosted)):
        raise AssertionError(
            f"containment violated: {sorted(set(base) - set(boosted))} "
            "rejected without boosting but dropped afterwards")


def _run_parametric(cfg: ExperimentConfig, rep: int) -> list[dict]:
    rng = _rng(cfg, rep, _P_DATA)
    m = cfg.m
    mu = _signal_mu(cfg)
    Sigma = _ar1(m, cfg.rho)
    L = np.linalg.cholesky(Sigma)
    non_nulls = np.flatnonzero(mu != 0)
    nulls = np.flatnonzero(mu == 0)
    a = cfg.lrt_alternative
    Z = mu + L @ rng.standard_normal(m)

    if cfg.kind == "tstat":
        dof = cfg.n - m
        if dof <= 0:
            raise ValueError("tstat needs n > m")
        W = rng.standard_normal(dof)
        T = parametric.t_stats(Z, W, Sigma)
        e = parametric.lrt_t_fast(T, dof, a)
        pvals = stats.t.sf(T, dof)
        make_rs = lambda j: parametric.TResampler(Z, W, Sigma, a, j)
    else:
        e = parametric.lrt_z(Z, a)
        pvals = stats.norm.sf(Z)
        make_rs = lambda j: parametric.ZResampler(Z, Sigma, a, j)

    mask = None
    if cfg.filter_mult > 0:
        mask = np.flatnonzero(pvals <= cfg.filter_mult * cfg.alpha)

    rows = []
    seed = cfg.base_seed
    t0 = time.perf_counter()
    rows.append(_row("BH", rep, bh(pvals, cfg.alpha), non_nulls, nulls,
                     0, 0, time.perf_counter() - t0, seed))
    t0 = time.perf_counter()
    base = ebh(e, cfg.alpha)
    rows.append(_row("e-BH", rep, base, non_nulls, nulls,
                     0, 0, time.perf_counter() - t0, seed))

    if cfg.kind == "marginal_boost_compare":
        t0 = time.perf_counter()
        bfac = parametric.marginal_boost_factor(a, cfg.alpha)
        rej_m = ebh(bfac * e, cfg.alpha)
        rows.append(_row("marginal-e-BH", rep, rej_m, non_nulls, nulls,
                         0, 0, time.perf_counter() - t0, seed))

    t0 = time.perf_counter()
    res = ebhcc(e, make_rs, cfg.cc_config(), mask=mask,
                rng_factory=lambda j: _rng(cfg, rep, _P_BOOST, j))
    _check_containment(cfg, base, res.rejected)
    rows.append(_row("e-BH-CC", rep, res.rejected, non_nulls, nulls,
                     res.n_boosted, res.samples_used,
                     time.perf_counter() - t0, seed))
    return rows


def _run_knockoff(cfg: ExperimentConfig, rep: int) -> list[dict]:
    rng = _rng(cfg, rep, _P_DATA)
    m, n = cfg.m, cfg.n
    Sigma = _ar1(m, cfg.rho)
    model = knockoffs.GaussianModel.from_sigma(np.zeros(m), Sigma, cfg.s_method)
    beta = _signal_mu(cfg) / np.sqrt(n)
    non_nulls = np.flatnonzero(beta != 0)
    nulls = np.flatnonzero(beta == 0)
    X = rng.standard_normal((n, m)) @ np.linalg.cholesky(Sigma).T
    y = X @ beta + rng.standard_normal(n)
    lam = cfg.lasso_lambda
    if lam < 0:
        lam = 0.5 * np.sqrt(2.0 * np.log(2 * m) / n)
    alpha_kn = cfg.alpha_kn_mult * cfg.alpha
    seed = cfg.base_seed

    rows = []
    ko_rng = _rng(cfg, rep, _P_KNOCKOFF)
    t0 = time.perf_counter()
    Xk = knockoffs.sample_knockoffs(X, model, ko_rng)
    W = knockoffs.lcd_stats(X, Xk, y, lam)
    rows.append(_row("knockoff-filter", rep,
                     knockoffs.knockoff_rejections(W, cfg.alpha),
                     non_nulls, nulls, 0, 0, time.perf_counter() - t0, seed))

    t0 = time.perf_counter()
    e = knockoffs.derandomized_evalues(X, y, model, ko_rng, cfg.d, alpha_kn, lam)
    base = ebh(e, cfg.alpha)
    rows.append(_row("e-BH", rep, base, non_nulls, nulls,
                     0, 0, time.perf_counter() - t0, seed))

    t0 = time.perf_counter()
    res = ebhcc(
        e,
        lambda j: knockoffs.KnockoffCRTResampler(X, y, model, j, cfg.d,
                                                 alpha_kn, lam),
        cfg.cc_config(),
        mask=np.flatnonzero(e > 0),  # zero e-values can never be boosted
        rng_factory=lambda j: _rng(cfg, rep, _P_BOOST, j),
    )
    _check_containment(cfg, base, res.rejected)
    rows.append(_row("e-BH-CC", rep, res.rejected, non_nulls, nulls,
                     res.n_boosted, res.samples_used,
                     time.perf_counter() - t0, seed))
    return rows


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _run_outlier(cfg: ExperimentConfig, rep: int) -> list[dict]:
    rng = _rng(cfg, rep, _P_DATA)
    dim = cfg.dimension
    theta = np.zeros(dim)
    th = np.asarray(cfg.theta, dtype=float)
    theta[: th.size] = th
    anchors = rng.uniform(-3.0, 3.0, size=(50, dim))

    def draw_base(k):  # inlier base law P: Gaussian + random anchor
        return (rng.standard_normal((k, dim))
                + anchors[rng.integers(0, anchors.shape[0], size=k)])

    def draw_shifted(k):  # Q with dQ/dP ∝ sigmoid(x' theta), by rejection
        out = np.empty((0, dim))
        while out.shape[0] < k:
            cand = draw_base(2 * k + 16)
            acc = rng.random(cand.shape[0]) < _sigmoid(cand @ theta)
            out = np.vstack([out, cand[acc]])
        return out[:k]

    def draw_outlier(k):
        return (np.sqrt(cfg.amplitude) * rng.standard_normal((k, dim))
                + anchors[rng.integers(0, anchors.shape[0], size=k)])

    # score: negative log-density of a KDE fit on held-out inliers
    train = draw_base(max(4 * dim, 200))
    kde = stats.gaussian_kde(train.T)
    score = lambda X: -kde.logpdf(np.asarray(X).T)

    n, m = cfg.n, cfg.m
    n_out = int(round(cfg.pi1 * m))
    calib = draw_base(n)
    test = np.vstack([draw_outlier(n_out), draw_shifted(m - n_out)])
    non_nulls = np.arange(n_out)
    nulls = np.arange(n_out, m)

    inst = conformal.WeightedInstance(score(calib), _sigmoid(calib @ theta),
                                      score(test), _sigmoid(test @ theta))
    seed = cfg.base_seed
    rows = []
    t0 = time.perf_counter()
    pvals = conformal.weighted_pvalues(inst)
    rows.append(_row("BH", rep, bh(pvals, cfg.alpha), non_nulls, nulls,
                     0, 0, time.perf_counter() - t0, seed))
    t0 = time.perf_counter()
    e = conformal.weighted_evalues(inst, cfg.alpha)
    base = ebh(e, cfg.alpha)
    rows.append(_row("e-BH", rep, base, non_nulls, nulls,
                     0, 0, time.perf_counter() - t0, seed))
    t0 = time.perf_counter()
    res = ebhcc(e, lambda j: conformal.ConformalResampler(inst, j, cfg.alpha),
                cfg.cc_config(),
                rng_factory=lambda j: _rng(cfg, rep, _P_BOOST, j))
    _check_containment(cfg, base, res.rejected)
    rows.append(_row("e-BH-CC", rep, res.rejected, non_nulls, nulls,
                     res.n_boosted, res.samples_used,
                     time.perf_counter() - t0, seed))
    return rows


def run_replication(cfg: ExperimentConfig, rep: int) -> list[dict]:
    if cfg.kind in ("zstat", "tstat", "marginal_boost_compare"):
        return _run_parametric(cfg, rep)
    if cfg.kind in ("knockoff_dense", "knockoff_sparse"):
        return _run_knockoff(cfg, rep)
    return _run_outlier(cfg, rep)


_METHOD_ORDER = ["BH", "knockoff-filter", "e-BH", "marginal-e-BH", "e-BH-CC"]


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    reps = range(cfg.replications)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run_replication, [cfg] * cfg.replications,
                                   reps, chunksize=1))
    else:
        chunks = [run_replication(cfg, r) for r in reps]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (_METHOD_ORDER.index(r["method"]), r["rep"]))
    return rows


CSV_HEADER = ["method", "rep", "power", "fdp", "n_reject", "n_boosted",
              "samples", "seconds", "seed"]


def emit_csv(rows: list[dict], out) -> None:
    """Write result rows; floats at 6 significant digits."""
    close = False
    if isinstance(out, str):
        out = open(out, "w", newline="")
        close = True
    try:
        w = csv.writer(out)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([
                r["method"], r["rep"],
                f"{r['power']:.6g}", f"{r['fdp']:.6g}",
                r["n_reject"], r["n_boosted"], r["samples"],
                f"{r['seconds']:.6g}", r["seed"],
            ])
    finally:
        if close:
            out.close()


def rows_to_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    emit_csv(rows, buf)
    return buf.getvalue()


def summarize(rows: list[dict]) -> dict[str, dict[str, float]]:
    """Per-method mean power / FDP (for quick reporting and tests)."""
    out: dict[str, dict[str, float]] = {}
    for method in sorted({r["method"] for r in rows},
                         key=_METHOD_ORDER.index):
        sub = [r for r in rows if r["method"] == method]
        out[method] = {
            "power": float(np.mean([r["power"] for r in sub])),
            "fdp": float(np.mean([r["fdp"] for r in sub])),
            "fdp_se": float(np.std([r["fdp"] for r in sub], ddof=1)
                            / np.sqrt(len(sub))) if len(sub) > 1 else 0.0,
            "n": len(sub),
        }
    return out
