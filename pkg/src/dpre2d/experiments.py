"""Ensemble statistics and the headline experiments.

The statistics are plain functions of an in-memory `SampleEnsemble` and a
bootstrap seed, so every report is reproducible.  Confidence intervals are
bootstrap percentile intervals (scipy) unless stated otherwise.

The experiment drivers at the bottom build the simulation configurations
(uniform initial ball, coupling window, scale ladder) and hand them to the
replica runner of `dpre2d.sim`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import sim
from .coupling import RADEMACHER, DisorderSpec, QuasiCritical, delta_scale, resolve_window
from .lattice import uniform_ball
from .moments import multiscale_variance_prediction, renewal_function, variance_averaged

DEFAULT_RESAMPLES = 2000
DEFAULT_LEVEL = 0.95
H_MAX = 8


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass
class SampleEnsemble:
    """Per-replica scalar outputs plus provenance.

    Attributes
    ----------
    values : ndarray
        One value per replica (for example ``Z``).
    fingerprint : str
        Hash of the configuration that produced the values.
    deltas : ndarray or None
        ``(replicas, M)`` array of multiscale increments, if any.
    m : ndarray or None
        Matching ``(replicas, M)`` array of conditional means.
    meta : dict
        Free-form provenance (N, regime, seed, ...).
    """

    values: np.ndarray
    fingerprint: str = ""
    deltas: np.ndarray | None = None
    m: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("ensemble values must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("ensemble contains non-finite values")

    def __len__(self):
        return len(self.values)

    def to_jsonl(self) -> str:
        lines = []
        for r, v in enumerate(self.values):
            rec = {"replica": r, "Z": float(v)}
            if self.deltas is not None:
                rec["deltas"] = [float(x) for x in self.deltas[r]]
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"


@dataclass
class StatReport:
    """Summary statistics with bootstrap confidence intervals.

    ``moments[2]`` is the unbiased variance (identical to ``variance``);
    higher orders are plain sample central moments.  ``ci`` and ``se`` map
    a statistic name to its interval and bootstrap standard error.
    """

    n: int
    mean: float
    variance: float
    moments: dict
    ci: dict
    se: dict
    level: float = DEFAULT_LEVEL
    resamples: int = DEFAULT_RESAMPLES
    seed: int = 0
    ks: tuple | None = None  # (statistic, p-value)
    extra: dict = field(default_factory=dict)
    passed: bool | None = None

    def __post_init__(self):
        for name, (lo, hi) in self.ci.items():
            if lo > hi:
                raise ValueError(f"unordered interval for {name}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["moments"] = {str(k): v for k, v in self.moments.items()}
        d["ci"] = {k: list(v) for k, v in self.ci.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=float)


# ---------------------------------------------------------------------------
# bootstrap helpers
# ---------------------------------------------------------------------------

def _mean_pow(p):
    def f(x, axis=-1):
        return np.mean(x**p, axis=axis)
    return f


def _var(x, axis=-1):
    return np.var(x, axis=axis, ddof=1)


def bootstrap(values, statistic, resamples: int = DEFAULT_RESAMPLES, level: float = DEFAULT_LEVEL,
              seed: int = 0) -> tuple[tuple[float, float], float]:
    """Percentile bootstrap interval and standard error of a vectorized ``statistic``."""
    x = np.asarray(values, dtype=float)
    if len(x) < 2:
        raise ValueError("bootstrap needs at least two samples")
    if np.all(x == x[0]):
        v = float(statistic(x))
        return (v, v), 0.0
    res = stats.bootstrap((x,), statistic, n_resamples=resamples, confidence_level=level,
                          method="percentile", vectorized=True, batch=max(1, 2_000_000 // len(x)),
                          random_state=np.random.default_rng(seed))
    ci = res.confidence_interval
    return (float(ci.low), float(ci.high)), float(res.standard_error)


def central_moment(x, h: int) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.mean((x - x.mean()) ** h))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def moment_report(ensemble, h_max: int = 4, resamples: int = DEFAULT_RESAMPLES,
                  level: float = DEFAULT_LEVEL, seed: int = 0) -> StatReport:
    """Mean, unbiased variance, central moments and bootstrap CIs of raw moments.

    Intervals are reported for ``mean``, ``variance`` and ``raw{p}`` =
    ``E[Z^p]`` for ``p = 2..h_max``.
    """
    x = _values(ensemble)
    if len(x) == 0:
        raise ValueError("empty ensemble")
    if not 2 <= h_max <= H_MAX:
        raise ValueError(f"h_max must be in [2, {H_MAX}]")
    n = len(x)
    mean = float(x.mean())
    var = float(x.var(ddof=1)) if n > 1 else 0.0
    moments = {2: var}
    for h in range(3, h_max + 1):
        moments[h] = central_moment(x, h)
    ci, se = {}, {}
    if n > 1:
        ci["mean"], se["mean"] = bootstrap(x, _mean_pow(1), resamples, level, seed)
        ci["variance"], se["variance"] = bootstrap(x, _var, resamples, level, seed + 1)
        for p in range(2, h_max + 1):
            ci[f"raw{p}"], se[f"raw{p}"] = bootstrap(x, _mean_pow(p), resamples, level, seed + p)
    return StatReport(n, mean, var, moments, ci, se, level, resamples, seed)


def lognormal_sigma2(rho: float) -> float:
    """Limiting log-variance ``log(1 + rho)`` in the quasi-critical regime."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return math.log1p(rho)


def subcritical_sigma2(gamma: float, beta_hat: float) -> float:
    """Limiting log-variance ``log((1 - gamma beta_hat^2) / (1 - beta_hat^2))``."""
    b2 = beta_hat * beta_hat
    if not 0 < b2 < 1 or not 0 <= gamma <= 1:
        raise ValueError("need 0 < beta_hat < 1 and 0 <= gamma <= 1")
    return math.log((1.0 - gamma * b2) / (1.0 - b2))


def lognormal_moment(sigma2: float, p: float) -> float:
    """``E[Z^p] = exp(p (p - 1) sigma^2 / 2)`` for ``Z = exp(N(-sigma^2/2, sigma^2))``."""
    return math.exp(p * (p - 1.0) * sigma2 / 2.0)


def lognormal_test(ensemble, sigma2: float, resamples: int = DEFAULT_RESAMPLES,
                   level: float = DEFAULT_LEVEL, seed: int = 0) -> StatReport:
    """Compare ``log Z`` with ``N(-sigma^2/2, sigma^2)`` and ``E[Z^p]`` with its target for ``p = 2, 3``.

    Zeros are removed and counted in ``extra['zeros']``.  ``passed`` is left
    unset: the KS statistic is a diagnostic at finite N.
    """
    if not sigma2 > 0:
        raise ValueError("sigma^2 must be positive")
    x = _values(ensemble)
    zeros = int(np.sum(x <= 0))
    x = x[x > 0]
    if len(x) < 2:
        raise ValueError("fewer than two positive samples")
    rep = moment_report(x, 3, resamples, level, seed)
    y = np.log(x)
    ks = stats.kstest(y, "norm", args=(-sigma2 / 2.0, math.sqrt(sigma2)))
    rep.ks = (float(ks.statistic), float(ks.pvalue))
    targets = {p: lognormal_moment(sigma2, p) for p in (2, 3)}
    rep.extra = {
        "sigma2": sigma2,
        "zeros": zeros,
        "log_mean": float(y.mean()),
        "log_var": float(y.var(ddof=1)),
        "targets": {str(p): t for p, t in targets.items()},
        "target_in_ci": {str(p): bool(rep.ci[f"raw{p}"][0] <= t <= rep.ci[f"raw{p}"][1])
                         for p, t in targets.items()},
    }
    return rep


def remainder(x):
    """``r(x) = log(1 + x) - (x - x^2 / 2)``."""
    x = np.asarray(x, dtype=float)
    return np.log1p(x) - (x - 0.5 * x * x)


@dataclass
class CLTReport:
    sums: StatReport  # sum_i Delta_i, with KS against N(0, sigma^2)
    sum_sq: StatReport  # sum_i Delta_i^2
    remainder: StatReport  # sum_i r(Delta_i) + log m_i
    per_scale: list  # StatReport of Delta_i for each scale
    predictions: list | None
    overlaps: list | None  # per-scale: prediction inside the variance CI
    excluded: int
    sigma2: float

    def to_dict(self) -> dict:
        return {"sums": self.sums.to_dict(), "sum_sq": self.sum_sq.to_dict(),
                "remainder": self.remainder.to_dict(), "per_scale": [r.to_dict() for r in self.per_scale],
                "predictions": self.predictions, "overlaps": self.overlaps, "excluded": self.excluded,
                "sigma2": self.sigma2}


def clt_sums(deltas, m, sigma2: float, predictions=None, resamples: int = DEFAULT_RESAMPLES,
             level: float = DEFAULT_LEVEL, seed: int = 0) -> CLTReport:
    """Empirical versions of the three multiscale limit statements.

    Parameters
    ----------
    deltas, m : array_like, shape (replicas, M)
        Increments and conditional means, aligned across replicas.
    sigma2 : float
        Target variance of the limiting Gaussian.
    predictions : sequence of float, optional
        Predicted per-scale variances; compared with the bootstrap CI of the
        empirical variance of each column.
    """
    D = np.atleast_2d(np.asarray(deltas, dtype=float))
    mm = np.atleast_2d(np.asarray(m, dtype=float))
    if D.shape != mm.shape:
        raise ValueError("deltas and m must be aligned")
    bad = ~np.all(np.isfinite(D) & (D > -1.0), axis=1)
    D, mm = D[~bad], mm[~bad]
    if len(D) < 2:
        raise ValueError("fewer than two usable replicas")
    s1 = D.sum(axis=1)
    s2 = (D * D).sum(axis=1)
    s3 = (remainder(D) + np.log(mm)).sum(axis=1)
    r1 = moment_report(s1, 4, resamples, level, seed)
    if sigma2 > 0 and np.ptp(s1) > 0:
        ks = stats.kstest(s1, "norm", args=(0.0, math.sqrt(sigma2)))
        r1.ks = (float(ks.statistic), float(ks.pvalue))
    r2 = moment_report(s2, 2, resamples, level, seed + 10)
    r2.extra["target"] = sigma2
    r3 = moment_report(s3, 2, resamples, level, seed + 20)
    r3.extra["target"] = 0.0
    per = [moment_report(D[:, i], 2, resamples, level, seed + 100 + i) for i in range(D.shape[1])]
    overlaps = None
    if predictions is not None:
        predictions = [float(p) for p in predictions]
        if len(predictions) != D.shape[1]:
            raise ValueError("one prediction per scale required")
        overlaps = [bool(r.ci["variance"][0] <= p <= r.ci["variance"][1]) for r, p in zip(per, predictions)]
        for r, p, ok in zip(per, predictions, overlaps):
            r.extra["prediction"] = p
            r.passed = ok
    return CLTReport(r1, r2, r3, per, predictions, overlaps, int(bad.sum()), float(sigma2))


def hypercontractivity_ratio(x, h: int) -> float:
    """``|m_h| / m_2^{h/2}`` from sample central moments."""
    x = np.asarray(x, dtype=float)
    m2 = central_moment(x, 2)
    if m2 <= 0:
        raise ValueError("degenerate ensemble (zero variance)")
    return abs(central_moment(x, h)) / m2 ** (h / 2.0)


def _boot_ratio(x, h, B, rng):
    n = len(x)
    out = np.empty(B)
    chunk = max(1, 2_000_000 // n)
    for s in range(0, B, chunk):
        idx = rng.integers(0, n, size=(min(chunk, B - s), n))
        y = x[idx]
        c = y - y.mean(axis=1, keepdims=True)
        m2 = np.mean(c * c, axis=1)
        out[s:s + len(y)] = np.abs(np.mean(c**h, axis=1)) / m2 ** (h / 2.0)
    return out


@dataclass
class TrendReport:
    xs: list
    values: list
    ci: list
    slope: float
    slope_ci: tuple
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def hypercontractivity_check(ensembles: dict, h: int = 4, resamples: int = DEFAULT_RESAMPLES,
                             level: float = DEFAULT_LEVEL, seed: int = 0) -> TrendReport:
    """Ratio ``|m_h| / m_2^{h/2}`` across system sizes and its log-log slope in ``N``.

    ``ensembles`` maps ``N`` to a sample of ``Z_N``.  Every ensemble is
    resampled independently; the slope interval is the percentile interval
    of the refitted slope.  Passes when the interval contains 0.
    """
    if h not in (2, 3, 4, 5, 6):
        raise ValueError("h must be in {2, ..., 6}")
    Ns = sorted(ensembles)
    if len(Ns) < 2:
        raise ValueError("need at least two system sizes")
    rng = np.random.default_rng(seed)
    logN = np.log(np.asarray(Ns, dtype=float))
    ratios, cis, boots = [], [], []
    a = (1.0 - level) / 2.0
    for N in Ns:
        x = _values(ensembles[N])
        r = hypercontractivity_ratio(x, h)
        b = _boot_ratio(x, h, resamples, rng)
        ratios.append(r)
        boots.append(b)
        cis.append((float(np.quantile(b, a)), float(np.quantile(b, 1 - a))))
    Y = np.log(np.vstack(boots))  # (len(Ns), B)
    xc = logN - logN.mean()
    slopes = (xc @ (Y - Y.mean(axis=0))) / (xc @ xc)
    slope = float(np.polyfit(logN, np.log(ratios), 1)[0])
    sci = (float(np.quantile(slopes, a)), float(np.quantile(slopes, 1 - a)))
    return TrendReport([int(N) for N in Ns], ratios, cis, slope, sci, bool(sci[0] <= 0.0 <= sci[1]),
                       {"h": h, "level": level, "resamples": resamples, "seed": seed})


@dataclass
class FKGReport:
    labels: list
    frac_moment: list
    frac_se: list
    second_moment: list
    pair_diff: list  # E[Z_k^a - Z_{k+1}^a]
    pair_se: list
    second_pair_diff: list  # E[Z_{k+1}^2 - Z_k^2]
    second_pair_se: list
    alpha: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def fkg_monotonicity(samples, alpha: float = 0.5, labels=None, separation: float = 2.0) -> FKGReport:
    """Fractional moments along an increasing sequence of couplings with common random numbers.

    ``samples[k][r]`` is ``Z`` at the ``k``-th coupling for replica ``r``
    (same disorder across ``k``).  Passes when every adjacent paired
    difference ``E[Z_k^alpha - Z_{k+1}^alpha]`` exceeds ``separation``
    standard errors.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    S = [_values(s) for s in samples]
    if len({len(s) for s in S}) != 1:
        raise ValueError("coupled samples must have the same replicas")
    n = len(S[0])
    if n < 2:
        raise ValueError("need at least two replicas")
    Fa = [s**alpha for s in S]
    labels = list(labels) if labels is not None else list(range(len(S)))
    fm = [float(f.mean()) for f in Fa]
    fse = [float(f.std(ddof=1) / math.sqrt(n)) for f in Fa]
    sm = [float(np.mean(s * s)) for s in S]
    pd, pse, qd, qse = [], [], [], []
    for k in range(len(S) - 1):
        d = Fa[k] - Fa[k + 1]
        pd.append(float(d.mean()))
        pse.append(float(d.std(ddof=1) / math.sqrt(n)))
        e = S[k + 1] ** 2 - S[k] ** 2
        qd.append(float(e.mean()))
        qse.append(float(e.std(ddof=1) / math.sqrt(n)))
    ok = all(d > separation * s for d, s in zip(pd, pse))
    return FKGReport(labels, fm, fse, sm, pd, pse, qd, qse, alpha, bool(ok))


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def moment_delta_scaling(samples_by_delta: dict, h: int = 2, eps_report: float = 0.3,
                         resamples: int = DEFAULT_RESAMPLES, level: float = DEFAULT_LEVEL,
                         seed: int = 0) -> TrendReport:
    """Log-log slope of ``E[Z^h]^{1/h}`` against the ball radius ``delta``.

    Passes when the fitted exponent is at least ``-eps_report``.
    """
    if h not in (2, 4):
        raise ValueError("h must be 2 or 4")
    ds = sorted(samples_by_delta)
    if len(ds) < 3:
        raise ValueError("need at least three radii")
    rng = np.random.default_rng(seed)
    a = (1.0 - level) / 2.0
    vals, cis, boots = [], [], []
    for d in ds:
        x = _values(samples_by_delta[d])
        vals.append(float(np.mean(x**h) ** (1.0 / h)))
        idx = rng.integers(0, len(x), size=(resamples, len(x)))
        b = np.mean(x[idx] ** h, axis=1) ** (1.0 / h)
        boots.append(b)
        cis.append((float(np.quantile(b, a)), float(np.quantile(b, 1 - a))))
    ld = np.log(np.asarray(ds, float))
    Y = np.log(np.vstack(boots))
    xc = ld - ld.mean()
    slopes = (xc @ (Y - Y.mean(axis=0))) / (xc @ xc)
    slope = loglog_slope(ds, vals)
    sci = (float(np.quantile(slopes, a)), float(np.quantile(slopes, 1 - a)))
    return TrendReport([float(d) for d in ds], vals, cis, slope, sci, bool(slope >= -eps_report),
                       {"h": h, "eps_report": eps_report})


def exact_h2_scaling(N: int, sigma2: float, deltas) -> TrendReport:
    """Exact ``E[Z^2]^{1/2}`` on uniform balls of radius ``delta sqrt(N)`` and its log-log slope."""
    ds = sorted(float(d) for d in deltas)
    if len(ds) < 3:
        raise ValueError("need at least three radii")
    table = renewal_function(sigma2, N)
    vals = []
    for d in ds:
        phi = uniform_ball(d * math.sqrt(N))
        vals.append(math.sqrt(1.0 + variance_averaged(sigma2, N, phi, table)))
    slope = loglog_slope(ds, vals)
    return TrendReport(ds, vals, [(v, v) for v in vals], slope, (slope, slope), True, {"h": 2, "exact": True})


@dataclass
class SingularityReport:
    deltas: list
    medians: list
    frac_moments: list
    spearman: float  # pooled, radius index against Z
    pvalue: float
    median_spearman: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def singularity_probe(samples_by_delta: dict, N: int, alpha: float = 0.5, pvalue: float = 0.05) -> SingularityReport:
    """Trend of ``Z`` on shrinking balls.

    Radii are ordered decreasingly, ``delta_1 > delta_2 > ...``.  The pooled
    Spearman correlation between the radius index and the individual values
    tests for stochastically decreasing mass; passes when it is negative
    with a p-value below ``pvalue``.
    """
    ds = sorted(samples_by_delta, reverse=True)
    for d in ds:
        if d * math.sqrt(N) < 2:
            raise ValueError(f"radius delta sqrt(N) = {d * math.sqrt(N):.3g} is below lattice resolution 2")
    if len(ds) < 2:
        raise ValueError("need at least two radii")
    xs = [_values(samples_by_delta[d]) for d in ds]
    med = [float(np.median(x)) for x in xs]
    fm = [float(np.mean(x**alpha)) for x in xs]
    k = np.concatenate([np.full(len(x), i) for i, x in enumerate(xs)])
    z = np.concatenate(xs)
    if np.ptp(z) == 0:
        return SingularityReport([float(d) for d in ds], med, fm, 0.0, 1.0, 0.0, False)
    res = stats.spearmanr(k, z)
    rm = stats.spearmanr(np.arange(len(ds)), med).statistic if np.ptp(med) > 0 else 0.0
    rho, p = float(res.statistic), float(res.pvalue)
    return SingularityReport([float(d) for d in ds], med, fm, rho, p, float(rm), bool(rho < 0 and p < pvalue))


def _values(e) -> np.ndarray:
    if isinstance(e, SampleEnsemble):
        return e.values
    return np.asarray(e, dtype=float)


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------

def ball_radius(N: int, theta_N: float, rho: float = 1.0) -> float:
    """Radius ``delta_N^rho sqrt(N)`` of the averaging ball."""
    return delta_scale(theta_N) ** rho * math.sqrt(N)


def averaged_config(regime, N: int, radius: float, spec: DisorderSpec = RADEMACHER, seed: int = 0,
                    **kw) -> sim.SimConfig:
    """Configuration for ``Z_N(U_radius)`` under the given coupling regime."""
    window = None if regime is None else resolve_window(regime, N, spec)
    return sim.SimConfig(N=N, window=window, phi=uniform_ball(radius), seed=seed, **kw)


def sample_partition(cfg: sim.SimConfig, replicas, threads: int = 1, **meta) -> SampleEnsemble:
    vals = sim.partition_ensemble(cfg, replicas, threads)
    meta = dict(meta, N=cfg.N, seed=cfg.seed)
    if cfg.window is not None:
        meta.update(cfg.window.to_dict())
    return SampleEnsemble(vals, cfg.fingerprint(), meta=meta)


def quasi_critical_ensemble(N: int, replicas, theta_N: float | None = None, rho: float = 1.0,
                            spec: DisorderSpec = RADEMACHER, seed: int = 0, threads: int = 1) -> SampleEnsemble:
    """``Z_N(U_{delta_N^rho sqrt N})`` in the quasi-critical window (default ``theta_N = sqrt(log N)``)."""
    th = math.sqrt(math.log(N)) if theta_N is None else theta_N
    cfg = averaged_config(QuasiCritical(th), N, ball_radius(N, th, rho), spec, seed)
    return sample_partition(cfg, replicas, threads, theta_N=th, rho=rho)


def exact_quasi_critical_variance(N: int, theta_N: float | None = None, rho: float = 1.0,
                                  spec: DisorderSpec = RADEMACHER) -> float:
    """Exact ``Var[Z_N(U_{delta_N^rho sqrt N})]`` for the matching quasi-critical window."""
    th = math.sqrt(math.log(N)) if theta_N is None else theta_N
    w = resolve_window(QuasiCritical(th), N, spec)
    return variance_averaged(w.sigma2, N, uniform_ball(ball_radius(N, th, rho)))


def multiscale_sample(N: int, M: int, replicas, theta_N: float, rho: float = 1.0, log_power: float = 3.0,
                      spec: DisorderSpec = RADEMACHER, seed: int = 0, threads: int = 1):
    """Multiscale records for ``Z_N(U_{delta_N^rho sqrt N})`` with ``M`` scales.

    Returns ``(ensemble, records, predictions)``: the ensemble holds
    ``Zdiff`` with the aligned ``deltas`` and ``m`` arrays, and
    ``predictions`` the per-scale variances predicted in the limit.
    """
    ladder = sim.build_scale_ladder(N, rho, theta_N, M, log_power)
    w = resolve_window(QuasiCritical(theta_N), N, spec)
    cfg = sim.multiscale_config(N, w, ladder, uniform_ball(ball_radius(N, theta_N, rho)), seed)
    recs = sim.multiscale_ensemble(cfg, ladder, replicas, threads)
    live = [r for r in recs if not r.dead]
    D = np.array([r.delta[1:] for r in live]).reshape(len(live), M)
    mm = np.array([r.m[1:] for r in live]).reshape(len(live), M)
    Z = np.array([math.exp(r.logZ[-1]) for r in live])
    meta = {"N": N, "M": M, "rho": rho, "theta_N": theta_N, "dead": len(recs) - len(live),
            "ladder": ladder.to_dict()}
    preds = [multiscale_variance_prediction(M, i, rho) for i in range(1, M + 1)]
    return SampleEnsemble(Z, cfg.fingerprint(), D, mm, meta), recs, preds
