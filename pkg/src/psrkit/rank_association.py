"""Rank association through correlations of probability-scale residuals.

The Spearman rank correlation of two orderable columns equals the Pearson
correlation of their residuals against intercept-only (empirical CDF) fits.
Replacing those marginal fits with conditional models on shared covariates
Z gives a covariate-adjusted rank correlation: the partial Spearman.  A
conditional variant reports the correlation within strata of a categorical
Z, or along a kernel-weighted grid for continuous Z.

Inference is resampling based: percentile confidence intervals come from a
pairs bootstrap that refits both marginal models on each resample, and
p-values from permuting one residual vector against the other with the
fitted models held fixed.  All randomness derives from a caller-supplied
seed through counter-based (Philox) substreams keyed by task, so results
do not depend on evaluation order or worker scheduling.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .data_model import Column, ColumnKind, DesignMatrix, ORDERABLE_KINDS
from .estimators import (
    fit_cumulative_link,
    fit_empirical,
    fit_exponential_survival,
    fit_linear_normal,
    fit_poisson,
)
from .exceptions import DegenerateFitError, InputError, NumericError, PsrKitError
from .psr import PsrVector, psr_all, psr_from_omers

__all__ = [
    "MARGIN_MODELS",
    "ResamplingInfo",
    "AssocResult",
    "margin_psr",
    "spearman",
    "partial_spearman",
    "conditional_spearman",
    "psr_covariance",
    "psr_variance_discrete",
    "ScanConfig",
    "ScanRow",
    "batch_partial_spearman",
    "default_margin_model",
    "correlation_matrix",
]

#: substream tags: every resampling task draws from Philox(key=(seed, tag-mix))
_TAG_BOOT = 1
_TAG_PERM = 2
_TAG_SCAN = 3
_TAG_STRATUM = 4
_TAG_GRID = 5
_TAG_PAIR = 6

_MASK64 = (1 << 64) - 1

MARGIN_MODELS = (
    "empirical",
    "linear",
    "linear-empirical",
    "orm-logit",
    "orm-probit",
    "orm-cloglog",
    "orm-loglog",
    "poisson",
    "exp-surv",
)


def _substream(seed: int | None, *tags: int) -> np.random.Generator:
    """Counter-based generator for one resampling task.

    Independent tasks get independent streams from (seed, tag mix), so a
    batch scan produces identical numbers no matter how many workers run it.
    """
    if seed is None:
        raise InputError("a seed is required whenever resampling is requested")
    acc = 0
    for t in tags:
        acc = (acc * 1000003 + int(t)) & _MASK64
    key = np.array([int(seed) & _MASK64, acc], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _fold_seed(seed: int, *tags: int) -> int:
    acc = int(seed) & _MASK64
    for t in tags:
        acc = (acc * 1000003 + int(t)) & _MASK64
    return acc


@dataclass(frozen=True)
class ResamplingInfo:
    kind: str
    n_draws: int
    seed: int


@dataclass(frozen=True)
class AssocResult:
    """A rank-association estimate with resampling-based inference.

    ``ci_low``/``ci_high`` bracket the estimate when a bootstrap was run;
    ``p_value`` comes from a permutation test when requested.  Fields are
    ``None`` when the corresponding resampling was not performed.
    """

    estimate: float
    ci_low: float | None
    ci_high: float | None
    p_value: float | None
    method: str
    n_used: int
    resampling: tuple[ResamplingInfo, ...] = ()
    notes: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# marginal residual vectors
# ---------------------------------------------------------------------------


def margin_psr(col: Column, Z: DesignMatrix | None, model: str) -> PsrVector:
    """Residuals of one column against a conditional (or marginal) model.

    ``model`` names the fitter: ``empirical`` ignores Z entirely;
    ``linear`` uses normal-theory residuals from least squares;
    ``linear-empirical`` ranks the least-squares residuals against their own
    empirical distribution; ``orm-*`` are cumulative-link fits;
    ``poisson`` and ``exp-surv`` are the log-link count and censored
    exponential models.
    """
    if model not in MARGIN_MODELS:
        raise InputError(f"unknown margin model {model!r}; choose from {MARGIN_MODELS}")
    if Z is not None and Z.p == 0:
        Z = None
    if model == "empirical":
        return psr_all(fit_empirical(col), col)
    if model == "linear":
        return psr_all(fit_linear_normal(col, Z), col, Z)
    if model == "linear-empirical":
        fit = fit_linear_normal(col, Z)
        fitted = fit.alpha[0] + (Z.matrix @ fit.beta if Z is not None else 0.0)
        return psr_from_omers(col.values - fitted, source=f"linear-empirical:{col.name}")
    if model.startswith("orm-"):
        return psr_all(fit_cumulative_link(col, Z, model[4:]), col, Z)
    if model == "poisson":
        return psr_all(fit_poisson(col, Z), col, Z)
    if model == "exp-surv":
        return psr_all(fit_exponential_survival(col, Z), col, Z)
    raise InputError(f"unknown margin model {model!r}")


def default_margin_model(col: Column, Z: DesignMatrix | None) -> str:
    if col.kind is ColumnKind.RIGHT_CENSORED:
        return "exp-surv"
    if Z is None or Z.p == 0:
        return "empirical"
    return "orm-logit"


def _check_pair(x: Column, y: Column) -> None:
    if x.n != y.n:
        raise InputError("columns have different lengths")
    for c in (x, y):
        if c.missing.any():
            raise InputError(f"column {c.name!r} has missing values; run complete_cases first")


def _pearson(u: np.ndarray, v: np.ndarray) -> float:
    uc = u - u.mean()
    vc = v - v.mean()
    su = float(np.sqrt(uc @ uc))
    sv = float(np.sqrt(vc @ vc))
    if su <= 0.0 or sv <= 0.0:
        raise DegenerateFitError("residual vector has zero variance (constant column?)")
    return float((uc @ vc) / (su * sv))


def _mean_product(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.mean(u * v))


def _perm_pvalue(u, v, observed, n_perm, rng, stat) -> float:
    hits = 0
    target = abs(observed)
    for _ in range(n_perm):
        hits += abs(stat(u, rng.permutation(v))) >= target
    return (1 + hits) / (n_perm + 1)


def _bootstrap_ci(x, y, Z, x_model, y_model, n_boot, rng, stat):
    """Percentile interval from a pairs bootstrap that refits both margins."""
    n = x.n
    draws = np.full(n_boot, np.nan)
    failures = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for b in range(n_boot):
            idx = rng.integers(0, n, size=n)
            try:
                zb = Z.take(idx) if Z is not None else None
                u = margin_psr(x.take(idx), zb, x_model).values
                v = margin_psr(y.take(idx), zb, y_model).values
                draws[b] = stat(u, v)
            except NumericError:
                failures += 1
    ok = draws[~np.isnan(draws)]
    if ok.size < max(2, n_boot // 2):
        raise NumericError(f"bootstrap failed: only {ok.size} of {n_boot} replicates usable")
    lo, hi = np.percentile(ok, [2.5, 97.5])
    return float(lo), float(hi), failures


def _resampled_result(
    x, y, Z, x_model, y_model, *, stat, method, n_boot, n_perm, seed
) -> AssocResult:
    u = margin_psr(x, Z, x_model).values
    v = margin_psr(y, Z, y_model).values
    estimate = stat(u, v)
    ci_low = ci_high = p_value = None
    info: list[ResamplingInfo] = []
    notes: list[str] = []
    if n_boot:
        rng = _substream(seed, _TAG_BOOT)
        ci_low, ci_high, failures = _bootstrap_ci(
            x, y, Z, x_model, y_model, n_boot, rng, stat
        )
        info.append(ResamplingInfo("bootstrap", n_boot, seed))
        if failures:
            notes.append(f"{failures} of {n_boot} bootstrap replicates failed and were dropped")
    if n_perm:
        rng = _substream(seed, _TAG_PERM)
        p_value = _perm_pvalue(u, v, estimate, n_perm, rng, stat)
        info.append(ResamplingInfo("permutation", n_perm, seed))
    return AssocResult(
        estimate=estimate,
        ci_low=ci_low,
        ci_high=ci_high,
        p_value=p_value,
        method=method,
        n_used=x.n,
        resampling=tuple(info),
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# public estimators
# ---------------------------------------------------------------------------


def spearman(
    x: Column,
    y: Column,
    *,
    n_boot: int = 0,
    n_perm: int = 0,
    seed: int | None = None,
) -> AssocResult:
    """Spearman rank correlation as a correlation of empirical-CDF residuals.

    With ties this equals the mid-rank Spearman coefficient exactly.
    """
    for c in (x, y):
        if not c.is_orderable:
            raise InputError(f"column {c.name!r} is not orderable")
    _check_pair(x, y)
    return _resampled_result(
        x, y, None, "empirical", "empirical",
        stat=_pearson, method="spearman", n_boot=n_boot, n_perm=n_perm, seed=seed,
    )


def partial_spearman(
    x: Column,
    y: Column,
    Z: DesignMatrix | None,
    *,
    x_model: str | None = None,
    y_model: str | None = None,
    n_boot: int = 1000,
    n_perm: int = 1000,
    seed: int | None = None,
) -> AssocResult:
    """Covariate-adjusted Spearman: correlation of residuals from x|Z and y|Z.

    Margins default to cumulative-link (logit) fits, or to the marginal
    empirical CDF when Z is empty, in which case the estimate coincides with
    :func:`spearman`.
    """
    _check_pair(x, y)
    if Z is not None and Z.n != x.n:
        raise InputError("Z does not align with x and y")
    return _resampled_result(
        x, y, Z,
        x_model or default_margin_model(x, Z),
        y_model or default_margin_model(y, Z),
        stat=_pearson, method="partial_spearman",
        n_boot=n_boot, n_perm=n_perm, seed=seed,
    )


def psr_covariance(
    x: Column,
    y: Column,
    Z: DesignMatrix | None = None,
    *,
    x_model: str | None = None,
    y_model: str | None = None,
    n_boot: int = 0,
    n_perm: int = 0,
    seed: int | None = None,
) -> AssocResult:
    """Mean product of the two residual vectors (an unscaled association).

    Shares the sign and the zero of the correlation-based estimate but keeps
    the raw probability-scale units.
    """
    _check_pair(x, y)
    if Z is not None and Z.n != x.n:
        raise InputError("Z does not align with x and y")
    return _resampled_result(
        x, y, Z,
        x_model or default_margin_model(x, Z),
        y_model or default_margin_model(y, Z),
        stat=_mean_product, method="psr_covariance",
        n_boot=n_boot, n_perm=n_perm, seed=seed,
    )


def psr_variance_discrete(probs) -> float:
    """Variance of the residual of a draw from a discrete distribution
    against that same distribution: (1 - sum f^3) / 3.

    Approaches the continuous-outcome value 1/3 as atoms shrink.
    """
    f = np.asarray(probs, dtype=float)
    if f.ndim != 1 or f.size == 0:
        raise InputError("probs must be a nonempty 1-d array")
    if np.any(f < 0) or abs(f.sum() - 1.0) > 1e-12:
        raise InputError("probs must be nonnegative and sum to 1")
    return float((1.0 - np.sum(f**3)) / 3.0)


def conditional_spearman(
    x: Column,
    y: Column,
    z: Column,
    *,
    x_model: str | None = None,
    y_model: str | None = None,
    n_grid: int = 50,
    bandwidth: float | None = None,
    n_boot: int = 0,
    n_perm: int = 0,
    seed: int | None = None,
) -> list[tuple[object, AssocResult]]:
    """Rank correlation of x and y as a function of a single covariate z.

    Categorical z: one spearman estimate per level (each level needs >= 5
    rows).  Continuous z (>= 30 rows): residuals from x|z and y|z fits are
    correlated with Gaussian kernel weights on an evenly spaced grid of
    ``n_grid`` z values; the bandwidth defaults to Silverman's rule.
    """
    _check_pair(x, y)
    if z.n != x.n:
        raise InputError("z does not align with x and y")
    if z.missing.any():
        raise InputError(f"column {z.name!r} has missing values; run complete_cases first")

    if z.kind in (ColumnKind.ORDINAL, ColumnKind.BINARY):
        return _conditional_categorical(x, y, z, x_model, y_model, n_boot, n_perm, seed)
    if z.kind is ColumnKind.CONTINUOUS:
        return _conditional_continuous(
            x, y, z, x_model, y_model, n_grid, bandwidth, n_boot, n_perm, seed
        )
    raise InputError(f"column {z.name!r}: conditioning needs a categorical or continuous column")


def _conditional_categorical(x, y, z, x_model, y_model, n_boot, n_perm, seed):
    codes = np.unique(z.values)
    counts = {c: int(np.sum(z.values == c)) for c in codes}
    thin = [c for c, k in counts.items() if k < 5]
    if thin:
        raise InputError(f"column {z.name!r}: levels with fewer than 5 rows: {thin}")
    out = []
    for code in codes:
        rows = np.flatnonzero(z.values == code)
        xs, ys = x.take(rows), y.take(rows)
        sub_seed = _fold_seed(seed, _TAG_STRATUM, int(code)) if seed is not None else None
        res = _resampled_result(
            xs, ys, None,
            x_model or "empirical", y_model or "empirical",
            stat=_pearson, method="conditional_spearman",
            n_boot=n_boot, n_perm=n_perm, seed=sub_seed,
        )
        label = z.levels[int(code)] if z.levels is not None else int(code)
        out.append((label, res))
    return out


def _silverman_bandwidth(zv: np.ndarray) -> float:
    sd = float(np.std(zv, ddof=1))
    q75, q25 = np.percentile(zv, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    return 0.9 * spread * zv.size ** (-0.2)


def _weighted_corr(u, v, w) -> float:
    sw = w.sum()
    if sw <= 0:
        return np.nan
    mu = (w @ u) / sw
    mv = (w @ v) / sw
    cu = u - mu
    cv = v - mv
    vu = w @ np.square(cu)
    vv = w @ np.square(cv)
    if vu <= 0 or vv <= 0:
        return np.nan
    return float((w @ (cu * cv)) / np.sqrt(vu * vv))


def _conditional_continuous(x, y, z, x_model, y_model, n_grid, bandwidth, n_boot, n_perm, seed):
    if x.n < 30:
        raise InputError("conditional estimation over a continuous z needs >= 30 rows")
    zv = z.values
    h = bandwidth if bandwidth is not None else _silverman_bandwidth(zv)
    if h <= 0:
        raise InputError("kernel bandwidth must be positive; supply bandwidth explicitly")
    Zd = DesignMatrix(zv[:, None], (z.name,))
    xm = x_model or "orm-logit"
    ym = y_model or "orm-logit"
    u = margin_psr(x, Zd, xm).values
    v = margin_psr(y, Zd, ym).values
    grid = np.linspace(zv.min(), zv.max(), n_grid)
    weights = np.exp(-0.5 * np.square((zv[None, :] - grid[:, None]) / h))
    estimates = np.array([_weighted_corr(u, v, weights[g]) for g in range(n_grid)])

    p_values = [None] * n_grid
    if n_perm:
        rng = _substream(seed, _TAG_GRID, _TAG_PERM)
        hits = np.zeros(n_grid)
        for _ in range(n_perm):
            vp = rng.permutation(v)
            perm_est = np.array([_weighted_corr(u, vp, weights[g]) for g in range(n_grid)])
            hits += np.abs(perm_est) >= np.abs(estimates)
        p_values = ((1 + hits) / (n_perm + 1)).tolist()

    ci = [(None, None)] * n_grid
    if n_boot:
        rng = _substream(seed, _TAG_GRID, _TAG_BOOT)
        draws = np.full((n_boot, n_grid), np.nan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for b in range(n_boot):
                idx = rng.integers(0, x.n, size=x.n)
                try:
                    Zb = Zd.take(idx)
                    ub = margin_psr(x.take(idx), Zb, xm).values
                    vb = margin_psr(y.take(idx), Zb, ym).values
                    wb = np.exp(-0.5 * np.square((zv[idx][None, :] - grid[:, None]) / h))
                    draws[b] = [_weighted_corr(ub, vb, wb[g]) for g in range(n_grid)]
                except NumericError:
                    pass
        lo = np.nanpercentile(draws, 2.5, axis=0)
        hi = np.nanpercentile(draws, 97.5, axis=0)
        ci = list(zip(lo.tolist(), hi.tolist()))

    info = []
    if n_boot:
        info.append(ResamplingInfo("bootstrap", n_boot, seed))
    if n_perm:
        info.append(ResamplingInfo("permutation", n_perm, seed))
    out = []
    for g in range(n_grid):
        out.append(
            (
                float(grid[g]),
                AssocResult(
                    estimate=float(estimates[g]),
                    ci_low=ci[g][0],
                    ci_high=ci[g][1],
                    p_value=p_values[g],
                    method="conditional_spearman",
                    n_used=x.n,
                    resampling=tuple(info),
                ),
            )
        )
    return out


# ---------------------------------------------------------------------------
# batch scan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanConfig:
    """Settings for a many-predictors scan against a single outcome."""

    x_model: str = "orm-logit"
    y_model: str = "linear-empirical"
    n_perm: int = 1000
    workers: int = 1
    seed: int | None = None


@dataclass(frozen=True)
class ScanRow:
    name: str
    estimate: float
    p_value: float
    n_used: int
    status: str
    detail: str = ""
    rank: int | None = None


def _scan_single(col, idx, ypsr, zmat, znames, x_model, n_perm, seed) -> ScanRow:
    mask = ~col.missing
    n_used = int(mask.sum())
    if n_used < 3:
        return ScanRow(col.name, np.nan, np.nan, n_used, "failed", "fewer than 3 observations")
    rows = np.flatnonzero(mask)
    xs = col.take(rows)
    if float(np.std(xs.values)) == 0.0:
        return ScanRow(
            col.name, np.nan, np.nan, n_used, "degenerate",
            "predictor is constant on its observed rows",
        )
    Zsub = DesignMatrix(zmat[rows], znames) if zmat is not None else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            u = margin_psr(xs, Zsub, x_model).values
        except PsrKitError as exc:
            return ScanRow(col.name, np.nan, np.nan, n_used, "failed", str(exc))
    if float(np.std(u)) < 1e-6:
        return ScanRow(
            col.name, np.nan, np.nan, n_used, "degenerate",
            "predictor residuals have (near) zero variance given Z",
        )
    v = ypsr[mask]
    try:
        est = _pearson(u, v)
    except DegenerateFitError as exc:
        return ScanRow(col.name, np.nan, np.nan, n_used, "degenerate", str(exc))
    rng = _substream(seed, _TAG_SCAN, idx)
    p = _perm_pvalue(u, v, est, n_perm, rng, _pearson)
    return ScanRow(col.name, est, p, n_used, "ok")


#: worker-process state installed by the pool initializer
_SCAN_STATE: dict = {}


def _scan_init(ypsr, zmat, znames, x_model, n_perm, seed) -> None:
    _SCAN_STATE["args"] = (ypsr, zmat, znames, x_model, n_perm, seed)


def _scan_task(payload) -> ScanRow:
    idx, col = payload
    return _scan_single(col, idx, *_SCAN_STATE["args"])


def batch_partial_spearman(
    y: Column,
    Z: DesignMatrix | None,
    predictors: Sequence[Column],
    config: ScanConfig,
) -> list[ScanRow]:
    """Partial rank correlation of one outcome against many predictors.

    The outcome's residual vector is computed once (by default through the
    least-squares-then-rank device, ``linear-empirical``); each predictor is
    then residualized on Z, correlated, and assigned a permutation p-value
    from its own seed-derived substream.  Rows with missing predictor cells
    use the remaining rows.  A failed or degenerate predictor is reported
    and the scan continues; a failed outcome fit aborts.  Output is ranked
    by p-value with |estimate| breaking ties.
    """
    if config.n_perm and config.seed is None:
        raise InputError("a seed is required whenever resampling is requested")
    if y.missing.any():
        raise InputError(f"outcome {y.name!r} has missing values; run complete_cases first")
    if Z is not None and Z.p == 0:
        Z = None
    if Z is not None and Z.n != y.n:
        raise InputError("Z does not align with the outcome")
    ypsr = margin_psr(y, Z, config.y_model).values
    zmat = Z.matrix if Z is not None else None
    znames = tuple(Z.names) if Z is not None else ()

    tasks = list(enumerate(predictors))
    for _, col in tasks:
        if col.n != y.n:
            raise InputError(f"predictor {col.name!r} does not align with the outcome")
    shared = (ypsr, zmat, znames, config.x_model, config.n_perm, config.seed)
    if config.workers > 1 and len(tasks) > 1:
        chunk = max(1, len(tasks) // (config.workers * 8))
        with ProcessPoolExecutor(
            max_workers=config.workers, initializer=_scan_init, initargs=shared
        ) as pool:
            results = list(pool.map(_scan_task, tasks, chunksize=chunk))
    else:
        results = [_scan_single(col, idx, *shared) for idx, col in tasks]

    ok = [r for r in results if r.status == "ok"]
    rest = [r for r in results if r.status != "ok"]
    ok.sort(key=lambda r: (r.p_value, -abs(r.estimate), r.name))
    ranked = [replace(r, rank=i + 1) for i, r in enumerate(ok)]
    return ranked + rest


# ---------------------------------------------------------------------------
# correlation matrices
# ---------------------------------------------------------------------------


def correlation_matrix(
    d,
    biomarkers: Sequence[str],
    Z: DesignMatrix | None,
    *,
    n_perm: int = 1000,
    seed: int | None = None,
):
    """Pairwise rank correlations among named columns of a dataset.

    Returns ``(names, estimates, p_values, notes)`` where the upper triangle
    of ``estimates`` holds unadjusted spearman values, the lower triangle
    the Z-adjusted partial values, and the diagonal is 1.  Pairs are reduced
    to their complete cases; failed pairs leave NaN cells and a note, and
    the rest of the matrix still fills in.
    """
    names = list(biomarkers)
    k = len(names)
    if k < 2:
        raise InputError("a correlation matrix needs at least 2 columns")
    est = np.eye(k)
    pval = np.full((k, k), np.nan)
    notes: list[str] = []
    for i in range(k):
        for j in range(i + 1, k):
            ci, cj = d[names[i]], d[names[j]]
            mask = ~ci.missing & ~cj.missing
            rows = np.flatnonzero(mask)
            if rows.size < 3:
                notes.append(f"{names[i]}/{names[j]}: fewer than 3 complete rows")
                est[i, j] = est[j, i] = np.nan
                continue
            xs, ys = ci.take(rows), cj.take(rows)
            Zsub = Z.take(rows) if Z is not None else None
            pair_seed = _fold_seed(seed, _TAG_PAIR, i, j) if seed is not None else None
            try:
                r_u = spearman(xs, ys, n_perm=n_perm, seed=pair_seed)
                est[i, j] = r_u.estimate
                pval[i, j] = r_u.p_value if r_u.p_value is not None else np.nan
            except PsrKitError as exc:
                notes.append(f"{names[i]}/{names[j]} unadjusted: {exc}")
                est[i, j] = np.nan
            try:
                r_a = partial_spearman(
                    xs, ys, Zsub, n_boot=0, n_perm=n_perm, seed=pair_seed
                )
                est[j, i] = r_a.estimate
                pval[j, i] = r_a.p_value if r_a.p_value is not None else np.nan
            except PsrKitError as exc:
                notes.append(f"{names[i]}/{names[j]} adjusted: {exc}")
                est[j, i] = np.nan
    return names, est, pval, notes
