"""Probability-scale residuals.

For an observed value ``y`` and a fitted distribution ``F`` the residual is

    r(y, F) = P(Y* < y) - P(Y* > y) = F(y-) + F(y) - 1,

which lies in [-1, 1], has expectation zero under a correctly specified
model, and is uniform on (-1, 1) for continuous outcomes.  For a
right-censored observation (time y, event indicator delta) the residual is

    r(y, F, delta) = F(y) - delta * (1 - F(y-)),

which reduces to the uncensored form when delta = 1 and to F(y) in [0, 1]
when delta = 0; its expectation is again zero under a correct model.

:func:`psr_from_omers` converts observed-minus-expected residuals from a
fitted mean model into empirical-CDF residuals, the device used to feed
continuous outcomes into rank-correlation scans without distributional
assumptions.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .data_model import Column, ColumnKind, Dataset, DesignMatrix
from .estimators import CUMULATIVE_LINKS, ModelFit, predict_distribution
from .exceptions import InputError
from .fitted_dist import FittedDistribution

__all__ = [
    "PsrVector",
    "psr",
    "psr_censored",
    "psr_from_omers",
    "psr_all",
    "normal_transform",
]

# tolerated floating-point excursion beyond the mathematical [-1, 1] bounds
_BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class PsrVector:
    """Residuals in [-1, 1] plus provenance metadata.

    ``discrete`` records whether the generating fit had a discrete outcome
    distribution, which downstream uniformity checks use to warn that exact
    uniformity cannot hold.
    """

    values: np.ndarray
    source: str
    discrete: bool | None = None

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise InputError("residual vector must be a nonempty 1-d array")
        if not np.all(np.isfinite(vals)):
            raise InputError("residuals must be finite")
        if np.max(np.abs(vals)) > 1.0 + _BOUND_SLACK:
            raise InputError("residuals must lie in [-1, 1]")
        object.__setattr__(self, "values", np.clip(vals, -1.0, 1.0))

    @property
    def n(self) -> int:
        return self.values.size


def psr(y: float, dist: FittedDistribution) -> float:
    """r(y, F) = F(y-) + F(y) - 1."""
    return dist.cdf_left(y) + dist.cdf(y) - 1.0


def psr_censored(y: float, delta: float, dist: FittedDistribution) -> float:
    """r(y, F, delta) = F(y) - delta * (1 - F(y-)) for right-censored data."""
    if delta not in (0, 1):
        raise InputError(f"event indicator must be 0 or 1, got {delta!r}")
    return dist.cdf(y) - delta * (1.0 - dist.cdf_left(y))


def psr_from_omers(residuals, source: str = "omer") -> PsrVector:
    """Empirical-CDF residuals from observed-minus-expected residuals.

    Each entry is (#{e_j < e_i} - #{e_j > e_i}) / n, i.e. the probability
    scale residual of e_i against the empirical distribution of all e_j.
    Under no ties this equals (2 * rank_i - n - 1) / n.
    """
    res = np.asarray(residuals, dtype=float)
    if res.ndim != 1 or res.size == 0:
        raise InputError("residuals must be a nonempty 1-d array")
    if not np.all(np.isfinite(res)):
        raise InputError("residuals must be finite")
    n = res.size
    sorted_res = np.sort(res)
    n_less = np.searchsorted(sorted_res, res, side="left")
    n_greater = n - np.searchsorted(sorted_res, res, side="right")
    return PsrVector((n_less - n_greater) / n, source=source, discrete=True)


def _as_outcome_column(data: Dataset | Column, fit: ModelFit) -> Column:
    if isinstance(data, Column):
        col = data
    else:
        col = data[fit.outcome]
    if col.name != fit.outcome:
        raise InputError(f"column {col.name!r} does not match fit outcome {fit.outcome!r}")
    return col


def psr_all(fit: ModelFit, data: Dataset | Column, X: DesignMatrix | None = None) -> PsrVector:
    """Probability-scale residuals for every row of a dataset under a fit.

    Equivalent to evaluating :func:`psr` (or :func:`psr_censored` for
    right-censored outcomes) against :func:`predict_distribution` row by
    row, but vectorized per model family.
    """
    col = _as_outcome_column(data, fit)
    if col.missing.any():
        raise InputError(f"column {col.name!r} has missing values; run complete_cases first")
    n = col.n
    if X is not None:
        if X.n != n:
            raise InputError("design matrix does not align with the outcome")
        if X.p != fit.beta.size:
            raise InputError(f"design has {X.p} columns, fit expects {fit.beta.size}")
        xb = X.matrix @ fit.beta
    else:
        if fit.beta.size:
            raise InputError(f"fit expects {fit.beta.size} design columns")
        xb = np.zeros(n)
    source = f"{fit.link}:{fit.outcome}"

    if col.kind is ColumnKind.RIGHT_CENSORED:
        times, delta = col.values, col.events
        if fit.link == "log-exponential":
            rate = np.exp(fit.alpha[0] + xb)
            cdf = np.where(times > 0, -np.expm1(-rate * times), 0.0)
            vals = cdf - delta * (1.0 - cdf)
        else:
            vals = np.array(
                [
                    psr_censored(times[i], delta[i], predict_distribution(fit, _row(X, i)))
                    for i in range(n)
                ]
            )
        return PsrVector(vals, source=source, discrete=fit.is_discrete)

    yv = col.values
    if fit.link == "empirical" or fit.link in CUMULATIVE_LINKS:
        vals = _discrete_psr(fit, yv, xb)
    elif fit.link == "identity-normal":
        vals = 2.0 * special.ndtr((yv - (fit.alpha[0] + xb)) / fit.scale) - 1.0
    elif fit.link == "log-poisson":
        mu = np.exp(fit.alpha[0] + xb)
        vals = stats.poisson.cdf(yv - 1.0, mu) + stats.poisson.cdf(yv, mu) - 1.0
    elif fit.link == "log-exponential":
        rate = np.exp(fit.alpha[0] + xb)
        cdf = np.where(yv > 0, -np.expm1(-rate * yv), 0.0)
        vals = 2.0 * cdf - 1.0
    else:
        vals = np.array(
            [psr(yv[i], predict_distribution(fit, _row(X, i))) for i in range(n)]
        )
    return PsrVector(vals, source=source, discrete=fit.is_discrete)


def _row(X: DesignMatrix | None, i: int) -> np.ndarray:
    return X.matrix[i] if X is not None else np.zeros(0)


def _discrete_psr(fit: ModelFit, yv: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """F(y-) + F(y) - 1 against per-row discrete CDFs, without materializing them.

    Only two cumulative probabilities per row are needed: the ones at the
    support positions bracketing the observed value.
    """
    support = fit.support
    hi = np.searchsorted(support, yv, side="right")  # support points <= y
    lo = np.searchsorted(support, yv, side="left")  # support points < y
    return _cum_at(fit, hi, xb) + _cum_at(fit, lo, xb) - 1.0


def _cum_at(fit: ModelFit, pos: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Cumulative probability just after `pos` support points, per row."""
    n_pts = fit.support.size
    out = np.empty(pos.size)
    out[pos == 0] = 0.0
    out[pos == n_pts] = 1.0
    mid = (pos > 0) & (pos < n_pts)
    if np.any(mid):
        if fit.link == "empirical":
            out[mid] = fit.support_cum_probs[pos[mid] - 1]
        else:
            fam = CUMULATIVE_LINKS[fit.link]
            cum = fam.cdf(fit.alpha[pos[mid] - 1] - xb[mid])
            out[mid] = np.clip(cum, 0.0, 1.0)
    return out


def normal_transform(residuals: PsrVector | np.ndarray) -> np.ndarray:
    """Map residuals r to the normal scale via ndtri((r + 1) / 2).

    Residuals of exactly +-1 map to +-inf; a warning is emitted so callers
    know to treat those entries as sentinels rather than numbers.
    """
    r = residuals.values if isinstance(residuals, PsrVector) else np.asarray(residuals, float)
    if np.any(np.abs(r) > 1.0):
        raise InputError("residuals must lie in [-1, 1]")
    n_exact = int(np.sum(np.abs(r) == 1.0))
    if n_exact:
        warnings.warn(
            f"{n_exact} residual(s) of exactly +-1 map to infinite normal scores",
            stacklevel=2,
        )
    return special.ndtri((r + 1.0) / 2.0)
