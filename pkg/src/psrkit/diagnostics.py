"""Model diagnostics on the probability scale.

Residuals from a correctly specified continuous-outcome model are uniform
on [-1, 1], so model checking reduces to checking uniformity: a
quantile-quantile plot against Uniform(-1, 1), a Kolmogorov-Smirnov test,
and residual-versus-predictor scatter plots with a robust local-linear
(lowess) smooth that should hover near zero.

Plots are rendered to SVG by hand with fixed coordinate formatting, so the
same inputs always produce byte-identical files.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .data_model import Column, ColumnKind
from .exceptions import InputError
from .psr import PsrVector

__all__ = [
    "QQData",
    "KsResult",
    "SmoothCurve",
    "ResidualPlot",
    "qq_uniform",
    "ks_uniform",
    "lowess",
    "residual_by_predictor",
    "render_qq",
    "render_residual",
]


def _residual_values(residuals) -> tuple[np.ndarray, bool]:
    if isinstance(residuals, PsrVector):
        return residuals.values, residuals.discrete
    arr = np.asarray(residuals, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InputError("residuals must be a nonempty 1-d array")
    if not np.all(np.isfinite(arr)):
        raise InputError("residuals contain non-finite values")
    if np.any(np.abs(arr) > 1.0 + 1e-9):
        raise InputError("residuals must lie in [-1, 1]")
    return np.clip(arr, -1.0, 1.0), False


@dataclass(frozen=True)
class QQData:
    """Sorted residuals paired with Uniform(-1, 1) plotting positions."""

    theoretical: np.ndarray
    sample: np.ndarray

    @property
    def n(self) -> int:
        return self.sample.size


def qq_uniform(residuals) -> QQData:
    """Quantile-quantile data against the Uniform(-1, 1) reference.

    Theoretical positions are -1 + 2(i - 0.5)/n for i = 1..n, matched to
    the sorted residuals; points near the identity line indicate a
    well-calibrated fit.
    """
    vals, _ = _residual_values(residuals)
    n = vals.size
    i = np.arange(1, n + 1, dtype=float)
    return QQData(theoretical=-1.0 + 2.0 * (i - 0.5) / n, sample=np.sort(vals))


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n: int


def ks_uniform(residuals) -> KsResult:
    """One-sample Kolmogorov-Smirnov test of Uniform(-1, 1) residuals.

    Uses the asymptotic Kolmogorov distribution for the p-value, so at
    least 8 residuals are required.  Residuals of a discrete outcome are
    not exactly uniform even under a correct model; a warning is issued
    and the test should be read as approximate.
    """
    vals, discrete = _residual_values(residuals)
    n = vals.size
    if n < 8:
        raise InputError("the uniformity test needs at least 8 residuals")
    if discrete:
        warnings.warn(
            "residuals of a discrete outcome are not exactly uniform; "
            "the uniformity test is approximate",
            stacklevel=2,
        )
    u = np.sort((vals + 1.0) / 2.0)
    i = np.arange(1, n + 1, dtype=float)
    d_plus = float(np.max(i / n - u))
    d_minus = float(np.max(u - (i - 1.0) / n))
    d = max(d_plus, d_minus, 0.0)
    p = float(special.kolmogorov(np.sqrt(n) * d))
    return KsResult(statistic=d, p_value=p, n=n)


@dataclass(frozen=True)
class SmoothCurve:
    grid: np.ndarray
    fitted: np.ndarray


def lowess(x, y, *, span: float = 2.0 / 3.0, robust_iters: int = 3) -> SmoothCurve:
    """Robust locally weighted linear regression (lowess).

    Each point is fit by weighted least squares over its ceil(span * n)
    nearest neighbors with tricube distance weights, then refit
    ``robust_iters`` times with bisquare weights on the residuals to damp
    outliers.  Returns fitted values at the sorted distinct x values.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1 or xa.size == 0:
        raise InputError("x and y must be nonempty 1-d arrays of equal length")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise InputError("x and y must be finite")
    if not 0.0 < span <= 1.0:
        raise InputError("span must be in (0, 1]")
    n = xa.size
    r = int(np.ceil(span * n))
    if r < 2:
        raise InputError("smoothing window has fewer than 2 points; increase span")

    order = np.argsort(xa, kind="stable")
    xs, ys = xa[order], ya[order]
    robust = np.ones(n)
    fitted = np.empty(n)
    for iteration in range(robust_iters + 1):
        for i in range(n):
            d = np.abs(xs - xs[i])
            cutoff = np.partition(d, r - 1)[r - 1]
            if cutoff <= 0.0:
                sel = d == 0.0
                w = robust[sel]
                fitted[i] = (
                    float(w @ ys[sel] / w.sum()) if w.sum() > 0 else float(ys[sel].mean())
                )
                continue
            w = np.clip(1.0 - (d / cutoff) ** 3, 0.0, None) ** 3 * robust
            sw = w.sum()
            if sw <= 0.0:
                fitted[i] = float(ys[d <= cutoff].mean())
                continue
            xbar = float(w @ xs) / sw
            dx = xs - xbar
            vxx = float(w @ np.square(dx))
            mean_y = float(w @ ys) / sw
            if vxx <= 1e-12 * max(1.0, float(w @ np.square(xs))):
                fitted[i] = mean_y
            else:
                slope = float(w @ (dx * ys)) / vxx
                fitted[i] = mean_y + slope * (xs[i] - xbar)
        if iteration == robust_iters:
            break
        resid = ys - fitted
        s = float(np.median(np.abs(resid)))
        if s <= 0.0:
            break
        robust = np.clip(1.0 - np.square(resid / (6.0 * s)), 0.0, None) ** 2

    grid, first = np.unique(xs, return_index=True)
    return SmoothCurve(grid=grid, fitted=fitted[first])


@dataclass(frozen=True)
class ResidualPlot:
    x: np.ndarray
    residuals: np.ndarray
    smooth: SmoothCurve
    x_label: str


def residual_by_predictor(
    x,
    residuals,
    *,
    span: float = 2.0 / 3.0,
    robust_iters: int = 3,
    label: str | None = None,
) -> ResidualPlot:
    """Residuals against one continuous predictor, with a robust smooth.

    Under a correct model the smooth stays near the zero line; curvature
    suggests a missed nonlinear effect of this predictor.
    """
    if isinstance(x, Column):
        if x.kind is not ColumnKind.CONTINUOUS:
            raise InputError(f"column {x.name!r}: residual plots need a continuous predictor")
        if x.missing.any():
            raise InputError(f"column {x.name!r} has missing values; run complete_cases first")
        xa = x.values
        name = label or x.name
    else:
        xa = np.asarray(x, dtype=float)
        name = label or "x"
    vals, _ = _residual_values(residuals)
    if xa.shape != vals.shape:
        raise InputError("predictor and residual vectors have different lengths")
    smooth = lowess(xa, vals, span=span, robust_iters=robust_iters)
    return ResidualPlot(x=xa, residuals=vals, smooth=smooth, x_label=name)


# ---------------------------------------------------------------------------
# SVG rendering
# ---------------------------------------------------------------------------

_WIDTH, _HEIGHT = 640.0, 480.0
_PAD_L, _PAD_R, _PAD_T, _PAD_B = 64.0, 24.0, 40.0, 48.0


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    """Maps data coordinates into the fixed SVG plot rectangle."""

    def __init__(self, x_lo, x_hi, y_lo, y_hi):
        if x_hi <= x_lo:
            x_lo, x_hi = x_lo - 0.5, x_lo + 0.5
        if y_hi <= y_lo:
            y_lo, y_hi = y_lo - 0.5, y_lo + 0.5
        self.x_lo, self.x_hi = float(x_lo), float(x_hi)
        self.y_lo, self.y_hi = float(y_lo), float(y_hi)

    def sx(self, v: float) -> float:
        frac = (v - self.x_lo) / (self.x_hi - self.x_lo)
        return _PAD_L + frac * (_WIDTH - _PAD_L - _PAD_R)

    def sy(self, v: float) -> float:
        frac = (v - self.y_lo) / (self.y_hi - self.y_lo)
        return _HEIGHT - _PAD_B - frac * (_HEIGHT - _PAD_T - _PAD_B)


def _svg_document(frame, title, x_label, y_label, body: list[str]) -> str:
    x0, y0 = _PAD_L, _HEIGHT - _PAD_B
    x1, y1 = _WIDTH - _PAD_R, _PAD_T
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(_WIDTH)}"'
        f' height="{_fmt(_HEIGHT)}" viewBox="0 0 {_fmt(_WIDTH)} {_fmt(_HEIGHT)}">',
        f'<path d="M {_fmt(x0)} {_fmt(y1)} L {_fmt(x0)} {_fmt(y0)} L {_fmt(x1)} {_fmt(y0)}"'
        ' fill="none" stroke="#000000" stroke-width="1"/>',
        f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(_PAD_T / 2 + 6)}" text-anchor="middle"'
        f' font-family="monospace" font-size="14">{title}</text>',
        f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(_HEIGHT - 10)}" text-anchor="middle"'
        f' font-family="monospace" font-size="12">{x_label}</text>',
        f'<text x="16" y="{_fmt((y0 + y1) / 2)}" text-anchor="middle"'
        f' font-family="monospace" font-size="12"'
        f' transform="rotate(-90 16 {_fmt((y0 + y1) / 2)})">{y_label}</text>',
        f'<text x="{_fmt(x0)}" y="{_fmt(y0 + 16)}" text-anchor="middle"'
        f' font-family="monospace" font-size="10">{_fmt(frame.x_lo)}</text>',
        f'<text x="{_fmt(x1)}" y="{_fmt(y0 + 16)}" text-anchor="middle"'
        f' font-family="monospace" font-size="10">{_fmt(frame.x_hi)}</text>',
        f'<text x="{_fmt(x0 - 6)}" y="{_fmt(y0 + 4)}" text-anchor="end"'
        f' font-family="monospace" font-size="10">{_fmt(frame.y_lo)}</text>',
        f'<text x="{_fmt(x0 - 6)}" y="{_fmt(y1 + 4)}" text-anchor="end"'
        f' font-family="monospace" font-size="10">{_fmt(frame.y_hi)}</text>',
    ]
    parts.extend(body)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _circles(frame, xs, ys) -> list[str]:
    return [
        f'<circle cx="{_fmt(frame.sx(float(xv)))}" cy="{_fmt(frame.sy(float(yv)))}"'
        ' r="2.50" fill="#1f77b4" fill-opacity="0.70"/>'
        for xv, yv in zip(xs, ys)
    ]


def _reference_line(frame, p0, p1) -> str:
    return (
        f'<line x1="{_fmt(frame.sx(p0[0]))}" y1="{_fmt(frame.sy(p0[1]))}"'
        f' x2="{_fmt(frame.sx(p1[0]))}" y2="{_fmt(frame.sy(p1[1]))}"'
        ' stroke="#888888" stroke-width="1" stroke-dasharray="4 4"/>'
    )


def _polyline(frame, xs, ys) -> str:
    pts = " ".join(
        f"{_fmt(frame.sx(float(xv)))},{_fmt(frame.sy(float(yv)))}" for xv, yv in zip(xs, ys)
    )
    return f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="2"/>'


def render_qq(qq: QQData, *, title: str = "Residual uniformity (QQ)") -> str:
    """SVG of the uniform QQ plot with the identity reference line."""
    if qq.n == 0:
        raise InputError("cannot render an empty QQ plot")
    frame = _Frame(-1.0, 1.0, -1.0, 1.0)
    body = [_reference_line(frame, (-1.0, -1.0), (1.0, 1.0))]
    body.extend(_circles(frame, qq.theoretical, qq.sample))
    return _svg_document(frame, title, "uniform quantiles", "sorted residuals", body)


def render_residual(plot: ResidualPlot, *, title: str | None = None) -> str:
    """SVG scatter of residuals vs a predictor, zero line, and lowess curve."""
    if plot.x.size == 0:
        raise InputError("cannot render an empty residual plot")
    frame = _Frame(float(plot.x.min()), float(plot.x.max()), -1.0, 1.0)
    body = [_reference_line(frame, (frame.x_lo, 0.0), (frame.x_hi, 0.0))]
    body.extend(_circles(frame, plot.x, plot.residuals))
    body.append(_polyline(frame, plot.smooth.grid, plot.smooth.fitted))
    return _svg_document(
        frame,
        title if title is not None else f"Residuals vs {plot.x_label}",
        plot.x_label,
        "residual",
        body,
    )
