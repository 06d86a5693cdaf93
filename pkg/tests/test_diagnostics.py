"""Diagnostics: uniformity checks, robust smoothing, SVG rendering."""
import numpy as np
import pytest
from scipy import stats

from psrkit.data_model import Column
from psrkit.diagnostics import (
    ks_uniform,
    lowess,
    qq_uniform,
    render_qq,
    render_residual,
    residual_by_predictor,
)
from psrkit.estimators import fit_cumulative_link, fit_empirical
from psrkit.exceptions import InputError
from psrkit.psr import psr_all


class TestQQ:
    def test_theoretical_positions_n4(self):
        qq = qq_uniform(np.array([0.3, -0.9, 0.1, -0.2]))
        # midpoint positions on [-1, 1]: -1 + 2*(i - 0.5)/n
        assert qq.theoretical.tolist() == [-0.75, -0.25, 0.25, 0.75]
        assert qq.sample.tolist() == [-0.9, -0.2, 0.1, 0.3]
        assert qq.n == 4

    def test_rejects_out_of_range(self):
        with pytest.raises(InputError):
            qq_uniform(np.array([0.0, 1.5]))

    def test_rejects_nonfinite(self):
        with pytest.raises(InputError):
            qq_uniform(np.array([0.0, np.nan]))

    def test_uniform_sample_hugs_identity(self):
        rng = np.random.default_rng(0)
        qq = qq_uniform(rng.uniform(-1, 1, 4000))
        assert np.max(np.abs(qq.sample - qq.theoretical)) < 0.08


class TestKsUniform:
    def test_matches_reference_asymptotic_ks(self):
        rng = np.random.default_rng(1)
        r = rng.uniform(-1, 1, 200)
        ours = ks_uniform(r)
        ref = stats.kstest((r + 1) / 2, "uniform", mode="asymp")
        assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)
        assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-10)

    def test_hand_statistic(self):
        # n=8 equally spaced at midpoints: D+ = D- = 1/(2n)
        r = -1 + 2 * (np.arange(1, 9) - 0.5) / 8
        res = ks_uniform(r)
        assert res.statistic == pytest.approx(1 / 16, abs=1e-15)

    def test_needs_eight_observations(self):
        with pytest.raises(InputError, match="8"):
            ks_uniform(np.zeros(7))

    def test_discrete_residuals_warn(self):
        rng = np.random.default_rng(2)
        y = Column.ordinal("y", rng.integers(0, 3, 100).astype(float), ("a", "b", "c"))
        r = psr_all(fit_empirical(y), y)
        with pytest.warns(UserWarning, match="discrete"):
            ks_uniform(r)

    def test_shifted_distribution_rejected(self):
        rng = np.random.default_rng(3)
        res = ks_uniform(np.clip(rng.uniform(-1, 1, 500) + 0.3, -1, 1))
        assert res.p_value < 1e-6

    def test_calibration_near_nominal_level(self):
        rng = np.random.default_rng(4)
        reps, n, alpha = 400, 500, 0.05
        rejections = sum(
            ks_uniform(rng.uniform(-1, 1, n)).p_value < alpha for _ in range(reps)
        )
        assert 0.02 <= rejections / reps <= 0.09

    def test_correct_model_residuals_pass(self):
        rng = np.random.default_rng(5)
        n = 1500
        x = rng.normal(0, 1, n)
        latent = 1.2 * x + rng.logistic(0, 1, n)
        y = Column.continuous("y", np.round(latent, 1))
        from psrkit.data_model import DesignMatrix

        fit = fit_cumulative_link(y, DesignMatrix(x[:, None], ("x",)), link="logit")
        with pytest.warns(UserWarning, match="discrete"):
            res = ks_uniform(psr_all(fit, y, DesignMatrix(x[:, None], ("x",))))
        assert res.p_value > 0.01


class TestLowess:
    def test_exact_on_line(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(0, 10, 60)
        y = 2.0 + 0.5 * x
        sm = lowess(x, y)
        assert np.allclose(sm.fitted, 2.0 + 0.5 * sm.grid, atol=1e-9)

    def test_grid_is_sorted_unique_x(self):
        x = np.array([3.0, 1.0, 2.0, 1.0])
        sm = lowess(x, np.array([1.0, 2.0, 3.0, 4.0]), span=1.0)
        assert sm.grid.tolist() == [1.0, 2.0, 3.0]

    def test_duplicates_average_when_window_degenerate(self):
        x = np.array([1.0, 1.0, 1.0, 5.0, 5.0])
        y = np.array([1.0, 2.0, 3.0, 10.0, 12.0])
        sm = lowess(x, y, span=0.4, robust_iters=0)
        i1 = np.searchsorted(sm.grid, 1.0)
        assert sm.fitted[i1] == pytest.approx(2.0, abs=1e-12)

    def test_robust_iterations_resist_outliers(self):
        rng = np.random.default_rng(7)
        x = np.linspace(0, 1, 120)
        y = np.sin(2 * x) + rng.normal(0, 0.03, 120)
        y[::17] += 6.0  # gross outliers
        plain = lowess(x, y, robust_iters=0)
        robust = lowess(x, y, robust_iters=3)
        truth = np.sin(2 * plain.grid)
        err_plain = np.max(np.abs(plain.fitted - truth))
        err_robust = np.max(np.abs(robust.fitted - truth))
        assert err_robust < err_plain / 3

    def test_recovers_smooth_curve(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(-2, 2, 400)
        y = x**2 + rng.normal(0, 0.1, 400)
        sm = lowess(x, y, span=0.3)
        inner = (sm.grid > -1.5) & (sm.grid < 1.5)
        assert np.max(np.abs(sm.fitted[inner] - sm.grid[inner] ** 2)) < 0.15

    def test_span_validation(self):
        x, y = np.arange(10.0), np.arange(10.0)
        with pytest.raises(InputError):
            lowess(x, y, span=0.0)
        with pytest.raises(InputError):
            lowess(x, y, span=1.5)
        with pytest.raises(InputError):
            lowess(x, y[:5])

    def test_needs_enough_points(self):
        with pytest.raises(InputError):
            lowess(np.array([1.0]), np.array([1.0]))


class TestResidualByPredictor:
    def test_column_input_and_label(self):
        rng = np.random.default_rng(9)
        x = Column.continuous("age", rng.uniform(20, 80, 50))
        r = rng.uniform(-1, 1, 50)
        plot = residual_by_predictor(x, r)
        assert plot.x_label == "age"
        assert plot.smooth.grid.size == np.unique(x.values).size

    def test_rejects_noncontinuous_column(self):
        x = Column.binary("b", np.zeros(20))
        with pytest.raises(InputError, match="continuous"):
            residual_by_predictor(x, np.zeros(20))

    def test_rejects_missing(self):
        x = Column.continuous("a", np.arange(20.0), missing=np.arange(20) == 3)
        with pytest.raises(InputError, match="complete_cases"):
            residual_by_predictor(x, np.zeros(20))

    def test_length_mismatch(self):
        with pytest.raises(InputError, match="length"):
            residual_by_predictor(np.arange(10.0), np.zeros(9))


class TestSvgRendering:
    def _qq(self):
        rng = np.random.default_rng(10)
        return qq_uniform(rng.uniform(-1, 1, 25))

    def _plot(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 1, 25)
        return residual_by_predictor(x, rng.uniform(-1, 1, 25))

    def test_qq_structure(self):
        svg = render_qq(self._qq())
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert 'width="640.00"' in svg and 'height="480.00"' in svg
        assert svg.count("<circle") == 25
        assert svg.count("<line ") == 1  # identity reference
        assert svg.count("<path") == 1  # axes
        assert "<polyline" not in svg
        assert "Residual uniformity (QQ)" in svg

    def test_residual_structure(self):
        svg = render_residual(self._plot(), title="residuals vs x")
        assert svg.count("<circle") == 25
        assert svg.count("<line ") == 1  # zero reference
        assert svg.count("<polyline") == 1  # smooth curve
        assert "residuals vs x" in svg

    def test_byte_determinism(self):
        assert render_qq(self._qq()) == render_qq(self._qq())
        assert render_residual(self._plot()) == render_residual(self._plot())

    def test_coordinates_are_fixed_precision(self):
        import re

        svg = render_qq(self._qq())
        for m in re.finditer(r'c[xy]="([-0-9.]+)"', svg):
            whole, frac = m.group(1).split(".")
            assert len(frac) == 2

    def test_degenerate_range_still_renders(self):
        svg = render_residual(
            residual_by_predictor(np.full(10, 3.0), np.zeros(10), span=1.0)
        )
        assert svg.count("<circle") == 10
