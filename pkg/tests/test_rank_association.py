"""Rank association: bridges to classical Spearman, resampling, batch scan."""
import numpy as np
import pytest
from scipy import stats

from psrkit.data_model import Column, Dataset, DesignMatrix
from psrkit.estimators import fit_linear_normal
from psrkit.exceptions import InputError
from psrkit.psr import psr_all, psr_from_omers
from psrkit.rank_association import (
    ScanConfig,
    batch_partial_spearman,
    conditional_spearman,
    correlation_matrix,
    default_margin_model,
    margin_psr,
    partial_spearman,
    psr_covariance,
    psr_variance_discrete,
    spearman,
)
from psrkit.estimators import fit_empirical


class TestSpearmanBridge:
    def test_matches_midrank_spearman_with_ties(self):
        rng = np.random.default_rng(2)
        for trial in range(12):
            n = int(rng.integers(8, 120))
            x = rng.integers(0, 5, n).astype(float)
            y = np.round(0.5 * x + rng.normal(0, 1, n), int(rng.integers(0, 2)))
            if np.unique(x).size < 2 or np.unique(y).size < 2:
                continue
            ours = spearman(
                Column.continuous("x", x), Column.continuous("y", y)
            ).estimate
            ref = stats.spearmanr(x, y).statistic
            assert ours == pytest.approx(ref, abs=1e-12), trial

    def test_perfect_monotone_is_one(self):
        x = np.arange(25.0)
        r = spearman(
            Column.continuous("x", x), Column.continuous("y", np.exp(x))
        ).estimate
        assert r == pytest.approx(1.0, abs=1e-12)

    def test_orderable_kinds_required(self):
        t = Column.right_censored("t", [1.0, 2.0, 3.0], [1, 1, 0])
        y = Column.continuous("y", [1.0, 2.0, 3.0])
        with pytest.raises(InputError):
            spearman(t, y)

    def test_missing_rejected(self):
        x = Column.continuous("x", [1.0, 2.0], missing=[True, False])
        y = Column.continuous("y", [1.0, 2.0])
        with pytest.raises(InputError, match="complete_cases"):
            spearman(x, y)


class TestVarianceFormula:
    def test_fair_coin_exact(self):
        assert psr_variance_discrete((0.5, 0.5)) == 0.25

    def test_continuous_limit(self):
        assert psr_variance_discrete(np.full(10_000, 1e-4)) == pytest.approx(
            1 / 3, abs=1e-4
        )

    def test_matches_empirical_psr_moments_exactly(self):
        # algebraic identity: mean squared intercept-only PSR equals
        # (1 - sum f^3)/3 computed from the observed frequencies
        rng = np.random.default_rng(5)
        vals = rng.integers(0, 4, 500).astype(float)
        col = Column.continuous("y", vals)
        r = psr_all(fit_empirical(col), col).values
        _, counts = np.unique(vals, return_counts=True)
        f = counts / vals.size
        assert abs(r.mean()) < 1e-14
        assert np.mean(r**2) == pytest.approx(psr_variance_discrete(f), abs=1e-12)

    def test_validation(self):
        with pytest.raises(InputError):
            psr_variance_discrete((0.5, 0.6))
        with pytest.raises(InputError):
            psr_variance_discrete((-0.1, 1.1))


class TestPartialSpearman:
    def test_reduces_to_spearman_without_z(self):
        rng = np.random.default_rng(8)
        x = rng.normal(0, 1, 80)
        y = x + rng.normal(0, 1, 80)
        cx, cy = Column.continuous("x", x), Column.continuous("y", y)
        a = spearman(cx, cy).estimate
        b = partial_spearman(cx, cy, None, n_boot=0, n_perm=0).estimate
        assert a == pytest.approx(b, abs=1e-14)

    def test_adjusts_away_confounder(self):
        rng = np.random.default_rng(9)
        n = 500
        z = rng.normal(0, 1, n)
        x = z + rng.normal(0, 1, n)
        y = 2 * z + rng.normal(0, 1, n)
        cx, cy = Column.continuous("x", x), Column.continuous("y", y)
        Z = DesignMatrix(z[:, None], ("z",))
        un = spearman(cx, cy).estimate
        ad = partial_spearman(cx, cy, Z, n_boot=0, n_perm=0).estimate
        assert abs(un) > 0.4
        assert abs(ad) < abs(un) / 3

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(10)
        x = rng.normal(0, 1, 60)
        y = 0.4 * x + rng.normal(0, 1, 60)
        z = rng.normal(0, 1, 60)
        cx, cy = Column.continuous("x", x), Column.continuous("y", y)
        Z = DesignMatrix(z[:, None], ("z",))
        r1 = partial_spearman(cx, cy, Z, n_boot=120, n_perm=120, seed=99)
        r2 = partial_spearman(cx, cy, Z, n_boot=120, n_perm=120, seed=99)
        assert (r1.ci_low, r1.ci_high, r1.p_value) == (r2.ci_low, r2.ci_high, r2.p_value)
        r3 = partial_spearman(cx, cy, Z, n_boot=120, n_perm=120, seed=100)
        assert (r1.ci_low, r1.ci_high) != (r3.ci_low, r3.ci_high)

    def test_seed_required_for_resampling(self):
        cx = Column.continuous("x", np.arange(10.0))
        cy = Column.continuous("y", np.arange(10.0) ** 2)
        with pytest.raises(InputError, match="seed"):
            partial_spearman(cx, cy, None)  # default resampling, no seed

    def test_ci_brackets_estimate_and_positive_signal_detected(self):
        rng = np.random.default_rng(11)
        n = 250
        x = rng.normal(0, 1, n)
        y = 0.9 * x + rng.normal(0, 1, n)
        cx, cy = Column.continuous("x", x), Column.continuous("y", y)
        res = partial_spearman(cx, cy, None, n_boot=300, n_perm=300, seed=4)
        assert res.ci_low < res.estimate < res.ci_high
        assert res.ci_low > 0  # strong positive association
        assert res.p_value == pytest.approx(1 / 301, abs=1e-12)
        kinds = {info.kind for info in res.resampling}
        assert kinds == {"bootstrap", "permutation"}

    def test_resampling_metadata(self):
        cx = Column.continuous("x", np.arange(30.0))
        cy = Column.continuous("y", np.arange(30.0) % 7)
        res = partial_spearman(cx, cy, None, n_boot=50, n_perm=0, seed=1)
        assert res.p_value is None
        assert res.resampling[0].n_draws == 50
        assert res.resampling[0].seed == 1


class TestMarginModels:
    def test_default_rules(self):
        cont = Column.continuous("x", np.arange(10.0))
        surv = Column.right_censored("t", np.arange(1.0, 11.0), np.ones(10))
        Z = DesignMatrix(np.arange(10.0)[:, None], ("z",))
        assert default_margin_model(cont, None) == "empirical"
        assert default_margin_model(cont, Z) == "orm-logit"
        assert default_margin_model(surv, Z) == "exp-surv"

    def test_linear_empirical_is_omer_rank_device(self):
        rng = np.random.default_rng(14)
        n = 90
        z = rng.normal(0, 1, n)
        y = 1.0 + 2.0 * z + rng.standard_t(3, n)
        col = Column.continuous("y", y)
        Z = DesignMatrix(z[:, None], ("z",))
        got = margin_psr(col, Z, "linear-empirical").values
        fit = fit_linear_normal(col, Z)
        resid = y - (fit.alpha[0] + z * fit.beta[0])
        want = psr_from_omers(resid).values
        assert np.array_equal(got, want)

    def test_unknown_model_rejected(self):
        col = Column.continuous("x", np.arange(5.0))
        with pytest.raises(InputError, match="margin model"):
            margin_psr(col, None, "quantile")


class TestPsrCovariance:
    def test_hand_value_empirical_margins(self):
        x = Column.continuous("x", [1.0, 2.0, 3.0])
        y = Column.continuous("y", [1.0, 3.0, 2.0])
        res = psr_covariance(x, y)
        u = psr_from_omers(np.array([1.0, 2.0, 3.0])).values
        v = psr_from_omers(np.array([1.0, 3.0, 2.0])).values
        assert res.estimate == pytest.approx(float(np.mean(u * v)), abs=1e-15)

    def test_sign_matches_correlation(self):
        rng = np.random.default_rng(15)
        x = rng.normal(0, 1, 100)
        y = -0.8 * x + rng.normal(0, 1, 100)
        cx, cy = Column.continuous("x", x), Column.continuous("y", y)
        cov = psr_covariance(cx, cy).estimate
        cor = spearman(cx, cy).estimate
        assert np.sign(cov) == np.sign(cor)


class TestConditionalSpearman:
    def test_categorical_equals_per_stratum_spearman(self):
        rng = np.random.default_rng(16)
        n = 120
        g = rng.integers(0, 2, n).astype(float)
        x = rng.normal(0, 1, n)
        y = x * g + rng.normal(0, 1, n)
        res = conditional_spearman(
            Column.continuous("x", x),
            Column.continuous("y", y),
            Column.binary("g", g),
        )
        assert len(res) == 2
        for code, (label, r) in enumerate(res):
            rows = np.flatnonzero(g == code)
            direct = spearman(
                Column.continuous("x", x[rows]), Column.continuous("y", y[rows])
            ).estimate
            assert r.estimate == pytest.approx(direct, abs=1e-14)
            assert r.n_used == rows.size

    def test_ordinal_labels_returned(self):
        rng = np.random.default_rng(17)
        g = rng.integers(0, 2, 40).astype(float)
        res = conditional_spearman(
            Column.continuous("x", rng.normal(0, 1, 40)),
            Column.continuous("y", rng.normal(0, 1, 40)),
            Column.ordinal("g", g, ("low", "high")),
        )
        assert [label for label, _ in res] == ["low", "high"]

    def test_thin_stratum_rejected(self):
        g = np.array([0.0] * 10 + [1.0] * 3)
        with pytest.raises(InputError, match="fewer than 5"):
            conditional_spearman(
                Column.continuous("x", np.arange(13.0)),
                Column.continuous("y", np.arange(13.0)),
                Column.binary("g", g),
            )

    def test_continuous_recovers_effect_modification(self):
        rng = np.random.default_rng(18)
        n = 400
        z = rng.uniform(0, 1, n)
        x = rng.normal(0, 1, n)
        y = x * z + rng.normal(0, 0.5, n)
        curve = conditional_spearman(
            Column.continuous("x", x),
            Column.continuous("y", y),
            Column.continuous("z", z),
            n_grid=11,
        )
        assert len(curve) == 11
        est = [r.estimate for _, r in curve]
        assert est[-1] > est[0] + 0.2

    def test_continuous_needs_30_rows(self):
        with pytest.raises(InputError, match="30"):
            conditional_spearman(
                Column.continuous("x", np.arange(10.0)),
                Column.continuous("y", np.arange(10.0)),
                Column.continuous("z", np.arange(10.0)),
            )

    def test_degenerate_bandwidth_rejected(self):
        n = 40
        with pytest.raises(InputError, match="bandwidth"):
            conditional_spearman(
                Column.continuous("x", np.arange(float(n))),
                Column.continuous("y", np.arange(float(n))),
                Column.continuous("z", np.full(n, 2.0)),
            )


class TestBatchScan:
    def _setup(self, rng, n=150, n_null=10):
        z = rng.normal(0, 1, n)
        y = 0.7 * z + rng.normal(0, 1, n)
        planted = np.round(y + rng.normal(0, 0.7, n), 1)
        preds = [Column.continuous("planted", planted)]
        for k in range(n_null):
            vals = rng.integers(0, 3, n).astype(float)
            miss = np.zeros(n, bool)
            miss[rng.integers(0, n, 4)] = True
            preds.append(
                Column.continuous(f"null{k}", np.where(miss, 0, vals), missing=miss)
            )
        return Column.continuous("y", y), DesignMatrix(z[:, None], ("z",)), preds

    def test_planted_ranks_first_and_rows_complete(self):
        rng = np.random.default_rng(20)
        y, Z, preds = self._setup(rng)
        rows = batch_partial_spearman(
            y, Z, preds, ScanConfig(n_perm=199, seed=31)
        )
        assert len(rows) == len(preds)
        assert rows[0].name == "planted"
        assert rows[0].rank == 1
        ranks = [r.rank for r in rows if r.status == "ok"]
        assert ranks == sorted(ranks)
        p_sorted = [r.p_value for r in rows if r.status == "ok"]
        assert p_sorted == sorted(p_sorted)
        for r in rows:
            if r.name.startswith("null"):
                assert r.n_used < y.n  # missing cells dropped per predictor

    def test_worker_parity_and_determinism(self):
        rng = np.random.default_rng(21)
        y, Z, preds = self._setup(rng, n=100, n_null=6)
        cfg1 = ScanConfig(n_perm=99, seed=7, workers=1)
        cfg2 = ScanConfig(n_perm=99, seed=7, workers=3)
        r1 = batch_partial_spearman(y, Z, preds, cfg1)
        r2 = batch_partial_spearman(y, Z, preds, cfg2)
        r3 = batch_partial_spearman(y, Z, preds, cfg1)
        assert r1 == r2 == r3

    def test_degenerate_and_failed_predictors_reported(self):
        rng = np.random.default_rng(22)
        y, Z, preds = self._setup(rng, n=60, n_null=2)
        flat = Column.continuous("flat", np.full(60, 1.0))
        thin = Column.continuous(
            "thin", np.zeros(60), missing=np.array([False] * 2 + [True] * 58)
        )
        rows = batch_partial_spearman(
            y, Z, preds + [flat, thin], ScanConfig(n_perm=19, seed=3)
        )
        by_name = {r.name: r for r in rows}
        assert by_name["flat"].status == "degenerate"
        assert by_name["flat"].rank is None
        assert by_name["thin"].status == "failed"
        ok_names = [r.name for r in rows if r.status == "ok"]
        assert set(ok_names) == {"planted", "null0", "null1"}

    def test_seed_required(self):
        rng = np.random.default_rng(23)
        y, Z, preds = self._setup(rng, n=50, n_null=1)
        with pytest.raises(InputError, match="seed"):
            batch_partial_spearman(y, Z, preds, ScanConfig(n_perm=10))

    def test_outcome_failure_aborts(self):
        y = Column.continuous("y", np.full(40, 2.0))
        preds = [Column.continuous("p", np.arange(40.0))]
        with pytest.raises(Exception):
            batch_partial_spearman(y, None, preds, ScanConfig(n_perm=9, seed=1))


class TestCorrelationMatrix:
    def test_empty_z_triangles_agree(self):
        rng = np.random.default_rng(24)
        n = 80
        a = rng.normal(0, 1, n)
        b = a + rng.normal(0, 1, n)
        c = rng.normal(0, 1, n)
        d = Dataset(
            (
                Column.continuous("a", a),
                Column.continuous("b", b),
                Column.continuous("c", c),
            )
        )
        names, est, pval, notes = correlation_matrix(
            d, ["a", "b", "c"], None, n_perm=99, seed=6
        )
        assert np.allclose(np.diag(est), 1.0)
        for i in range(3):
            for j in range(i + 1, 3):
                assert est[i, j] == pytest.approx(est[j, i], abs=1e-14)
        assert notes == []

    def test_adjustment_shrinks_induced_dependence(self):
        rng = np.random.default_rng(25)
        n = 300
        z = rng.normal(0, 1, n)
        cols = [
            Column.continuous(f"m{i}", z + rng.normal(0, 0.7, n)) for i in range(3)
        ]
        d = Dataset(tuple(cols))
        Z = DesignMatrix(z[:, None], ("z",))
        _, est, _, _ = correlation_matrix(d, [c.name for c in cols], Z, n_perm=0)
        upper = [abs(est[i, j]) for i in range(3) for j in range(i + 1, 3)]
        lower = [abs(est[j, i]) for i in range(3) for j in range(i + 1, 3)]
        assert np.mean(lower) < np.mean(upper)

    def test_failed_pair_leaves_nan_and_note(self):
        d = Dataset(
            (
                Column.continuous("a", np.arange(20.0)),
                Column.continuous("b", np.arange(20.0) % 3),
                Column.right_censored("t", np.arange(1.0, 21.0), np.ones(20)),
            )
        )
        names, est, pval, notes = correlation_matrix(
            d, ["a", "b", "t"], None, n_perm=0
        )
        assert np.isnan(est[0, 2])  # censored column has no unadjusted spearman
        assert not np.isnan(est[0, 1])
        assert notes

    def test_needs_two_columns(self):
        d = Dataset((Column.continuous("a", np.arange(5.0)),))
        with pytest.raises(InputError):
            correlation_matrix(d, ["a"], None, n_perm=0)
