"""Tests for the data-generating processes and the replication runner."""

import numpy as np
import pytest

from spw.data import RngHandle, build_strata
from spw.errors import DegenerateSamples, SpwError, TooFewSamples
from spw.finite_sample import fpw_set
from spw.gpw import BasisSpec
from spw.simulate import (
    FiniteSampleDgp,
    LargeSampleDgp,
    density_summary,
    fs_study_estimators,
    gen_finite_sample,
    gen_large_sample,
    gpw_study_estimator,
    run_study,
    scaled_ate_study_estimator,
)


class TestLargeSampleDgp:
    def test_propensity_column_is_x_fourth(self):
        data = gen_large_sample(LargeSampleDgp(n=500), RngHandle(1).generator())
        np.testing.assert_array_equal(data.propensity, np.asarray(data.x) ** 4)

    def test_treated_share_matches_moment(self):
        # E[W] = E[X^4] = 1/5.
        data = gen_large_sample(LargeSampleDgp(n=20000), RngHandle(2).generator())
        se = float(np.std(data.w)) / np.sqrt(data.n)
        assert abs(float(np.mean(data.w)) - 0.2) < 3 * se + 1e-3

    def test_average_effect_is_two(self):
        data = gen_large_sample(LargeSampleDgp(n=20000), RngHandle(3).generator())
        tau = 3.0 - 2.0 * np.asarray(data.x)
        assert float(np.mean(tau)) == pytest.approx(2.0, abs=0.02)

    def test_passes_validation(self):
        data = gen_large_sample(LargeSampleDgp(n=100), RngHandle(4).generator())
        assert data.mode == "large" and data.treatments == (0, 1)


class TestFiniteSampleDgp:
    def test_stratum_sizes(self):
        data = gen_finite_sample(FiniteSampleDgp(n=50), RngHandle(5).generator())
        strata = build_strata(data)
        np.testing.assert_array_equal(np.sort(strata.counts), [10, 40])

    def test_control_mean_is_ten(self):
        dgp = FiniteSampleDgp(n=5000, lam1=0.5)
        data = gen_finite_sample(dgp, RngHandle(6).generator())
        controls = data.y[data.w == 0]
        assert float(np.mean(controls)) == pytest.approx(10.0, abs=0.15)

    def test_n_must_split_evenly(self):
        with pytest.raises(SpwError):
            FiniteSampleDgp(n=52)

    def test_bounds_cover_outcomes(self):
        dgp = FiniteSampleDgp(n=500, lam1=0.3)
        data = gen_finite_sample(dgp, RngHandle(7).generator())
        b = dgp.response_bounds()
        y0 = data.y[data.w == 0]
        y1 = data.y[data.w == 1]
        assert y0.min() >= b[0][0] and y0.max() <= b[0][1]
        assert y1.min() >= b[1][0] and y1.max() <= b[1][1]


class TestRunStudy:
    def test_seed_determinism_and_threads(self):
        dgp = FiniteSampleDgp(n=50, lam1=0.1)
        estimators = fs_study_estimators(dgp.fs_config())
        a = run_study(dgp, estimators, reps=20, seed=42)
        b = run_study(dgp, estimators, reps=20, seed=42, threads=4)
        np.testing.assert_array_equal(a.matrix, b.matrix)
        assert a.columns == b.columns

    def test_summary_bias_fields(self):
        dgp = FiniteSampleDgp(n=50, lam1=0.5)
        est = {"scaled": scaled_ate_study_estimator()}
        result = run_study(dgp, est, reps=50, seed=3)
        summary = result.summary({"scaled.est": 2.5})
        assert "bias" in summary["scaled.est"]
        assert summary["scaled.est"]["n_ok"] == 50

    def test_estimator_errors_recorded_not_fatal(self):
        dgp = FiniteSampleDgp(n=50, lam1=0.5)

        # Probe call must succeed to fix the layout, so fail from rep 1 on.
        calls = {"n": 0}

        def sometimes(data):
            calls["n"] += 1
            if calls["n"] > 1:
                raise DegenerateSamples()
            return {"est": 1.0}

        result = run_study(dgp, {"flaky": sometimes}, reps=5, seed=1)
        assert result.error_counts["flaky"] == 5
        assert np.all(np.isnan(result.matrix))

    def test_gpw_estimator_wrapper_coverage_columns(self):
        dgp = LargeSampleDgp(n=300)
        est = {
            "npw": gpw_study_estimator(1.0, BasisSpec.linear(), truth_beta=(3.0, -2.0))
        }
        result = run_study(dgp, est, reps=5, seed=9)
        assert "npw.cover_b0" in result.columns
        cover = result.column("npw.cover_b0")
        assert set(np.unique(cover)) <= {0.0, 1.0}


class TestFpwIntervalFraction:
    def test_rarely_set_valued_under_strong_overlap(self):
        # lambda = 0.5, n = 500: both strata occupied essentially always.
        dgp = FiniteSampleDgp(n=500, lam1=0.5)
        cfg = dgp.fs_config()
        intervals = 0
        reps = 200
        for r in range(reps):
            data = dgp.generate(RngHandle(77).child(r).generator())
            if not fpw_set(data, build_strata(data), cfg).is_point:
                intervals += 1
        assert intervals == 0


class TestDensitySummary:
    def test_standard_normal_density_at_zero(self):
        rng = RngHandle(8).generator()
        samples = rng.standard_normal(20000)
        dens = density_summary(samples)
        at_zero = dens.density[np.argmin(np.abs(dens.grid))]
        assert at_zero == pytest.approx(0.3989, abs=0.02)

    def test_integrates_to_one(self):
        rng = RngHandle(9).generator()
        samples = rng.normal(3.0, 2.0, 5000)
        dens = density_summary(samples)
        integral = float(
            np.sum(0.5 * (dens.density[1:] + dens.density[:-1]) * np.diff(dens.grid))
        )
        assert integral == pytest.approx(1.0, abs=0.01)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            density_summary(np.arange(10.0))

    def test_degenerate_samples(self):
        with pytest.raises(DegenerateSamples):
            density_summary(np.full(100, 2.0))

    def test_bandwidth_recorded(self):
        rng = RngHandle(10).generator()
        dens = density_summary(rng.standard_normal(1000))
        assert dens.bandwidth > 0
