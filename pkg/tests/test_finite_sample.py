"""Tests for the stratified finite-sample estimators and the enumeration oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spw.data import Dataset, build_strata
from spw.errors import ConfigError, EnumerationTooLarge
from spw.finite_sample import (
    AssignmentModel,
    FsConfig,
    SetEstimate,
    enumerate_expectation,
    fpw_set,
    ipw_fs_estimate,
    loo_shrinkage_weight,
    scaled_ate,
    shrinkage_mean,
    unpooled_set,
    wmd_estimate,
)

ATE_CFG = FsConfig.binary_ate(0.0, 10.0, 0.0, 10.0)


def _make(y, w, x, treatments=(0, 1)):
    data = Dataset.from_arrays(y, w, x, treatments=treatments)
    return data, build_strata(data)


class TestShrinkageWeight:
    def test_pair_with_treated_peer(self):
        data, strata = _make([5.0, 3.0], [1, 1], [1, 1])
        assert loo_shrinkage_weight(data, strata, 0, 1) == pytest.approx(1.0)

    def test_no_matching_peer(self):
        data, strata = _make([1.0, 2.0, 3.0], [1, 0, 0], [1, 1, 1])
        assert loo_shrinkage_weight(data, strata, 0, 1) == pytest.approx(3.0)

    def test_two_matching_peers(self):
        data, strata = _make([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 0], [1, 1, 1, 1])
        # Unit 0 has two treated peers: 4 / (1 + 2).
        assert loo_shrinkage_weight(data, strata, 0, 1) == pytest.approx(4.0 / 3.0)


class TestShrinkageMean:
    def test_hand_example(self):
        data, strata = _make([5.0, 3.0], [1, 0], [1, 1])
        assert shrinkage_mean(data, strata, 1, 0) == pytest.approx(5.0)

    def test_empty_treatment_group(self):
        data, strata = _make([5.0, 3.0], [0, 0], [1, 1])
        assert shrinkage_mean(data, strata, 1, 0) == 0.0

    def test_enumeration_bias_small_case(self):
        # Two units, constant potential outcome 1, lambda = 0.5:
        # E[shrinkage mean] = 1 - (1 - 0.5)^2 = 0.75.
        data, strata = _make([0.0, 0.0], [0, 0], [1, 1])
        pot = np.ones((2, 2))
        model = AssignmentModel.binary([0.5])

        def stat(w_vec, y_vec):
            d = Dataset.from_arrays(y_vec, w_vec, [1, 1], treatments=(0, 1))
            return shrinkage_mean(d, build_strata(d), 1, 0)

        value = enumerate_expectation(stat, pot, model, strata)
        assert value == pytest.approx(0.75, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        ys=st.lists(st.floats(-10, 10), min_size=2, max_size=12),
        ws=st.lists(st.integers(0, 1), min_size=2, max_size=12),
        seed=st.integers(0, 10**6),
    )
    def test_identity_with_modified_subsample_mean(self, ys, ws, seed):
        n = min(len(ys), len(ws))
        if n < 2:
            return
        y, w = ys[:n], ws[:n]
        data, strata = _make(y, w, [1] * n)
        for wv in (0, 1):
            mask = [wi == wv for wi in w]
            modified = sum(yi for yi, m in zip(y, mask) if m) / max(1, sum(mask))
            assert shrinkage_mean(data, strata, wv, 0) == pytest.approx(
                modified, abs=1e-12
            )


class TestUnpooledSet:
    def test_occupied_stratum_is_point(self):
        data, strata = _make([5.0, 3.0], [1, 0], [1, 1])
        est = unpooled_set(data, strata, 1, 0, ATE_CFG)
        assert est.is_point and est.lo == pytest.approx(5.0)

    def test_vacant_stratum_returns_bounds(self):
        data, strata = _make([5.0, 3.0], [0, 0], [1, 1])
        est = unpooled_set(data, strata, 1, 0, ATE_CFG)
        assert (est.lo, est.hi) == (0.0, 10.0)

    def test_enumeration_unbiasedness(self):
        data, strata = _make([0.0, 0.0, 0.0], [0, 0, 0], [1, 1, 1])
        mu = (2.0, 7.0)  # control, treated means
        pot = np.column_stack([np.full(3, mu[0]), np.full(3, mu[1])])
        model = AssignmentModel.binary([0.15])

        def stat(w_vec, y_vec):
            d = Dataset.from_arrays(y_vec, w_vec, [1, 1, 1], treatments=(0, 1))
            est = unpooled_set(d, build_strata(d), 1, 0, ATE_CFG)
            return (est.lo, est.hi)

        lo, hi = enumerate_expectation(stat, pot, model, strata)
        assert lo <= mu[1] + 1e-12
        assert hi >= mu[1] - 1e-12


class TestFpw:
    def test_single_stratum_point(self):
        data, strata = _make([5.0, 3.0], [1, 0], [1, 1])
        est = fpw_set(data, strata, ATE_CFG)
        assert est.is_point
        assert est.interval.lo == pytest.approx(2.0, abs=1e-12)

    def test_single_stratum_all_control(self):
        data, strata = _make([3.0, 3.0], [0, 0], [1, 1])
        est = fpw_set(data, strata, ATE_CFG)
        assert est.interval.lo == pytest.approx(-3.0, abs=1e-12)
        assert est.interval.hi == pytest.approx(7.0, abs=1e-12)
        assert est.per_w[1].lo == pytest.approx(0.0)
        assert est.per_w[1].hi == pytest.approx(10.0)
        assert est.per_w[0].is_point and est.per_w[0].lo == pytest.approx(3.0)

    def test_pooled_imputation_from_other_stratum(self):
        # Stratum 1 has no treated units; its units borrow stratum 2's
        # treated mean, weighted by N_k / (n - N_{X_i}).
        data, strata = _make([1.0, 1.0, 8.0, 2.0], [0, 0, 1, 0], [1, 1, 2, 2])
        est = fpw_set(data, strata, ATE_CFG)
        # mu1 endpoints: units 1,2 impute stratum 2's point estimate 8.
        assert est.per_w[1].is_point
        # unit contributions: imputed 8, imputed 8, Rhat(=2)*8, 0 -> mean 8
        assert est.per_w[1].lo == pytest.approx((8.0 + 8.0 + 16.0 + 0.0) / 4.0)

    def test_point_when_every_needed_cell_occupied(self):
        data, strata = _make([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 0], [1, 1, 2, 2])
        assert fpw_set(data, strata, ATE_CFG).is_point

    def test_point_despite_single_vacant_stratum(self):
        # Pooling is the point: a lone vacant stratum borrows occupied
        # strata's point estimates, so the set still collapses.
        data, strata = _make([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 0], [1, 1, 2, 2])
        assert fpw_set(data, strata, ATE_CFG).is_point

    def test_interval_when_two_strata_vacant(self):
        # With two strata vacant for w = 1, each imputes from the other
        # (set-valued) stratum, so the bounds survive into the estimate.
        data, strata = _make([1.0, 2.0, 3.0, 4.0], [0, 0, 0, 0], [1, 1, 2, 2])
        est = fpw_set(data, strata, ATE_CFG)
        assert not est.is_point
        assert est.per_w[1].lo == pytest.approx(0.0)
        assert est.per_w[1].hi == pytest.approx(10.0)

    def test_custom_pool_weights(self):
        y = [1.0, 1.0, 8.0, 2.0, 2.0, 4.0, 6.0]
        w = [0, 0, 1, 0, 0, 1, 0]
        x = [1, 1, 2, 2, 2, 3, 3]
        data, strata = _make(y, w, x)
        uniform = lambda wv, k, vacant_k: 0.5
        est = fpw_set(data, strata, ATE_CFG, pool_weights=uniform)
        default = fpw_set(data, strata, ATE_CFG)
        # Default stratum-size weights are 3/5 and 2/5; uniform differs.
        assert est.per_w[1].lo != pytest.approx(default.per_w[1].lo)

    def test_invalid_pool_weights_rejected(self):
        data, strata = _make([1.0, 1.0, 8.0, 2.0], [0, 0, 1, 0], [1, 1, 2, 2])
        bad = lambda w, k, vacant_k: 0.2
        with pytest.raises(ConfigError):
            fpw_set(data, strata, ATE_CFG, pool_weights=bad)

    def test_permutation_invariance_within_stratum(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=6)
        w = [1, 0, 0, 1, 0, 1]
        x = [1, 1, 1, 2, 2, 2]
        data, strata = _make(y, w, x)
        perm = [2, 0, 1, 5, 4, 3]
        data2, strata2 = _make(y[perm], [w[i] for i in perm], [x[i] for i in perm])
        est = fpw_set(data, strata, ATE_CFG)
        est2 = fpw_set(data2, strata2, ATE_CFG)
        assert est.interval.lo == pytest.approx(est2.interval.lo, abs=1e-12)
        assert est.interval.hi == pytest.approx(est2.interval.hi, abs=1e-12)
        for fn in (wmd_estimate, ipw_fs_estimate):
            assert fn(data, strata, ATE_CFG) == pytest.approx(
                fn(data2, strata2, ATE_CFG), abs=1e-12
            )
        assert scaled_ate(data, strata, 1, 0) == pytest.approx(
            scaled_ate(data2, strata2, 1, 0), abs=1e-12
        )

    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(0, 10**6),
        sizes=st.lists(st.integers(2, 5), min_size=1, max_size=4),
    )
    def test_matches_per_unit_transcription(self, seed, sizes):
        # Independent oracle: literal per-unit loop over the defining
        # formula, including the single-stratum special case.
        rng = np.random.default_rng(seed)
        x = [k for k, n_k in enumerate(sizes) for _ in range(n_k)]
        n = len(x)
        w = rng.integers(0, 2, n)
        y = rng.normal(0, 3, n)
        data, strata = _make(y, w, x)
        cfg = FsConfig.binary_ate(-5.0, 5.0, -4.0, 6.0)
        est = fpw_set(data, strata, cfg)

        def oracle_endpoint(wv, t):
            total = 0.0
            for i in range(n):
                k = x[i]
                members = [j for j in range(n) if x[j] == k]
                n_k = len(members)
                peers = sum(1 for j in members if j != i and w[j] == wv)
                r_hat = n_k / (1 + peers)
                value = r_hat * (1.0 if w[i] == wv else 0.0) * y[i]
                if all(w[j] != wv for j in members):
                    if len(sizes) == 1:
                        value += t
                    else:
                        acc = 0.0
                        for k2 in range(len(sizes)):
                            if k2 == k:
                                continue
                            m2 = [j for j in range(n) if x[j] == k2]
                            count = sum(1 for j in m2 if w[j] == wv)
                            sub = sum(y[j] for j in m2 if w[j] == wv) / max(1, count)
                            vac = 1.0 if count == 0 else 0.0
                            acc += len(m2) / (n - n_k) * (sub + t * vac)
                        value += acc
                total += value
            return total / n

        for wv in (0, 1):
            lo_t, hi_t = cfg.bound_for(wv)
            assert est.per_w[wv].lo == pytest.approx(oracle_endpoint(wv, lo_t), abs=1e-10)
            assert est.per_w[wv].hi == pytest.approx(oracle_endpoint(wv, hi_t), abs=1e-10)

    def test_enumeration_unbiasedness_two_strata(self):
        # 2 strata of 3 with different assignment probabilities.
        x = [1, 1, 1, 2, 2, 2]
        mu0, mu1 = 2.0, 9.0
        pot = np.column_stack([np.full(6, mu0), np.full(6, mu1)])
        model = AssignmentModel.binary([0.1, 0.5])
        data0, strata = _make([0.0] * 6, [0] * 6, x)
        cfg = FsConfig.binary_ate(0.0, 10.0, 0.0, 10.0)

        def stat(w_vec, y_vec):
            d = Dataset.from_arrays(y_vec, w_vec, x, treatments=(0, 1))
            est = fpw_set(d, build_strata(d), cfg)
            return (est.interval.lo, est.interval.hi)

        lo, hi = enumerate_expectation(stat, pot, model, strata)
        theta = mu1 - mu0
        assert lo <= theta + 1e-12
        assert hi >= theta - 1e-12


class TestWmdIpw:
    def test_wmd_hand_example(self):
        data, strata = _make([5.0, 3.0], [1, 0], [1, 1])
        assert wmd_estimate(data, strata, ATE_CFG) == pytest.approx(2.0, abs=1e-12)

    def test_wmd_all_control_stratum_contributes_zero_treated_term(self):
        data, strata = _make([5.0, 3.0], [0, 0], [1, 1])
        assert wmd_estimate(data, strata, ATE_CFG) == pytest.approx(-4.0, abs=1e-12)

    def test_ipw_clamp_hand_example(self):
        data, strata = _make([5.0, 3.0], [1, 0], [1, 1])
        # Leave-one-out propensities are 0, clamped to 1/(2N-2) = 0.5.
        assert ipw_fs_estimate(data, strata, ATE_CFG) == pytest.approx(2.0, abs=1e-12)

    def test_ipw_biased_in_enumeration(self):
        data, strata = _make([0.0, 0.0, 0.0], [0, 0, 0], [1, 1, 1])
        mu0, mu1 = 1.0, 4.0
        pot = np.column_stack([np.full(3, mu0), np.full(3, mu1)])
        model = AssignmentModel.binary([0.3])

        def stat(w_vec, y_vec):
            d = Dataset.from_arrays(y_vec, w_vec, [1] * 3, treatments=(0, 1))
            return ipw_fs_estimate(d, build_strata(d), ATE_CFG)

        value = enumerate_expectation(stat, pot, model, strata)
        assert abs(value - (mu1 - mu0)) > 0.05

    def test_ipw_balanced_large_stratum_close_to_subsample_mean(self):
        rng = np.random.default_rng(8)
        n = 60
        w = np.array([1, 0] * (n // 2))
        y = rng.normal(5.0, 1.0, n)
        data, strata = _make(y, w, [1] * n)
        ipw = ipw_fs_estimate(data, strata, ATE_CFG)
        sub = y[w == 1].mean() - y[w == 0].mean()
        assert ipw == pytest.approx(sub, rel=0.05)


class TestScaledAte:
    def test_zero_outcomes(self):
        data, strata = _make([0.0, 0.0], [1, 0], [1, 1])
        assert scaled_ate(data, strata, 1, 0) == 0.0

    def test_hand_example(self):
        data, strata = _make([5.0, 3.0], [1, 0], [1, 1])
        assert scaled_ate(data, strata, 1, 0) == pytest.approx(1.0, abs=1e-14)

    def test_identical_treatments_rejected(self):
        data, strata = _make([5.0, 3.0], [1, 0], [1, 1])
        with pytest.raises(ConfigError):
            scaled_ate(data, strata, 1, 1)

    def test_enumeration_matches_scaled_moment(self):
        # N = 3, lambda1 = 0.3, constant potential outcomes 4 and 1:
        # E[T] = lambda1 lambda0 (mu1 - mu0) = 0.3 * 0.7 * 3 = 0.63.
        data, strata = _make([0.0] * 3, [0] * 3, [1] * 3)
        pot = np.column_stack([np.ones(3), np.full(3, 4.0)])
        model = AssignmentModel.binary([0.3])

        def stat(w_vec, y_vec):
            d = Dataset.from_arrays(y_vec, w_vec, [1] * 3, treatments=(0, 1))
            return scaled_ate(d, build_strata(d), 1, 0)

        value = enumerate_expectation(stat, pot, model, strata)
        assert value == pytest.approx(0.63, abs=1e-12)


class TestEnumerateExpectation:
    def test_total_probability(self):
        data, strata = _make([0.0] * 4, [0] * 4, [1, 1, 2, 2])
        model = AssignmentModel.binary([0.2, 0.7])
        value = enumerate_expectation(
            lambda w, y: 1.0, np.zeros((4, 2)), model, strata
        )
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_vacancy_probability(self):
        # P{no treated in a stratum of size N} = (1 - lambda)^N.
        data, strata = _make([0.0] * 3, [0] * 3, [1] * 3)
        model = AssignmentModel.binary([0.4])
        value = enumerate_expectation(
            lambda w, y: float(np.all(w != 1)), np.zeros((3, 2)), model, strata
        )
        assert value == pytest.approx(0.6**3, abs=1e-12)

    def test_guard(self):
        n = 30
        data, strata = _make([0.0] * n, [0] * n, [1] * n)
        model = AssignmentModel.binary([0.5])
        with pytest.raises(EnumerationTooLarge):
            enumerate_expectation(lambda w, y: 1.0, np.zeros((n, 2)), model, strata)

    def test_heterogeneous_outcomes_enter_via_assignment(self):
        data, strata = _make([0.0, 0.0], [0, 0], [1, 1])
        pot = np.array([[1.0, 10.0], [2.0, 20.0]])
        model = AssignmentModel.binary([0.5])
        # E[sum of realized outcomes] = sum_i E[Y_i] = (1.5 + 11) ... per unit:
        # unit 1: 0.5*1 + 0.5*10 = 5.5; unit 2: 0.5*2 + 0.5*20 = 11.
        value = enumerate_expectation(lambda w, y: float(np.sum(y)), pot, model, strata)
        assert value == pytest.approx(16.5, abs=1e-12)


class TestSetEstimate:
    def test_ordering_enforced(self):
        with pytest.raises(ConfigError):
            SetEstimate(2.0, 1.0)

    def test_midpoint(self):
        assert SetEstimate(1.0, 3.0).midpoint == 2.0
