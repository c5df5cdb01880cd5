import json
import math
import random

import numpy as np
import pytest

from beamlab.analysis import (
    CostModel,
    batching_plan,
    correlation_study,
    estimate_gap_and_noise,
    kendall_tau,
    linear_fit,
    min_tau_for_rho,
    misrejection_bound,
    pearson,
    run_flops,
    theoretical_correlation,
    verify_bound,
)
from beamlab.core import ConfigError, SearchConfig
from beamlab.oracle import (
    UNIFORM,
    BeamScoreModel,
    homogeneous_population,
    make_population,
)
from beamlab.search import EARLY_REJECTION, RunLedger, StrategySpec, run_search


# ---------------------------------------------------------------------------
# estimators


class TestPearson:
    def test_frozen_value(self):
        got = pearson([1, 2, 3, 4], [1, 3, 2, 5])
        assert got == pytest.approx(5.5 / math.sqrt(43.75), abs=1e-15)

    def test_perfect_and_anti(self):
        xs = [0.5, 1.0, 2.5, 4.0]
        assert pearson(xs, [3 * x - 1 for x in xs]) == pytest.approx(1.0)
        assert pearson(xs, [-2 * x for x in xs]) == pytest.approx(-1.0)

    def test_symmetry(self):
        xs = [0.1, 2.0, -3.0, 4.5, 0.0]
        ys = [1.0, 0.5, 2.0, -1.0, 3.3]
        assert pearson(xs, ys) == pytest.approx(pearson(ys, xs), abs=0)

    def test_result_clamped(self):
        rng = random.Random(1)
        for _ in range(50):
            xs = [rng.gauss(0, 1) for _ in range(5)]
            ys = [x * 3.0 for x in xs]
            assert -1.0 <= pearson(xs, ys) <= 1.0

    def test_errors(self):
        with pytest.raises(ValueError, match="degenerate"):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            pearson([1.0], [1.0])
        with pytest.raises(ValueError):
            pearson([1.0, 2.0], [1.0, 2.0, 3.0])


def kendall_reference(xs, ys):
    # definitional tau-a: average sign product over all pairs
    n = len(xs)
    total = 0
    for i in range(n):
        for j in range(i + 1, n):
            total += int(np.sign(xs[i] - xs[j]) * np.sign(ys[i] - ys[j]))
    return total / (n * (n - 1) / 2)


class TestKendall:
    def test_frozen_value(self):
        assert kendall_tau([1, 2, 3], [1, 3, 2]) == pytest.approx(1 / 3, abs=1e-15)

    def test_perfect_orders(self):
        xs = [1.0, 2.0, 5.0, 9.0]
        assert kendall_tau(xs, xs) == 1.0
        assert kendall_tau(xs, list(reversed(xs))) == -1.0

    def test_tie_pairs_contribute_zero(self):
        got = kendall_tau([1, 1, 2], [1, 2, 3])
        assert got == pytest.approx(kendall_reference([1, 1, 2], [1, 2, 3]))

    def test_inversion_path_matches_reference_at_scale(self):
        # continuous draws take the mergesort branch; n is large enough that
        # a chunked O(n^2) fallback would be visibly slow if ties sneaked in
        rng = random.Random(7)
        xs = [rng.gauss(0, 1) for _ in range(3000)]
        ys = [0.4 * x + rng.gauss(0, 1) for x in xs]
        fast = kendall_tau(xs, ys)
        assert fast == pytest.approx(kendall_reference(xs, ys), abs=1e-12)

    def test_tied_path_matches_reference(self):
        rng = random.Random(8)
        xs = [rng.randrange(4) for _ in range(200)]
        ys = [rng.randrange(4) for _ in range(200)]
        assert kendall_tau(xs, ys) == pytest.approx(kendall_reference(xs, ys))


class TestLinearFit:
    def test_recovers_exact_line(self):
        xs = [0.0, 1.0, 2.0, 3.0]
        ys = [5.0 - 2.0 * x for x in xs]
        slope, intercept, r2 = linear_fit(xs, ys)
        assert slope == pytest.approx(-2.0)
        assert intercept == pytest.approx(5.0)
        assert r2 == pytest.approx(1.0)

    def test_constant_ys(self):
        slope, intercept, r2 = linear_fit([1.0, 2.0, 3.0], [4.0, 4.0, 4.0])
        assert slope == 0.0
        assert intercept == pytest.approx(4.0)
        assert r2 == 0.0

    def test_zero_x_variance_is_error(self):
        with pytest.raises(ValueError, match="slope undefined"):
            linear_fit([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])

    def test_r2_equals_squared_pearson(self):
        rng = random.Random(3)
        xs = [rng.gauss(0, 1) for _ in range(100)]
        ys = [0.7 * x + rng.gauss(0, 0.5) for x in xs]
        _, _, r2 = linear_fit(xs, ys)
        assert r2 == pytest.approx(pearson(xs, ys) ** 2)


# ---------------------------------------------------------------------------
# closed forms


class TestTheoreticalCorrelation:
    def test_known_points(self):
        assert theoretical_correlation(128, 512) == pytest.approx(0.5)
        assert theoretical_correlation(512, 512) == 1.0
        assert theoretical_correlation(32, 512) == pytest.approx(0.25)

    def test_monotone_in_tau(self):
        vals = [theoretical_correlation(t, 256) for t in (1, 16, 64, 128, 256)]
        assert vals == sorted(vals)

    def test_errors(self):
        with pytest.raises(ValueError):
            theoretical_correlation(0, 10)
        with pytest.raises(ValueError):
            theoretical_correlation(11, 10)


class TestMinTau:
    def test_worked_examples(self):
        assert min_tau_for_rho(0.8, 100) == 64
        assert min_tau_for_rho(0.9, 512) == 415
        assert min_tau_for_rho(1.0, 512) == 512

    def test_integer_boundary_not_rounded_up(self):
        # 0.8^2 * 100 is 64.000000000000014 in floats; the answer is 64
        for horizon in (100, 400, 25):
            assert min_tau_for_rho(0.8, horizon) == (64 * horizon) // 100

    def test_result_achieves_target(self):
        for rho in (0.3, 0.55, 0.77, 0.95):
            for horizon in (37, 128, 1000):
                tau = min_tau_for_rho(rho, horizon)
                assert theoretical_correlation(tau, horizon) >= rho - 1e-9
                if tau > 1:
                    assert theoretical_correlation(tau - 1, horizon) < rho

    def test_floor_at_one(self):
        assert min_tau_for_rho(0.01, 10) == 1

    def test_errors(self):
        for bad in (0.0, -0.5, 1.0001, 2.0):
            with pytest.raises(ConfigError):
                min_tau_for_rho(bad, 100)
        with pytest.raises(ConfigError):
            min_tau_for_rho(0.5, 0)


class TestMisrejectionBound:
    def test_frozen_value(self):
        raw, prob = misrejection_bound(5, 4.0, 1.0)
        assert raw == pytest.approx(4.0 * math.exp(-4.0), abs=1e-15)
        assert prob == raw

    def test_clamp_keeps_raw_visible(self):
        raw, prob = misrejection_bound(10, 0.1, 5.0)
        assert raw > 1.0
        assert prob == 1.0

    def test_single_beam_never_misrejects(self):
        assert misrejection_bound(1, 0.0, 1.0) == (0.0, 0.0)

    def test_zero_noise_with_gap(self):
        assert misrejection_bound(8, 0.5, 0.0) == (0.0, 0.0)

    def test_zero_noise_zero_gap_vacuous(self):
        with pytest.raises(ConfigError, match="vacuous"):
            misrejection_bound(8, 0.0, 0.0)

    def test_monotone_in_gap_and_sigma(self):
        r1, _ = misrejection_bound(8, 1.0, 1.0)
        r2, _ = misrejection_bound(8, 2.0, 1.0)
        r3, _ = misrejection_bound(8, 1.0, 2.0)
        assert r2 < r1 < r3

    def test_input_validation(self):
        with pytest.raises(ValueError):
            misrejection_bound(0, 1.0, 1.0)
        with pytest.raises(ValueError):
            misrejection_bound(4, -1.0, 1.0)
        with pytest.raises(ValueError):
            misrejection_bound(4, 1.0, -1.0)


class TestGapEstimation:
    def test_known_construction(self):
        rng = np.random.default_rng(4)
        a = rng.normal(3.0, 0.5, 4000)
        b = rng.normal(2.0, 0.5, 4000)
        c = rng.normal(1.0, 0.5, 4000)
        gap, sigma = estimate_gap_and_noise([a, b, c])
        assert gap == pytest.approx(1.0, abs=0.05)
        assert sigma == pytest.approx(0.5, abs=0.02)

    def test_errors(self):
        with pytest.raises(ValueError):
            estimate_gap_and_noise([[1.0, 2.0]])
        with pytest.raises(ValueError):
            estimate_gap_and_noise([[1.0, 2.0], [1.0]])


# ---------------------------------------------------------------------------
# Monte Carlo verification


def bound_cfg(**overrides):
    base = dict(
        beam_width=8,
        expansion_factor=4,
        prefix_len=16,
        step_len=64,
        num_steps=1,
        horizon=64,
        seed=31,
    )
    base.update(overrides)
    return SearchConfig(**base)


class TestVerifyBound:
    def test_report_scaling_and_shape(self):
        pop = make_population(8, 0.2, 0.0, 0.8)
        rep = verify_bound(bound_cfg(), pop, n_trials=500)
        assert rep.n_beams == 8
        assert rep.prefix_len == 16
        assert rep.gap_at_prefix == pytest.approx(16 * 0.2)
        assert rep.sigma_at_prefix == pytest.approx(math.sqrt(16) * 0.8)
        assert 0.0 <= rep.empirical_rate <= 1.0
        assert rep.n_trials == 500
        # estimates should land near the true scaled values
        assert rep.gap_estimate == pytest.approx(rep.gap_at_prefix, rel=0.25)
        assert rep.sigma_estimate == pytest.approx(rep.sigma_at_prefix, rel=0.1)

    def test_deterministic_and_worker_invariant(self):
        pop = make_population(8, 0.2, 0.0, 0.8)
        a = verify_bound(bound_cfg(), pop, n_trials=2500, workers=1)
        b = verify_bound(bound_cfg(), pop, n_trials=2500, workers=3)
        assert a == b

    def test_zero_noise_is_exactly_safe(self):
        pop = make_population(8, 0.5, 0.0, 0.0)
        rep = verify_bound(bound_cfg(), pop, n_trials=300)
        assert rep.empirical_rate == 0.0
        assert rep.bound_prob == 0.0
        assert rep.dominated
        assert not rep.vacuous

    def test_homogeneous_population_is_vacuous(self):
        pop = homogeneous_population(8, 0.0, 1.0)
        rep = verify_bound(bound_cfg(), pop, n_trials=300)
        assert rep.vacuous
        assert rep.bound_prob == 1.0
        assert rep.dominated  # trivially

    def test_uniform_family_dominated(self):
        pop = make_population(8, 0.15, 0.0, 0.6, UNIFORM)
        rep = verify_bound(bound_cfg(prefix_len=32), pop, n_trials=3000)
        assert rep.dominated

    def test_report_serializes_with_documented_keys(self):
        pop = make_population(4, 0.3, 0.0, 1.0)
        rep = verify_bound(bound_cfg(beam_width=4), pop, n_trials=100)
        doc = json.loads(json.dumps(rep.to_dict()))
        assert list(doc) == [
            "n_beams",
            "prefix_len",
            "gap_at_prefix",
            "sigma_at_prefix",
            "gap_estimate",
            "sigma_estimate",
            "bound_raw",
            "bound_prob",
            "empirical_rate",
            "standard_error",
            "n_trials",
            "vacuous",
            "dominated",
            "score_mode",
        ]

    def test_trial_count_validated(self):
        pop = make_population(4, 0.3, 0.0, 1.0)
        with pytest.raises(ConfigError):
            verify_bound(bound_cfg(beam_width=4), pop, n_trials=0)


class TestCorrelationStudy:
    MODEL = BeamScoreModel(0.0, 1.0)

    def test_full_prefix_is_exact(self):
        rows = correlation_study(self.MODEL, [64], 64, n_trials=500, seed=2)
        assert rows[0].pearson_empirical == pytest.approx(1.0, abs=1e-12)
        assert rows[0].kendall == pytest.approx(1.0, abs=0)
        assert rows[0].fit_slope == pytest.approx(1.0, abs=1e-12)
        assert rows[0].fit_r2 == pytest.approx(1.0, abs=1e-12)

    def test_rows_sorted_and_deduplicated(self):
        rows = correlation_study(
            self.MODEL, [32, 8, 32, 16], 64, n_trials=100, seed=2
        )
        assert [r.prefix_len for r in rows] == [8, 16, 32]

    def test_theory_column(self):
        rows = correlation_study(self.MODEL, [16, 64], 256, n_trials=100, seed=2)
        assert rows[0].pearson_theoretical == pytest.approx(0.25)
        assert rows[1].pearson_theoretical == pytest.approx(0.5)

    def test_worker_invariance(self):
        a = correlation_study(self.MODEL, [8, 32], 64, n_trials=2500, seed=9, workers=1)
        b = correlation_study(self.MODEL, [8, 32], 64, n_trials=2500, seed=9, workers=4)
        assert a == b

    def test_rows_share_sample_paths(self):
        # same seed, different tau grids: common rows agree exactly
        a = correlation_study(self.MODEL, [16], 64, n_trials=400, seed=5)
        b = correlation_study(self.MODEL, [8, 16, 32], 64, n_trials=400, seed=5)
        assert a[0] == b[1]

    def test_validations(self):
        with pytest.raises(ConfigError):
            correlation_study(self.MODEL, [], 64, 100, 1)
        with pytest.raises(ConfigError):
            correlation_study(self.MODEL, [0], 64, 100, 1)
        with pytest.raises(ConfigError):
            correlation_study(self.MODEL, [65], 64, 100, 1)
        with pytest.raises(ConfigError):
            correlation_study(self.MODEL, [8], 64, 1, 1)
        with pytest.raises(ConfigError):
            correlation_study(BeamScoreModel(0.0, 0.0), [8], 64, 100, 1)

    def test_uniform_tokens_follow_the_same_law(self):
        rows = correlation_study(
            BeamScoreModel(0.0, 1.0, UNIFORM), [16], 64, n_trials=6000, seed=11
        )
        assert rows[0].pearson_empirical == pytest.approx(0.5, abs=0.03)


# ---------------------------------------------------------------------------
# cost model


class TestCostModel:
    def test_flop_identity(self):
        ledger = RunLedger(prefix_tokens=100, completion_tokens=50, prm_tokens_scored=30)
        cost = CostModel(gen_params=2e9, prm_params=1e9, flops_per_param_token=2.0)
        rep = run_flops(ledger, cost)
        assert rep.gen_flops == pytest.approx(2.0 * 2e9 * 150)
        assert rep.prm_flops == pytest.approx(2.0 * 1e9 * 30)
        assert rep.total_flops == pytest.approx(rep.gen_flops + rep.prm_flops)

    def test_validation(self):
        with pytest.raises(ConfigError):
            CostModel(gen_params=0, prm_params=1e9)
        with pytest.raises(ConfigError):
            CostModel(gen_params=1e9, prm_params=-1)
        with pytest.raises(ConfigError):
            CostModel(gen_params=1e9, prm_params=1e9, flops_per_param_token=0)

    def test_er_generation_flops_increase_with_tau(self):
        pop = make_population(8, 0.3, 0.0, 1.0)
        cost = CostModel(gen_params=1e9, prm_params=1e9)
        totals = []
        for tau in (4, 8, 16, 32, 64):
            cfg = bound_cfg(prefix_len=tau)
            ledger = run_search(cfg, pop, StrategySpec(EARLY_REJECTION))
            totals.append(run_flops(ledger, cost).gen_flops)
        assert totals == sorted(totals)
        assert len(set(totals)) == len(totals)


class TestBatchingPlan:
    def test_prefix_phase_fits_more(self):
        large, small = batching_plan(1024.0, 1.0, 16, 64)
        assert large == 64
        assert small == 16
        assert large >= small

    def test_equal_lengths_equal_batches(self):
        large, small = batching_plan(100.0, 1.0, 10, 10)
        assert large == small == 10

    def test_errors(self):
        with pytest.raises(ValueError):
            batching_plan(0.0, 1.0, 8, 16)
        with pytest.raises(ValueError):
            batching_plan(10.0, 0.0, 8, 16)
        with pytest.raises(ValueError):
            batching_plan(10.0, 1.0, 32, 16)
        with pytest.raises(ValueError, match="does not fit"):
            batching_plan(10.0, 1.0, 8, 16)
