#!/usr/bin/env python3
"""
Tests for the ACE driver: acceptance test, coordinate and point exchange,
multi-start orchestration
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

from ace.core import AceRunner, bayes_t_accept, evaluate_design, multi_start, run_ace
from ace.exceptions import AceRunError, InvalidArgumentError
from ace.models import AceConfig, ProblemConfig
from ace.sampling import RngStream, maximin_lhs
from ace.statistical_models import (
    MIN_SAMPLING_GAP,
    BetaDrsModel,
    CompartmentalModel,
    LogisticModel,
    NormalMeanModel,
    PoissonToyModel,
    build_model,
)
from ace.utilities import UtilityEstimator, UtilitySampleBatch

CONFIG_DIR = Path(__file__).parent / "data" / "configs"


def test_acceptance_is_calibrated_under_equal_means():
    rng = RngStream(1)
    accepted = 0
    trials = 2000
    for _ in range(trials):
        a = UtilitySampleBatch(rng.gen.normal(size=50))
        b = UtilitySampleBatch(rng.gen.normal(size=50))
        accepted += bayes_t_accept(a, b, rng)[1]
    assert 0.45 <= accepted / trials <= 0.55


def test_acceptance_probability_tracks_the_difference():
    rng = RngStream(2)
    cur = UtilitySampleBatch(rng.gen.normal(size=200))
    better = UtilitySampleBatch(rng.gen.normal(loc=1.0, size=200))
    worse = UtilitySampleBatch(rng.gen.normal(loc=-1.0, size=200))
    assert bayes_t_accept(better, cur, rng)[0] > 0.999
    assert bayes_t_accept(worse, cur, rng)[0] < 0.001


def test_zero_variance_acceptance():
    rng = RngStream(3)
    flat = UtilitySampleBatch(np.full(10, 0.5))
    assert bayes_t_accept(flat, flat, rng)[0] == 0.5
    assert bayes_t_accept(UtilitySampleBatch(np.full(10, 0.6)), flat, rng) == (1.0, True)
    assert bayes_t_accept(UtilitySampleBatch(np.full(10, 0.4)), flat, rng) == (0.0, False)


def test_acceptance_needs_equal_batches():
    rng = RngStream(4)
    for a, b in ((np.zeros(5), np.zeros(6)), (np.zeros(1), np.zeros(1))):
        with pytest.raises(InvalidArgumentError):
            bayes_t_accept(UtilitySampleBatch(a), UtilitySampleBatch(b), rng)


def test_acceptance_probability_is_antisymmetric():
    rng = RngStream(5)
    for shift in (0.0, 0.05, -0.2, 1.0):
        a = UtilitySampleBatch(rng.gen.normal(loc=shift, size=300))
        b = UtilitySampleBatch(rng.gen.normal(size=300))
        assert abs(bayes_t_accept(a, b, rng)[0] + bayes_t_accept(b, a, rng)[0] - 1.0) < 1e-12


def test_worse_candidate_is_rejected():
    model = PoissonToyModel()
    utility = UtilityEstimator("pseudo_d", model)
    mc = AceConfig().comparison_mc()
    rng = RngStream(6)
    rejections = 0
    for _ in range(50):
        worse = utility.evaluate(np.array([0.8]), mc, rng)
        current = utility.evaluate(np.array([1.0]), mc, rng)
        rejections += not bayes_t_accept(worse, current, rng)[1]
    assert rejections >= 45


def test_phase1_step_reaches_the_poisson_optimum():
    model = PoissonToyModel()
    runner = AceRunner(model, UtilityEstimator("pseudo_d", model), AceConfig(B=20000, B_emulator=1000))
    hits = 0
    for seed in range(50):
        runner.current_utility = None
        delta, record = runner.phase1_coordinate_step(np.array([0.5]), 0, RngStream(seed))
        hits += abs(delta[0] - 1.0) < 0.05
        assert record.phase == "I" and record.index == 1 and not record.skipped
    assert hits >= 45


def test_coordinate_design_covers_the_interval_ends():
    model = PoissonToyModel()
    runner = AceRunner(model, UtilityEstimator("pseudo_d", model), AceConfig(m=20))
    xi = runner.coordinate_design(np.array([0.5]), 0, RngStream(7))
    assert len(xi) == 20 and xi.min() == -1.0 and xi.max() == 1.0
    strata = np.sort(np.floor((xi + 1.0) / 2.0 * 20).clip(max=19).astype(int))
    assert strata.tolist() == list(range(20))


def test_constant_utility_skips_the_coordinate():
    model = NormalMeanModel(n=2)
    runner = AceRunner(model, UtilityEstimator("pseudo_d", model), AceConfig(B=100, B_emulator=50))
    delta = np.array([0.3, -0.4])
    new, records = runner.phase1_sweep(delta, RngStream(8))
    assert np.array_equal(new, delta)
    assert all(r.skipped and not r.accepted and r.p_accept == 0.0 for r in records)
    assert runner.skipped == 2 and runner.accepted == runner.rejected == 0


def test_poisson_toy_reference_run():
    problem = ProblemConfig(**json.loads((CONFIG_DIR / "poisson_toy.json").read_text()))
    model = build_model(problem.model)
    result = multi_start(model, UtilityEstimator(problem.utility, model), problem.ace, RngStream(problem.seed))
    assert abs(result.design[0] - 1.0) <= 0.01
    assert abs(result.utility - 0.5) < 0.02
    assert len(result.best.evaluations) == problem.ace.C


def test_discrete_levels_match_brute_force():
    levels = np.linspace(-1.0, 1.0, 82)[1::2]
    model = PoissonToyModel(point_prior=True, levels=levels)
    utility = UtilityEstimator("pseudo_d", model)
    exact = [utility.evaluate(np.array([x]), AceConfig(B=2).comparison_mc(), RngStream(0)).mean for x in levels]
    brute = levels[int(np.argmax(exact))]
    assert brute == 1.0
    cfg = AceConfig(B=100, B_emulator=100, N_I=10, M=4, C=1)
    hits = sum(multi_start(model, utility, cfg, RngStream(seed)).design[0] == brute for seed in range(20))
    assert hits >= 18


def test_constraints_hold_after_every_step():
    model = CompartmentalModel(n=6, constrained=True)
    runner = AceRunner(model, UtilityEstimator("sig", model), AceConfig(B=200, B_emulator=100))
    rng = RngStream(5)
    delta = model.initial_design(rng)
    for sweep in (1, 2):
        for i in range(model.q):
            delta, _ = runner.phase1_coordinate_step(delta, i, rng, sweep)
            assert model.is_feasible(delta)
    assert not runner.phase2_active


class _SpacingRecorder(CompartmentalModel):
    """Constrained compartmental model that keeps the smallest gap of every design it simulates."""

    def __init__(self, n: int):
        super().__init__(n=n, constrained=True)
        self.gaps = []

    def simulate(self, psi, delta, rng):
        self.gaps.append(float(np.diff(np.sort(delta)).min()))
        return super().simulate(psi, delta, rng)


def test_constrained_multi_start_keeps_every_design_feasible():
    model = _SpacingRecorder(n=6)
    cfg = AceConfig(B=200, B_emulator=100, N_I=5, M=2, C=2)
    result = multi_start(model, UtilityEstimator("sig", model), cfg, RngStream(17), threads=2)
    assert not result.failures and len(result.starts) == 2
    assert model.gaps and min(model.gaps) >= MIN_SAMPLING_GAP
    assert all(model.is_feasible(s.design) for s in result.starts)
    assert len(result.traces) == 2 * 5 * 6 and all(r.phase == "I" for r in result.traces)


def test_drs_constraint_holds_after_every_step():
    model = BetaDrsModel(times=15)
    runner = AceRunner(model, UtilityEstimator("sig", model), AceConfig(B=200, B_emulator=100))
    rng = RngStream(6)
    delta = model.initial_design(rng)
    for sweep in (1, 2):
        delta, records = runner.phase1_sweep(delta, rng, sweep)
        assert model.is_feasible(delta)
        assert [r.index for r in records] == [1, 2]


def test_ace_beats_a_space_filling_design():
    model = LogisticModel(n=12)
    utility = UtilityEstimator("pseudo_d", model)
    cfg = AceConfig(B=500, B_emulator=200, N_I=3, M=1, C=1, phase2_enabled=False)
    ace_design = multi_start(model, utility, cfg, RngStream(7)).design
    lhs_design = maximin_lhs(12, 4, model.domains(), RngStream(8), iterations=500)
    judge = AceConfig(B=20000)
    ace = utility.evaluate(ace_design, judge.comparison_mc(), RngStream(9))
    lhs = utility.evaluate(lhs_design, judge.comparison_mc(), RngStream(10))
    se = np.hypot(ace.standard_error, lhs.standard_error)
    assert ace.mean - lhs.mean > 3.0 * se


def test_point_exchange_keeps_run_count_and_only_copies_runs():
    model = LogisticModel(n=6)
    runner = AceRunner(model, UtilityEstimator("pseudo_d", model), AceConfig(B=50, B_emulator=20))
    rng = RngStream(11)
    delta = model.initial_design(rng)
    original = {tuple(row) for row in model.design_matrix(delta)}
    for iteration in range(1, 101):
        delta, record = runner.phase2_point_exchange(delta, rng, iteration)
        assert len(delta) == model.q
        assert record.phase == "II" and 1 <= record.index <= model.n + 1
        assert {tuple(row) for row in model.design_matrix(delta)} <= original


def test_point_exchange_merges_nearly_replicated_times():
    model = CompartmentalModel(n=4, constrained=False, point_prior=True)
    utility = UtilityEstimator("pseudo_d", model)
    runner = AceRunner(model, utility, AceConfig(B=20000, B_emulator=1000))
    delta = np.array([6.0, 6.05, 0.5, 18.0])
    mc = AceConfig(B=10).comparison_mc()
    merged_values = [utility.evaluate(d, mc, RngStream(0)).mean
                     for d in (np.array([6.0, 6.0, 0.5, 18.0]), np.array([6.05, 6.05, 0.5, 18.0]))]
    assert max(merged_values) > utility.evaluate(delta, mc, RngStream(0)).mean
    merged = 0
    for seed in range(10):
        runner.current_utility = None
        new, record = runner.phase2_point_exchange(delta, RngStream(seed))
        assert record.phase == "II" and len(new) == 4
        merged += len(np.unique(new)) == 3 and not (6.0 in new and 6.05 in new)
    assert merged >= 9


def test_disabled_point_exchange_leaves_no_trace():
    model = LogisticModel(n=6)
    cfg = AceConfig(B=50, B_emulator=20, N_I=1, N_II=3, phase2_enabled=False)
    rng = RngStream(12)
    result = run_ace(model, UtilityEstimator("pseudo_d", model), cfg, model.initial_design(rng), rng)
    assert all(r.phase == "I" for r in result.traces)
    assert len(result.traces) == model.q

    cfg = cfg.model_copy(update={"phase2_enabled": True})
    result = run_ace(model, UtilityEstimator("pseudo_d", model), cfg, model.initial_design(rng), rng)
    assert sum(r.phase == "II" for r in result.traces) == 3


def test_single_start_matches_run_ace():
    model = PoissonToyModel(n=2)
    utility = UtilityEstimator("pseudo_d", model)
    cfg = AceConfig(B=500, B_emulator=100, N_I=2, N_II=2, M=1, C=2)
    result = multi_start(model, utility, cfg, RngStream(13))

    optimize_rng, evaluate_rng = RngStream(13).sibling(1).spawn(2)
    direct = run_ace(model, utility, cfg, model.initial_design(optimize_rng), optimize_rng)
    assert np.array_equal(result.design, direct.design)
    assert result.best.evaluations == evaluate_design(utility, direct.design, cfg, evaluate_rng)


def test_multi_start_ignores_thread_count():
    model = PoissonToyModel(n=2)
    utility = UtilityEstimator("pseudo_d", model)
    cfg = AceConfig(B=500, B_emulator=100, N_I=2, N_II=2, M=3, C=2)
    serial = multi_start(model, utility, cfg, RngStream(14), threads=1)
    parallel = multi_start(model, utility, cfg, RngStream(14), threads=3)
    assert np.array_equal(serial.design, parallel.design)
    assert serial.best_start == parallel.best_start
    assert [s.evaluations for s in serial.starts] == [s.evaluations for s in parallel.starts]


def test_all_starts_failing_raises():
    model = CompartmentalModel(n=6, constrained=True)
    cfg = AceConfig(B=50, B_emulator=20, N_I=1, M=3, C=1)
    with pytest.raises(AceRunError) as excinfo:
        multi_start(model, UtilityEstimator("sig", model), cfg, RngStream(15), initial_design=np.zeros(6))
    assert sorted(excinfo.value.failures) == [0, 1, 2]


def test_wrong_initial_length_is_rejected():
    model = PoissonToyModel(n=2)
    with pytest.raises(InvalidArgumentError):
        run_ace(model, UtilityEstimator("pseudo_d", model), AceConfig(), np.array([0.5]), RngStream(16))


if __name__ == "__main__":
    tests = [fn for name, fn in sorted(globals().items()) if name.startswith("test_") and callable(fn)]
    passed = 0
    for test in tests:
        try:
            test()
            passed += 1
            print(f"✅ {test.__name__}")
        except Exception as e:
            print(f"❌ {test.__name__}: {e}")
    print(f"\n{passed}/{len(tests)} core tests passed")
    sys.exit(0 if passed == len(tests) else 1)
