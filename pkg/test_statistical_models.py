#!/usr/bin/env python3
"""
Tests for the model plug-ins, closed-form helpers and posterior ingestion
"""

import math
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest
from scipy.special import betainc, expit

from ace.exceptions import DomainError, IngestionError, SingularityError, UndefinedLD50Error
from ace.ingest import dose_range, load_dose_data, load_posterior_samples
from ace.models import ModelConfig
from ace.sampling import RngStream
from ace.statistical_models import (
    DOSE_RANGE,
    MIN_SAMPLING_GAP,
    REFERENCE_MODEL_WEIGHTS,
    BetaDrsModel,
    CompartmentalModel,
    HierarchicalLogisticModel,
    LogisticModel,
    PoissonToyModel,
    beta_drs_expand,
    beta_quantile,
    build_model,
    compartmental_mean_sd,
    compartmental_simulate,
    dose_response_simulate,
    drs_domain_check,
    group_index,
    hier_logistic_fisher_approx,
    inverse_link,
    ld50,
    linear_predictor,
    logistic_fisher_info,
    logistic_simulate,
    model_matrix,
    poisson_toy_utility,
    to_coded_dose,
    to_original_dose,
)

DATA_DIR = Path(__file__).parent / "data"
THETA = (0.1, 1.0, 20.0)


def _write(tmp: str, text: str) -> Path:
    path = Path(tmp) / "posterior.csv"
    path.write_text(text)
    return path


def test_poisson_toy_utility():
    assert poisson_toy_utility(0.5, 1.0) == 0.5
    assert poisson_toy_utility(0.0, 1.0) == 0.0
    assert poisson_toy_utility(0.5, -1.0) == -0.5
    with pytest.raises(DomainError):
        poisson_toy_utility(0.5, 0.0)


def test_compartmental_mean_and_sd():
    mean, sd = compartmental_mean_sd(THETA, 1.0)
    a = 400.0 / (20.0 * 0.9)
    assert abs(a - 22.2222) < 1e-4
    assert abs(mean - a * (math.exp(-0.1) - math.exp(-1.0))) < 1e-12
    assert abs(mean - 11.930) < 1e-3
    assert sd**2 >= 0.1
    far_mean, far_sd = compartmental_mean_sd(THETA, 400.0)
    assert abs(far_mean) < 1e-12 and abs(far_sd**2 - 0.1) < 1e-12


def test_compartmental_pole():
    with pytest.raises(SingularityError):
        compartmental_mean_sd((1.0, 1.0, 20.0), 1.0)


def test_compartmental_simulate_moments():
    rng = RngStream(11)
    theta = np.tile(THETA, (100_000, 1))
    y = compartmental_simulate(theta, np.array([1.0]), rng)[:, 0]
    mean, sd = compartmental_mean_sd(THETA, 1.0)
    assert abs(y.mean() - mean) < 3.0 * sd / math.sqrt(len(y))
    at_zero = compartmental_simulate(np.tile(THETA, (100_000, 1)), np.array([0.0]), rng)[:, 0]
    assert abs(at_zero.mean()) < 3.0 * math.sqrt(0.1 / len(at_zero))
    a = compartmental_simulate(np.array([THETA]), np.array([0.5, 2.0]), RngStream(4))
    b = compartmental_simulate(np.array([THETA]), np.array([0.5, 2.0]), RngStream(4))
    assert np.array_equal(a, b)


def test_beta_drs_expand():
    assert np.allclose(beta_drs_expand(1.0, 1.0, 3), [6.0, 12.0, 18.0], atol=1e-8)
    assert np.allclose(beta_drs_expand(1.0, 1.0, 1), [12.0], atol=1e-8)
    assert np.allclose(beta_drs_expand(2.0, 2.0, 1), [12.0], atol=1e-8)
    for a1, a2 in [(0.2, 0.3), (1.0, 4.0), (5.0, 0.5), (3.0, 3.0)]:
        times = beta_drs_expand(a1, a2, 100)
        assert np.all(np.diff(times) > 0)


def test_drs_domain_check():
    assert drs_domain_check(1.0, 1.0, 3) is True
    assert drs_domain_check(1.0, 1.0, 1) is True
    assert drs_domain_check(50.0, 50.0, 18) is False
    mask = drs_domain_check(np.array([1.0, 50.0]), 50.0, 18, which=1)
    assert mask.shape == (2,)
    assert not mask[1]


def test_beta_quantile_inverts_the_incomplete_beta():
    r = np.array([0.01, 0.25, 0.5, 0.9, 0.999])
    for a, b in [(0.3, 0.7), (1.0, 1.0), (2.0, 5.0), (50.0, 50.0)]:
        q = beta_quantile(r, a, b)
        assert np.allclose(betainc(a, b, q), r, atol=1e-10)
        assert np.all(np.diff(q) > 0)
    assert np.allclose(beta_quantile(r, 1.0, 1.0), r)
    assert np.isnan(beta_quantile(0.5, -1.0, 1.0))


def test_drs_domain_check_needs_positive_shapes_for_every_n():
    for n in (1, 2, 3):
        assert drs_domain_check(0.0, 1.0, n) is False
        assert drs_domain_check(1.0, -2.0, n, which=2) is False
    mask = drs_domain_check(np.array([-1.0, 0.5, 2.0]), 1.0, 1)
    assert mask.tolist() == [False, True, True]


def test_beta_drs_model_feasibility():
    model = BetaDrsModel(times=15)
    assert model.q == 2 and model.n == 1
    assert model.is_feasible(np.array([1.0, 1.0]))
    assert not model.is_feasible(np.array([50.0, 50.0]))
    delta = model.initial_design(RngStream(3))
    assert drs_domain_check(delta[0], delta[1], 15)


def test_compartmental_spacing_constraint():
    model = CompartmentalModel(n=3, constrained=True)
    assert model.is_feasible(np.array([1.0, 1.25, 5.0]))
    assert not model.is_feasible(np.array([1.0, 1.2, 5.0]))
    ok = model.coordinate_feasible(np.array([1.0, 2.0, 5.0]), 2, np.array([1.1, 3.0, 5.1]))
    assert ok.tolist() == [False, True, True]
    delta = model.initial_design(RngStream(8))
    assert np.diff(np.sort(delta)).min() >= MIN_SAMPLING_GAP
    assert not model.supports_phase2
    assert CompartmentalModel(n=3, constrained=False).supports_phase2


def test_logistic_simulate_probabilities():
    X = model_matrix(np.zeros((20000, 4)))
    y = logistic_simulate(np.zeros(5), np.zeros((1, 5)), X, RngStream(1))
    assert abs(y.mean() - 0.5) < 3.0 * 0.5 / math.sqrt(len(y))
    model = LogisticModel(n=1)
    psi = np.array([[10.0, 0.0, 0.0, 0.0, 0.0]])
    p = np.exp(model.log_likelihood(np.ones((1, 1)), psi, np.array([0.3, -0.2, 0.5, 0.9])))
    assert abs(p[0] - 0.9999546) < 1e-7


def test_logistic_fisher_info():
    X = np.ones((1, 5))
    assert np.allclose(logistic_fisher_info(np.zeros(5), X), 0.25 * np.ones((5, 5)))
    rng = RngStream(2).gen
    A = model_matrix(rng.uniform(-1, 1, size=(6, 4)))
    B = model_matrix(rng.uniform(-1, 1, size=(5, 4)))
    beta = np.array([0.5, 6.0, 7.0, -3.0, 1.0])
    info_a = logistic_fisher_info(beta, A)
    assert np.allclose(info_a, info_a.T)
    assert np.linalg.eigvalsh(info_a).min() > -1e-12
    assert np.allclose(logistic_fisher_info(beta, np.vstack([A, A])), 2 * info_a)
    assert np.allclose(logistic_fisher_info(beta, np.vstack([A, B])), info_a + logistic_fisher_info(beta, B))


def test_hierarchical_fisher_approximation():
    rng = RngStream(3)
    X = model_matrix(rng.gen.uniform(-1, 1, size=(12, 4)))
    beta = np.array([0.0, 7.0, 8.0, -3.0, 0.5])
    exact = logistic_fisher_info(beta, X)
    approx = hier_logistic_fisher_approx(beta, np.zeros(5), X, 2, 6, rng, R=5)
    assert np.allclose(approx, exact, rtol=1e-12, atol=1e-12)
    noisy = hier_logistic_fisher_approx(beta, np.array([3, 3, 3, 1, 1.0]), X, 2, 6, rng, R=10)
    assert np.allclose(noisy, noisy.T)
    assert np.linalg.eigvalsh(noisy).min() > -1e-10

    single = model_matrix(rng.gen.uniform(-1, 1, size=(6, 4)))
    doubled = np.vstack([single, single])
    mild = np.array([0.0, 1.0, 1.0, -1.0, 0.5])
    half = np.array([1.0, 1.0, 1.0, 0.5, 0.5])
    one = hier_logistic_fisher_approx(mild, half, single, 1, 6, RngStream(5), R=4000)
    two = hier_logistic_fisher_approx(mild, half, doubled, 2, 6, RngStream(6), R=4000)
    assert np.allclose(two, 2 * one, rtol=0.05, atol=0.02)


def test_group_index_puts_overflow_in_last_group():
    assert group_index(12, 2, 6).tolist() == [0] * 6 + [1] * 6
    assert group_index(13, 2, 6)[-1] == 1
    model = HierarchicalLogisticModel(groups=2, group_size=6)
    psi = model.sample_prior(4, RngStream(1))
    delta13 = RngStream(2).gen.uniform(-1, 1, size=13 * 4)
    assert model.simulate(psi, delta13, RngStream(3)).shape == (4, 13)


def test_ld50_cases():
    assert ld50(1, (0.0, 2.0)) == 0.0
    assert abs(ld50(3, (0.0, 1.0)) - math.log(-math.log(0.5))) < 1e-12
    assert abs(ld50(3, (0.0, 1.0)) + 0.36651) < 1e-5
    assert abs(ld50(2, (-1.0, 0.0, 1.0)) - 1.0) < 1e-12
    for u, beta in [(1, (0.3, 0.0)), (2, (1.0, 0.0, 0.0)), (2, (1.0, 0.0, 1.0))]:
        with pytest.raises(UndefinedLD50Error):
            ld50(u, beta)


def test_ld50_consistency_first_order():
    for u, beta in [(1, (0.53, 3.3)), (3, (-0.18, 2.13)), (5, (0.32, 1.9))]:
        dose = ld50(u, beta)
        p = inverse_link(u, linear_predictor(np.array([beta[0], beta[1], 0.0]), np.array([dose])))
        assert abs(float(p[0]) - 0.5) < 1e-10


def test_dose_response_simulate():
    counts = dose_response_simulate(5, (50.0, 0.0), np.zeros(20000), 60.0, RngStream(1))
    assert abs(counts.mean() - 60.0) < 3.0 * math.sqrt(60.0 / len(counts))
    zero = dose_response_simulate(1, (-60.0, 1.0), np.array([-1.0, 0.0, 1.0]), 60.0, RngStream(2))
    assert zero.tolist() == [0.0, 0.0, 0.0]
    a = dose_response_simulate(2, (0.4, 3.5, 0.5), np.array([-0.5, 0.5]), 60.0, RngStream(3))
    b = dose_response_simulate(2, (0.4, 3.5, 0.5), np.array([-0.5, 0.5]), 60.0, RngStream(3))
    assert np.array_equal(a, b)


def test_poisson_simulation_matches_likelihood():
    model = PoissonToyModel(n=1)
    delta = np.array([0.8])
    for beta, y in [(0.5, 0.0), (0.5, 2.0), (1.5, 3.0)]:
        psi = np.full((100_000, 1), beta)
        sims = model.simulate(psi, delta, RngStream(int(10 * beta + y)))[:, 0]
        freq = np.mean(sims == y)
        prob = math.exp(model.log_likelihood(np.array([y]), np.array([beta]), delta))
        assert abs(freq - prob) < 3.0 * math.sqrt(prob * (1 - prob) / len(sims)) + 1e-12


def test_dose_mapping():
    assert np.allclose(to_original_dose([-1.0, 1.0]), DOSE_RANGE)
    doses = np.array([1.7, 1.75, 1.8])
    assert np.allclose(to_original_dose(to_coded_dose(doses)), doses)


def test_reference_posterior_weights():
    posterior = load_posterior_samples(DATA_DIR / "beetle_posterior.csv")
    assert np.allclose(posterior.weights, REFERENCE_MODEL_WEIGHTS)
    assert set(posterior.model_index.tolist()) == {1, 2, 3, 4, 5, 6}
    assert abs(posterior.sample_weights.sum() - 1.0) < 1e-12
    assert posterior.ld50_variance() > 0


def test_single_sample_posterior_is_accepted():
    with tempfile.TemporaryDirectory() as tmp:
        posterior = load_posterior_samples(_write(tmp, "u,b0,b1,b2,weight\n1,0.5,3.0,,\n"))
    assert posterior.size == 1
    assert posterior.weights.tolist() == [1.0, 0, 0, 0, 0, 0]
    assert posterior.ld50_variance() == 0.0


def test_posterior_schema_violations():
    bad_files = [
        "u,b0,b1,b2,weight\n1,0.5,3.0,,\n1,,,,-0.5\n2,,,,1.5\n",
        "u,b0,b1,b2,weight\n1,0.5,3.0,,\n1,,,,0.7\n",
        "u,b0,b1,b2,weight\n2,0.5,3.0,,\n",
        "u,b0,b1,weight\n1,0.5,3.0,\n",
        "u,b0,b1,b2,weight\n1,0.5,3.0,,\n1,,,,0.5\n3,,,,0.5\n",
    ]
    for text in bad_files:
        with tempfile.TemporaryDirectory() as tmp:
            with pytest.raises(IngestionError):
                load_posterior_samples(_write(tmp, text))


def test_malformed_posterior_rows_are_named():
    cases = [
        ("u,b0,b1,b2,weight\n1,0.5,3.0,,\n1,0.4,,,\n", "row 1: b0 and b1"),
        ("u,b0,b1,b2,weight\n1,0.5,3.0,,\n1,,2.0,,\n", "row 1: b0 and b1"),
        ("u,b0,b1,b2,weight\n1,0.5,3.0,,\n1,0.4,2.0,,1.0\n", "row 1: a row holds either"),
    ]
    for text, message in cases:
        with tempfile.TemporaryDirectory() as tmp:
            with pytest.raises(IngestionError, match=message):
                load_posterior_samples(_write(tmp, text))


def test_undefined_ld50_draws_are_discarded():
    text = "u,b0,b1,b2,weight\n1,0.5,3.0,,\n1,0.5,0.0,,\n"
    with tempfile.TemporaryDirectory() as tmp:
        posterior = load_posterior_samples(_write(tmp, text))
    assert posterior.size == 1 and posterior.rejected == 1


def test_beetle_dose_data():
    df = load_dose_data(DATA_DIR / "beetle_mortality.csv")
    assert len(df) == 8
    assert dose_range(df) == DOSE_RANGE


def test_build_model_from_config():
    toy = build_model(ModelConfig(name="poisson_toy", levels=5))
    assert toy.domain.levels == (-1.0, -0.5, 0.0, 0.5, 1.0)
    hier = build_model(ModelConfig(name="hierarchical_logistic", n=12, groups=2, group_size=6))
    assert hier.P == 10 + 2 * 5 and hier.q == 48
    drs = build_model(ModelConfig(name="compartmental_drs", n=15))
    assert isinstance(drs, BetaDrsModel) and drs.times == 15
    local = build_model(ModelConfig(name="logistic", n=4, point_prior=True))
    draws = local.sample_prior(3, RngStream(0))
    assert np.allclose(draws, [[0.0, 7.0, 8.0, -3.0, 0.5]] * 3)


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
    print(f"\n{passed}/{len(tests)} model tests passed")
    sys.exit(0 if passed == len(tests) else 1)
