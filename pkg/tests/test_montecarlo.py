import math

import numpy as np
import pytest

from exact.spectral import conditioned_law
from exact.state_space import DistVec, StateSpace
from generators.models import build_spec, model_weights
from lattice import Box
from montecarlo import (
    RngStream,
    conditioned_sample,
    coupled_pair,
    coupling_trials,
    default_battery,
    domination_mc,
    lambda_fit,
    marginals_check,
    mismatch_pair,
    product_sample,
    random_ordered_pair,
    sample_path,
    survival_curve,
    yaglom_compare,
)
from montecarlo.engine import killed_rates, occupation_matrix
from montecarlo.survival import wilson_interval
from utils.errors import AcceptanceTooLow, PreconditionError


def test_streams_are_reproducible_and_distinct():
    a = RngStream(7, 3).generator().random(5)
    b = RngStream(7, 3).generator().random(5)
    c = RngStream(7, 4).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_single_state_hitting_time_is_exponential(single_state):
    rates = killed_rates(single_state)
    taus = [sample_path(rates, 0, 50.0, RngStream(1, i).generator()).tau for i in range(4000)]
    mean = float(np.mean(taus))
    assert mean == pytest.approx(0.5, abs=4 * 0.5 / math.sqrt(4000))


def test_sample_path_snapshots_and_censoring(four_state):
    rng = RngStream(0, 0).generator()
    path = sample_path(killed_rates(four_state), 0b000, 1e-9, rng, record_times=(0.0,))
    assert path.censored and math.isinf(path.tau)
    assert path.snapshots == [0b000]
    killed = sample_path(killed_rates(four_state), 0b010, 1.0, rng, initially_killed=True)
    assert killed.tau == 0.0 and not killed.censored


def test_survival_curve_matches_the_exponential(single_state):
    grid = [0.0, 0.25, 0.5, 1.0, 1.5]
    curve = survival_curve(single_state, grid, 4000, seed=3)
    exact = np.exp(-2.0 * np.asarray(grid))
    se = np.sqrt(exact * (1 - exact) / 4000)
    assert np.all(np.abs(curve.estimates - exact) <= 4 * se + 1e-12)
    assert np.all(curve.ci_lo <= curve.estimates) and np.all(curve.estimates <= curve.ci_hi)
    assert list(curve.frame().columns) == ["t", "estimate", "ci_lo", "ci_hi", "trials"]
    # P(τ > 10) = e^{-20}, so no path is censored
    mean, stderr = survival_curve(single_state, [0.0, 10.0], 2000, seed=4).mean_tau()
    assert abs(mean - 0.5) <= 4 * stderr


def test_workers_do_not_change_the_result(four_state):
    grid = [0.0, 1.0, 2.0]
    serial = survival_curve(four_state, grid, 600, seed=11, workers=1)
    parallel = survival_curve(four_state, grid, 600, seed=11, workers=2)
    assert np.array_equal(serial.taus, parallel.taus)


def test_lambda_fit_recovers_the_four_state_rate(four_state, four_state_lambda):
    grid = list(np.linspace(0.0, 3.0 / four_state_lambda, 9))
    curve = survival_curve(four_state, grid, 4000, seed=5)
    fit = lambda_fit(curve, window=(1.0, grid[-1]))
    assert fit.points >= 3
    assert abs(fit.lam - four_state_lambda) <= 4 * fit.stderr + 0.02
    with pytest.raises(PreconditionError):
        lambda_fit(curve, window=(0.0, 0.1))


def test_wilson_interval_contains_the_proportion():
    lo, hi = wilson_interval(np.array([0, 50, 100]), 100)
    assert lo[0] == pytest.approx(0.0, abs=1e-12) and hi[0] > 0
    assert lo[1] < 0.5 < hi[1]
    assert hi[2] == pytest.approx(1.0)


def test_rejection_sampler_matches_the_conditioned_law(four_state):
    space = StateSpace(four_state)
    sample = conditioned_sample(four_state, 1.0, 3000, seed=2)
    exact = conditioned_law(space, DistVec.nu(space).normalize(), 1.0).marginals()
    assert len(sample) == 3000
    assert 0 < sample.acceptance < 1
    assert np.all(np.abs(sample.marginals() - exact) <= 4 * np.maximum(sample.stderr(), 1e-3))


def test_rejection_sampler_refuses_tiny_acceptance(single_state):
    with pytest.raises(AcceptanceTooLow):
        conditioned_sample(single_state, 10.0, 200, seed=0)


def test_sampler_rejects_unknown_methods(four_state):
    with pytest.raises(PreconditionError):
        conditioned_sample(four_state, 1.0, 10, seed=0, method="importance")


@pytest.mark.slow
def test_fleming_viot_estimates_the_rate(four_state, four_state_lambda):
    sample = conditioned_sample(four_state, 8.0, 400, seed=1, method="fleming-viot")
    assert len(sample) == 400
    assert sample.lambda_estimate() == pytest.approx(four_state_lambda, rel=0.25)


def test_product_sample_respects_the_pattern(beta_bond):
    spec = beta_bond(1.0)
    occ = product_sample(np.full(spec.width, 0.7), 500, seed=0, pattern=spec.pattern)
    assert occ.shape == (500, spec.width)
    assert np.all(occ[:, list(spec.pattern.site_indices)].sum(axis=1) < 2)


def test_domination_screen():
    box = Box(1, 1)
    low = product_sample(np.full(3, 0.2), 2000, seed=1)
    high = product_sample(np.full(3, 0.6), 2000, seed=2)
    assert domination_mc(low, high, box).passed
    report = domination_mc(high, low, box)
    assert not report.passed
    assert "site0" in report.parameters["violations"]
    with pytest.raises(PreconditionError):
        domination_mc(low[:1], high, box)


def test_battery_contents():
    names = [f.name for f in default_battery(Box(2, 1), random_sets=2)]
    assert names[:9] == [f"site{i}" for i in range(9)]
    assert "ball1" in names and "ball2" in names
    assert {"sum0", "max1", "min1"} <= set(names)
    occ = occupation_matrix([0b101], 3)
    assert occ.tolist() == [[1.0, 0.0, 1.0]]


def test_mismatch_pair_is_ordered(beta_bond):
    spec = beta_bond(3.0)
    lower, upper = mismatch_pair(spec)
    assert lower & ~upper == 0
    assert not spec.in_target(upper)
    rng = RngStream(0, 0).generator()
    lo, up = random_ordered_pair(spec, rng)
    assert lo & ~up == 0


def test_coupled_pair_refuses_unordered_starts(beta_bond):
    spec = beta_bond(3.0)
    w = model_weights(spec)
    lower, upper = mismatch_pair(spec)
    with pytest.raises(PreconditionError):
        coupled_pair(spec, w, upper, lower, 1.0, RngStream(0, 0).generator())


@pytest.mark.parametrize("rho", [0.2, 0.5, 0.8, 0.95])
def test_split_coupling_keeps_the_order(beta_bond, rho):
    spec = beta_bond(3.0, rho)
    report = coupling_trials(spec, model_weights(spec), 150, 3.0, seed=4, start="mismatch")
    assert report.passed
    assert report.parameters["violating_trials"] == 0


def test_shared_clocks_break_the_order(beta_bond):
    spec = beta_bond(3.0)
    report = coupling_trials(spec, model_weights(spec), 150, 3.0, seed=4, naive=True, start="mismatch")
    assert not report.passed
    assert report.parameters["violating_trials"] > 0


@pytest.mark.slow
@pytest.mark.parametrize("rho", [0.2, 0.5, 0.8])
def test_random_pairs_stay_ordered(beta_bond, rho):
    spec = beta_bond(3.0, rho)
    report = coupling_trials(spec, model_weights(spec), 300, 3.0, seed=9)
    assert report.passed


def test_gillespie_marginals_match_uniformization(four_state):
    report = marginals_check(StateSpace(four_state), 1.0, 4000, seed=6)
    assert report.passed
    assert [row["site"] for row in report.rows] == [0, 1, 2]
    assert report.rows[1]["exact"] == 0.0


@pytest.mark.slow
def test_yaglom_marginals_inside_the_band(square_a1):
    report = yaglom_compare(square_a1, model_weights(square_a1), 0.5, 2000, seed=8)
    assert report.passed
    assert all(row["lower"] <= row["upper"] + 1e-12 for row in report.rows)


def test_simulation_needs_a_killed_model(birth_death):
    with pytest.raises(PreconditionError):
        survival_curve(birth_death, [0.0, 1.0], 10, seed=0)
    assert build_spec("ssep", 1, 0, 0.5).killing
