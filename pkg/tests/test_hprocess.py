import numpy as np
import pytest

from exact.spectral import dense_principal
from exact.state_space import StateSpace
from generators.rates import killed_transitions
from hprocess import (
    boundary_window_check,
    build,
    decoupling_check,
    distinguishing_probe,
    eigenfunction_defect,
    martingale_check,
    pattern_rate,
    simulate_hprocess,
    window_law_check,
    window_law_scan,
)
from hprocess.h_process import SCAN_MULTIPLES, stationary_two_point, two_time_expectation
from utils.errors import PreconditionError


@pytest.fixture
def hp(four_state_space):
    return build(four_state_space, dense_principal(four_state_space))


def test_h_process_is_reversible_for_mu_hat(hp, four_state_lambda):
    assert hp.lam == pytest.approx(four_state_lambda, abs=1e-12)
    assert hp.reversibility_defect() < 1e-12
    assert hp.stationarity_defect() < 1e-12
    assert hp.row_sum_defect() < 1e-12
    assert hp.mu.mass == pytest.approx(1.0)
    assert hp.mu_hat.mass == pytest.approx(1.0)
    assert set(hp.summary()) >= {"lambda", "states", "reversibility_defect"}


def test_build_accepts_a_spec(four_state):
    assert len(build(four_state).space) == 4


def test_build_refuses_spectral_data_from_another_space(four_state_space, square_a1, beta_bond):
    other = StateSpace(square_a1)
    with pytest.raises(PreconditionError):
        build(four_state_space, dense_principal(other))
    # same state count, different model
    twin = StateSpace(beta_bond(3.0))
    spectral = dense_principal(twin)
    assert build(twin, spectral).space is twin
    with pytest.raises(PreconditionError):
        build(StateSpace(beta_bond(5.0)), spectral)


def test_spectral_space_is_reused_for_a_matching_spec(four_state, four_state_space):
    spectral = dense_principal(four_state_space)
    assert build(four_state, spectral).space is four_state_space


def test_martingale_and_eigenfunction(hp):
    grid = [0.0, 1.0, 5.0]
    assert martingale_check(hp, grid).passed
    report = eigenfunction_defect(hp, grid, tol=1e-9)
    assert report.passed
    assert [row["t"] for row in report.rows] == grid


def test_two_time_expectation_of_constants_is_one(hp):
    ones = np.ones(len(hp.space))
    assert two_time_expectation(hp, ones, ones, 0.5, 1.0, 2.0) == pytest.approx(1.0)
    assert stationary_two_point(hp, hp.mu_hat, ones, ones, 1.0) == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        two_time_expectation(hp, ones, ones, 1.5, 1.0, 2.0)


def test_window_law_needs_an_interior_window(hp):
    with pytest.raises(PreconditionError):
        window_law_check(hp, t=2.0, r=1.0, a=1.5)
    with pytest.raises(PreconditionError):
        window_law_check(hp, t=2.0, r=1.0, a=0.0)


def test_window_law_gap_decays(hp):
    report = window_law_scan(hp, r=1.0)
    assert (report.check, report.name) == ("prop1.9", "window_law_scan")
    single = window_law_check(hp, t=8.0 / hp.lam, r=1.0)
    assert single.check != report.check
    assert single.as_dict()["name"] == "window_law"
    assert report.passed
    assert [row["lambda_t"] for row in report.rows] == list(SCAN_MULTIPLES)
    gaps = [row["max_gap"] for row in report.rows]
    assert gaps[0] > gaps[-1]


def test_decoupling_limits(hp):
    grid = [k / hp.lam for k in SCAN_MULTIPLES]
    endpoint = decoupling_check(hp, "site0", "site0", grid, endpoint=True)
    interior = decoupling_check(hp, "site0", "site0", grid, endpoint=False)
    assert (endpoint.check, endpoint.name) == ("prop1.8", "endpoint_decoupling")
    assert (interior.check, interior.name) == ("remark5.1", "interior_decoupling")
    assert endpoint.passed and interior.passed
    # μ and μ̂ disagree at a corner site, so the two limits differ
    assert endpoint.parameters["limit"] != pytest.approx(interior.parameters["limit"], abs=1e-6)
    assert endpoint.parameters["other_limit"] == pytest.approx(interior.parameters["limit"])


def test_boundary_windows_are_transposes(hp):
    grid = [k / hp.lam for k in SCAN_MULTIPLES]
    report = boundary_window_check(hp, 1.0, grid)
    assert (report.check, report.name) == ("remark5.2", "boundary_window")
    assert report.passed
    assert all(row["transposition_defect"] < 1e-10 for row in report.rows)
    with pytest.raises(PreconditionError):
        boundary_window_check(hp, 10.0, [1.0])


def test_distinguishing_probe_is_a_corner(hp):
    site, coord, diff = distinguishing_probe(hp)
    assert site in (0, 2)
    assert coord == hp.space.box.sites[site]
    assert diff > 1e-6


def test_h_rates_put_no_mass_on_the_pattern(hp):
    spec = hp.space.spec
    killing = sum(
        m.rate for s in hp.space.states for m in killed_transitions(spec, int(s)).moves if m.killing
    )
    # the killed chain has moves into the pattern
    assert killing > 0
    assert pattern_rate(hp) == 0.0


@pytest.mark.slow
def test_simulated_h_process_stays_off_the_pattern(hp):
    report = simulate_hprocess(hp, horizon=50.0, trials=200, seed=3, tv_tol=0.05)
    assert report.parameters["pattern_visits"] == 0
    assert report.parameters["pattern_rate"] == 0.0
    assert report.parameters["events"] > 0
    assert report.passed
    assert len(report.rows) == 4
