import math

import numpy as np
import pytest
from scipy.linalg import null_space

from exact import (
    DistVec,
    StateSpace,
    check_entropy_bound,
    check_overlap_identity,
    check_survival_ratio,
    conditioned_law,
    dense_principal,
    dominates,
    dual_consistency_check,
    dual_principal_ab,
    feynman_kac_check,
    principal_dirichlet,
    psi_monotone,
    sandwich_report,
    survival_exact,
    verify_V_monotone,
)
from exact.checks import default_grid, density_moments, flat_weights_control, psi_ratio_check, survival_ratio_monotone
from exact.monotonicity import VCertificate, upset_oracle
from exact.spectral import killed_semigroup, survival_profile
from exact.state_space import functions_by_name, restricted_marginals
from generators.models import build_spec, model_weights
from harmonic import solve_hitting, weights
from harmonic.weights import PsiForm, flat_weights
from lattice import Box, Pattern
from utils.errors import CapExceeded, PreconditionError


def test_state_space_and_nu(four_state_space):
    space = four_state_space
    assert len(space) == 4
    assert np.allclose(space.nu, 0.125)
    assert space.text(3) == "101"
    assert space.index(0b101) == 3
    assert not space.contains(0b010)
    nu = DistVec.nu(space)
    assert nu.mass == pytest.approx(0.5)
    assert np.allclose(nu.marginals(), [0.5, 0.0, 0.5])


def test_dist_vec_validation(four_state_space):
    with pytest.raises(PreconditionError):
        DistVec(four_state_space, np.ones(3))
    with pytest.raises(PreconditionError):
        DistVec(four_state_space, -np.ones(4))
    with pytest.raises(PreconditionError):
        DistVec(four_state_space, np.zeros(4)).normalize()
    point = DistVec.point(four_state_space, 0b001)
    assert point(0b001) == 1.0 and point(0b010) == 0.0


def test_restricted_marginals_condition_the_pattern():
    box = Box(1, 1)
    probs = np.full(3, 0.5)
    out = restricted_marginals(probs, Pattern.pair(box))
    assert out[0] == pytest.approx(0.5)
    assert out[1] == pytest.approx(1 / 3) and out[2] == pytest.approx(1 / 3)
    single = restricted_marginals(probs, Pattern.single_site(box))
    assert single[1] == 0.0


def test_single_state_rate(single_state):
    space = StateSpace(single_state)
    assert len(space) == 1
    spectral = principal_dirichlet(space)
    assert spectral.lam == pytest.approx(2.0, abs=1e-10)
    init = DistVec.point(space, 0)
    for t in (0.0, 0.3, 1.5):
        assert survival_exact(space, init, t) == pytest.approx(math.exp(-2 * t), rel=1e-10)


def test_four_state_principal_pair(four_state_space, four_state_lambda):
    spectral = principal_dirichlet(four_state_space)
    assert spectral.lam == pytest.approx(four_state_lambda, abs=1e-9)
    assert np.all(spectral.u > 0)
    assert spectral.u_mean == pytest.approx(1.0)
    dense = dense_principal(four_state_space)
    assert dense.lam == pytest.approx(four_state_lambda, abs=1e-12)
    assert dense.levels[1] == pytest.approx(3.0, abs=1e-12)
    assert np.allclose(dense.u, spectral.u, atol=1e-7)


def test_birth_death_has_no_killing(birth_death):
    space = StateSpace(birth_death)
    with pytest.raises(PreconditionError):
        principal_dirichlet(space)
    invariant = dual_principal_ab(space)
    assert invariant.residual <= 1e-10
    assert np.all(invariant.u > 0)
    assert dual_consistency_check(space).passed


def test_semigroup_identity_and_decay(four_state_space, four_state_lambda):
    semigroup = killed_semigroup(four_state_space)
    ones = np.ones(len(four_state_space))
    assert np.allclose(semigroup.apply(ones, 0.0), ones)
    values = survival_profile(four_state_space, DistVec.nu(four_state_space).normalize(), [0.0, 10.0, 20.0])
    assert values[0] == pytest.approx(1.0)
    assert values[2] / values[1] == pytest.approx(math.exp(-10 * four_state_lambda), rel=1e-6)


def test_conditioned_law_is_normalized(four_state_space):
    law = conditioned_law(four_state_space, DistVec.nu(four_state_space).normalize(), 2.0)
    assert law.mass == pytest.approx(1.0)
    assert law.normalized


def test_survival_ratio_and_entropy_bound(four_state_space):
    spectral = principal_dirichlet(four_state_space)
    ratio = check_survival_ratio(four_state_space, spectral)
    assert ratio.passed
    assert all(row["ratio"] <= 1.0 + 1e-9 for row in ratio.rows)
    assert ratio.rows[-1]["deviation"] < 1e-6
    entropy = check_entropy_bound(four_state_space, spectral)
    assert entropy.passed
    assert entropy.parameters["adjoint_lambda"] == pytest.approx(spectral.lam, abs=1e-9)


def test_overlap_identity_converges(four_state_space):
    spectral = principal_dirichlet(four_state_space)
    report = check_overlap_identity(four_state_space, np.ones(4), spectral)
    assert not report.parameters["degenerate"]
    assert report.rows[-1]["gap"] <= 1e-4 * report.parameters["limit"]
    with pytest.raises(PreconditionError):
        check_overlap_identity(four_state_space, -np.ones(4), spectral)


def test_default_grid_spans_ten_relaxation_times():
    grid = default_grid(2.0)
    assert grid[0] == 0.0 and grid[-1] == pytest.approx(5.0)
    assert len(grid) == 6


def test_feynman_kac_representation(four_state_space):
    box = four_state_space.box
    w = weights(solve_hitting(box, [0]), 1.0, 0.5)
    report = feynman_kac_check(four_state_space, w)
    assert report.passed


def test_strassen_on_point_masses(four_state_space):
    low = DistVec.point(four_state_space, 0b001)
    high = DistVec.point(four_state_space, 0b101)
    assert dominates(low, high)
    result = dominates(high, low)
    assert not result
    assert result.excess == pytest.approx(1.0)
    assert result.violated_upset == (0b101,)
    assert upset_oracle(low, high) and not upset_oracle(high, low)


def test_strassen_agrees_with_the_upset_oracle(four_state_space):
    space = four_state_space
    nu = DistVec.nu(space).normalize()
    lower = DistVec.product(space, [0.2, 0.5, 0.3])
    assert bool(dominates(lower, nu)) == upset_oracle(lower, nu)
    assert bool(dominates(nu, lower)) == upset_oracle(nu, lower)


def test_v_monotone_for_the_square(square_a1):
    cert = verify_V_monotone(square_a1, model_weights(square_a1))
    assert cert.passed
    assert cert.mode == "exhaustive"
    assert cert.checked > 0
    with pytest.raises(PreconditionError):
        verify_V_monotone(square_a1, model_weights(square_a1), direction="sideways")


def test_beta_bond_generator_monotonicity(beta_bond):
    weak = beta_bond(1.0)
    strong = beta_bond(3.0)
    failing = psi_monotone(weak, model_weights(weak))
    assert not failing.passed
    assert failing.counterexample is not None
    assert psi_monotone(strong, model_weights(strong)).passed


def test_generator_monotonicity_respects_caps(beta_bond):
    spec = beta_bond(3.0)
    with pytest.raises(CapExceeded):
        psi_monotone(spec, model_weights(spec), strategy="upsets", max_sites=6)


def test_sandwich_for_the_square(square_a1):
    space = StateSpace(square_a1)
    report = sandwich_report(space, model_weights(square_a1), t_grid=(0.0, 1.0, 3.0))
    assert report.passed
    assert [row["t"] for row in report.rows] == [0.0, 1.0, 3.0]


def test_named_probes(four_state_space):
    funcs = functions_by_name(four_state_space, ["one", "site0"])
    assert np.allclose(funcs["one"], 1.0)
    assert list(funcs["site0"]) == [0.0, 1.0, 0.0, 1.0]
    with pytest.raises(PreconditionError):
        functions_by_name(four_state_space, ["u"])


@pytest.fixture
def square_birth_death():
    def make(a=1.0, b=1.0, rho=0.5):
        return StateSpace(build_spec("birth-death", 2, 1, rho, a=a, b=b))

    return make


@pytest.mark.parametrize("a, b, rho", [(1.0, 1.0, 0.5), (2.0, 1.0, 0.5)])
def test_dual_principal_matches_the_dense_null_space(square_birth_death, a, b, rho):
    space = square_birth_death(a, b, rho)
    invariant = dual_principal_ab(space)
    assert invariant.residual <= 1e-10
    # invariant law of the forward chain, as a density against ν
    kernel = null_space(space.killed_generator.toarray().T)
    assert kernel.shape[1] == 1
    pi = np.abs(kernel[:, 0])
    oracle = pi / space.nu
    oracle /= np.dot(oracle, space.nu)
    assert np.max(np.abs(invariant.u - oracle)) <= 1e-8 * oracle.max()


@pytest.mark.parametrize("a, b, rho", [(1.0, 1.0, 0.5), (0.7, 0.3, 0.3)])
def test_invariant_law_is_nu_on_the_balanced_line(square_birth_death, a, b, rho):
    space = square_birth_death(a, b, rho)
    assert a * rho == pytest.approx(b * (1 - rho))
    mu = DistVec(space, dual_principal_ab(space).u * space.nu).normalize()
    nu = DistVec.nu(space).normalize()
    assert np.max(np.abs(mu.values - nu.values)) <= 1e-10


def test_birth_death_sandwich(square_birth_death):
    space = square_birth_death()
    report = sandwich_report(space, model_weights(space.spec))
    assert report.passed
    assert [row["law"] for row in report.rows] == ["invariant"]
    assert report.parameters["a"] == 1.0


def test_flat_weights_fail_the_v_test(square_a1):
    flat = flat_weights(square_a1.box, square_a1.rho, PsiForm.ORIGIN_KILLED)
    control = flat_weights_control(verify_V_monotone(square_a1, flat))
    assert control.passed
    assert control.rows[0]["counterexample"] is not None
    lenient = VCertificate(True, "increasing", "exhaustive", 10, 0.0)
    assert not flat_weights_control(lenient).passed


def test_u_over_psi_increases_on_the_square(square_a1):
    space = StateSpace(square_a1)
    w = model_weights(square_a1)
    u = dense_principal(space).u
    report = psi_ratio_check(space, w, u)
    assert report.passed
    assert report.parameters["pairs"] > 0
    assert survival_ratio_monotone(space, w, (0.0, 0.5, 2.0)).passed
    # u itself decreases when a particle is added next to the origin
    flat = flat_weights(square_a1.box, square_a1.rho, PsiForm.ORIGIN_KILLED)
    control = psi_ratio_check(space, flat, u)
    assert not control.passed
    assert control.rows[0]["margin"] < 0
    with pytest.raises(PreconditionError):
        psi_ratio_check(space, w, u, direction="sideways")


def test_birth_death_density_against_both_weights(square_birth_death):
    space = square_birth_death()
    u = dual_principal_ab(space).u
    up = psi_ratio_check(space, model_weights(space.spec), u, "increasing")
    down = psi_ratio_check(space, model_weights(space.spec, inverse=True), u, "decreasing")
    assert up.passed and down.passed


@pytest.mark.parametrize("a, b", [(1.0, 1.0), (2.0, 1.0)])
def test_invariant_density_moments(square_birth_death, a, b):
    space = square_birth_death(a, b)
    u = dual_principal_ab(space).u
    report = density_moments(space, u)
    assert report.passed
    assert report.rows[0]["moment"] == pytest.approx(1.0, abs=1e-10)
    if a == b:
        assert all(row["moment"] == pytest.approx(1.0, abs=1e-9) for row in report.rows)
    else:
        assert report.rows[-1]["norm"] > 1.0
