import numpy as np
import pytest

from harmonic import (
    PsiForm,
    constant_for_A1,
    constant_for_A2,
    constant_for_ab,
    flat_weights,
    return_statistics,
    solve_hitting,
    summability_check,
    two_point_bound,
    weights,
)
from harmonic.hitting import harmonic_residual
from harmonic.weights import reciprocal_harmonic_defect
from lattice import Box, Config, Pattern
from utils.errors import ConstructionUnavailable, PreconditionError


def test_one_dimensional_profile_is_linear():
    profile = solve_hitting(Box(1, 2), [0])
    assert profile.h(1) == pytest.approx(2 / 3, abs=1e-12)
    assert profile.h(-2) == pytest.approx(1 / 3, abs=1e-12)
    assert profile.h(0) == 1.0
    assert profile.h(3) == 0.0


def test_square_profile_and_constant():
    profile = solve_hitting(Box(2, 1), [(0, 0)])
    for k in Box(2, 1).origin_neighbors:
        assert profile.h(k) == pytest.approx(1 / 3, abs=1e-12)
    assert constant_for_A1(profile) == pytest.approx(3.0, abs=1e-9)


def test_profile_is_harmonic_off_the_targets():
    box = Box(3, 2)
    profile = solve_hitting(box, [box.origin])
    mask = np.zeros(box.size, dtype=bool)
    mask[box.index(box.origin)] = True
    assert harmonic_residual(profile.grid(), mask.reshape(profile.grid().shape)) < 1e-10
    assert profile.method == "direct"
    assert np.all((profile.values >= 0) & (profile.values <= 1))


def test_sor_agrees_with_the_direct_solve():
    box = Box(2, 4)
    direct = solve_hitting(box, [box.origin])
    iterative = solve_hitting(box, [box.origin], direct_limit=1)
    assert iterative.method == "sor"
    assert np.max(np.abs(direct.values - iterative.values)) < 1e-9


def test_profile_needs_targets_inside():
    with pytest.raises(PreconditionError):
        solve_hitting(Box(1, 1), [])
    with pytest.raises(PreconditionError):
        solve_hitting(Box(1, 1), [2])


def test_a1_constant_unavailable_in_one_dimension():
    # h(±1) = 2/3 >= 1/2
    with pytest.raises(ConstructionUnavailable):
        constant_for_A1(solve_hitting(Box(1, 2), [0]))


def test_a2_constant_excludes_the_partner():
    box = Box(2, 1)
    profile = solve_hitting(box, [box.origin, box.partner])
    C = constant_for_A2(profile)
    for k in box.origin_neighbors:
        if k == box.partner:
            continue
        assert (1 + C) / (1 + C * profile.h(k)) >= 2.0


def test_birth_death_constant_satisfies_both_inequalities():
    box = Box(2, 1)
    profile = solve_hitting(box, [box.origin])
    C = constant_for_ab(profile, a=1.0, b=2.0, rho=0.4)
    assert C >= 1.0
    with pytest.raises(PreconditionError):
        constant_for_ab(profile, a=0.0, b=1.0, rho=0.4)


def test_weights_match_their_formulas():
    box = Box(2, 1)
    profile = solve_hitting(box, [box.origin])
    w = weights(profile, 3.0, 0.5)
    assert w.gamma[box.index(box.origin)] == pytest.approx(w.gamma_target)
    assert w.gamma_target == pytest.approx(0.25)
    k = box.index((1, 0))
    assert w.gamma[k] == pytest.approx(0.5)
    assert w.alpha[k] == pytest.approx(0.5 * 0.5 / (0.5 * 0.5 + 0.5))
    assert np.all(w.alpha <= 0.5)
    frame = w.frame()
    assert list(frame.columns) == ["x1", "x2", "h", "gamma", "alpha", "alpha_tilde"]
    assert len(frame) == box.size


def test_psi_vanishes_on_the_killed_set():
    box = Box(1, 1)
    profile = solve_hitting(box, [0])
    w = weights(profile, 1.0, 0.5, PsiForm.ORIGIN_KILLED)
    assert w.psi(Config.from_text("010")) == 0.0
    assert w.psi(Config.from_text("101")) == pytest.approx(w.gamma[0] * w.gamma[2])
    pattern = Pattern.pair(box)
    pw = weights(profile, 1.0, 0.5, PsiForm.PATTERN_KILLED, pattern=pattern)
    assert pw.psi(Config.from_text("010")) > 0
    assert pw.psi(Config.from_text("011")) == 0.0


def test_inverse_form_is_reciprocal():
    box = Box(1, 2, origin_excluded=True)
    profile = solve_hitting(box, [0])
    direct = weights(profile, 2.0, 0.3, PsiForm.PRODUCT, box=box)
    inverse = weights(profile, 2.0, 0.3, PsiForm.INVERSE, box=box)
    c = Config.from_text("1100")
    assert direct.psi(c) * inverse.psi(c) == pytest.approx(1.0)


def test_flat_weights_have_unit_gamma():
    box = Box(2, 1)
    w = flat_weights(box, 0.5, PsiForm.ORIGIN_KILLED)
    assert np.all(w.gamma == 1.0)
    assert np.all(w.alpha == pytest.approx(0.5))


def test_reciprocal_gamma_is_harmonic():
    box = Box(2, 2)
    w = weights(solve_hitting(box, [box.origin]), 3.0, 0.5)
    assert reciprocal_harmonic_defect(w) < 1e-9


def test_return_statistics_in_four_dimensions():
    stats = return_statistics(4, 2000)
    assert stats.lower <= stats.upper
    assert stats.upper < 0.25
    assert not stats.divergent
    low, high = stats.return_probability
    assert 0 < low <= high < 0.2


def test_return_series_diverges_in_low_dimensions():
    stats = return_statistics(2, 200)
    assert stats.divergent
    assert np.isinf(stats.upper)


def test_two_point_bound_in_four_dimensions():
    report = two_point_bound(4, [1, 2])
    assert report.passed
    assert all(row["two_point"] < 0.5 for row in report.rows)
    assert list(report.frame()["n"]) == [1, 2]


def test_summability_partial_sums_grow():
    report = summability_check(3, [1, 2, 3])
    assert report.partial_sums == sorted(report.partial_sums)
    assert len(report.frame()) == 3
    with pytest.raises(PreconditionError):
        summability_check(3, [2])
