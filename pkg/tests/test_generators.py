import math

import numpy as np
import pytest

from exact.spectral import dense_principal
from exact.state_space import StateSpace
from generators import (
    ModelKind,
    build_spec,
    dual_ab_transitions,
    enumerate_states,
    hprocess_transitions,
    killed_transitions,
    potential_V,
    psi_transitions,
    transitions,
)
from generators.graph import is_irreducible, rate_matrix_frame, transition_graph
from generators.models import model_weights
from lattice import Config
from utils.errors import CapExceeded, PreconditionError


def test_state_enumeration_skips_the_pattern(four_state, beta_bond, birth_death):
    assert list(enumerate_states(four_state)) == [0b000, 0b001, 0b100, 0b101]
    assert enumerate_states(beta_bond(1.0)).size == 2 ** 7 * 3
    assert enumerate_states(birth_death).size == 16
    with pytest.raises(CapExceeded):
        enumerate_states(build_spec("ssep", 2, 2, 0.5), max_states=1000)


def test_moves_out_of_the_four_state_corner(four_state):
    moves = transitions(four_state, Config.from_text("101"))
    assert moves.total_rate == pytest.approx(4.0)
    assert moves.killing_rate == pytest.approx(2.0)
    assert sorted(c.text() for c in moves.targets()) == ["001", "011", "100", "110"]


def test_boundary_rates_are_reversible_for_nu():
    spec = build_spec("ssep", 1, 1, 0.3)
    up = {m.target: m.rate for m in transitions(spec, 0b000).moves}[0b001]
    down = {m.target: m.rate for m in transitions(spec, 0b001).moves}[0b000]
    assert up / down == pytest.approx(0.3 / 0.7)


def test_killed_transitions_reject_pattern_states(four_state):
    with pytest.raises(PreconditionError):
        killed_transitions(four_state, 0b010)


def test_beta_bond_rate(beta_bond):
    spec = beta_bond(3.0)
    box = spec.box
    origin, partner = box.index(box.origin), box.index(box.partner)
    moves = transitions(spec, 1 << origin).moves
    bond = [m for m in moves if m.clock == ("x", origin, partner)]
    assert len(bond) == 1
    assert bond[0].rate == 3.0
    assert not bond[0].killing
    others = [m for m in moves if m.clock[0] == "x" and m.clock != ("x", origin, partner)]
    assert all(m.rate == 1.0 for m in others)


def test_spec_flags(beta_bond, four_state, birth_death):
    assert beta_bond(3.0).coupling_regime
    assert not beta_bond(1.0).coupling_regime
    assert four_state.killing and not birth_death.killing
    assert birth_death.model is ModelKind.BIRTH_DEATH
    info = beta_bond(2.0).describe()
    assert info["beta"] == 2.0 and info["pattern_threshold"] == 2


def test_invalid_specs():
    with pytest.raises(PreconditionError):
        build_spec("beta-bond", 2, 0, 0.5, "A2")
    with pytest.raises(PreconditionError):
        build_spec("ssep", 1, 1, 1.0)
    with pytest.raises(PreconditionError):
        build_spec("ssep", 1, 1, 0.5, "A3")
    with pytest.raises(ValueError):
        build_spec("zrp", 1, 1, 0.5)


def test_psi_rates_carry_the_potential(square_a1):
    w = model_weights(square_a1)
    for bits in enumerate_states(square_a1)[:64]:
        bits = int(bits)
        base = killed_transitions(square_a1, bits)
        psi = psi_transitions(square_a1, w, bits)
        assert psi.total_rate == pytest.approx(base.total_rate + potential_V(square_a1, w, bits), abs=1e-12)


def test_potential_vanishes_without_weights_away_from_the_origin(four_state):
    from harmonic.weights import PsiForm, flat_weights

    w = flat_weights(four_state.box, 0.5, PsiForm.ORIGIN_KILLED)
    # γ ≡ 1: V is minus the killing rate
    assert potential_V(four_state, w, 0b000) == pytest.approx(-transitions(four_state, 0b000).killing_rate)
    assert potential_V(four_state, w, 0b101) == pytest.approx(-2.0)


def test_dual_generator_only_for_birth_death(four_state, birth_death):
    with pytest.raises(PreconditionError):
        dual_ab_transitions(four_state, 0)
    moves = dual_ab_transitions(birth_death, 0)
    assert moves.potential == pytest.approx(0.0)
    assert all(not m.killing for m in moves.moves)


def test_h_rates_compensate_the_eigenvalue(four_state):
    space = StateSpace(four_state)
    spectral = dense_principal(space)

    def u(bits):
        return float(spectral.u[space.index(bits)])

    for bits in space.states:
        h = hprocess_transitions(four_state, u, spectral.lam, int(bits))
        base = killed_transitions(four_state, int(bits))
        assert h.total_rate == pytest.approx(base.total_rate - spectral.lam, abs=1e-10)
        assert all(not four_state.in_target(m.target) for m in h.moves)


def test_transition_graph_and_rate_dump(four_state, birth_death):
    assert is_irreducible(four_state)
    assert is_irreducible(birth_death)
    graph = transition_graph(four_state)
    assert graph.number_of_nodes() == 4
    frame = rate_matrix_frame(four_state)
    assert list(frame.columns) == ["row_state", "col_state", "rate", "killing", "clock"]
    assert int(frame["killing"].sum()) == 4
    assert math.isclose(frame["rate"].sum(), float(len(frame)))
    assert np.all(frame["rate"] > 0)
