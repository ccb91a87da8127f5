from generators.models import GeneratorSpec, ModelKind, build_spec, enumerate_states
from generators.rates import (
    Move,
    TransitionList,
    dual_ab_transitions,
    hprocess_transitions,
    killed_transitions,
    potential_V,
    psi_transitions,
    transitions,
)
