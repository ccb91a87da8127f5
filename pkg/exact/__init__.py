from exact.checks import (
    CheckReport,
    check_entropy_bound,
    check_overlap_identity,
    check_survival_ratio,
    dual_consistency_check,
    feynman_kac_check,
    sandwich_report,
)
from exact.monotonicity import dominates, psi_monotone, verify_generator_monotone, verify_V_monotone
from exact.spectral import (
    KilledSemigroup,
    SpectralResult,
    conditioned_law,
    dense_principal,
    dual_principal_ab,
    principal_dirichlet,
    survival_exact,
)
from exact.state_space import DistVec, StateSpace
