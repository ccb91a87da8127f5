from harmonic.hitting import HittingProfile, solve_hitting
from harmonic.walk import return_statistics, summability_check, two_point_bound
from harmonic.weights import (
    PsiForm,
    SiteWeights,
    constant_for_A1,
    constant_for_A2,
    constant_for_ab,
    flat_weights,
    weights,
)
