from montecarlo.coupling import coupled_pair, coupling_trials, mismatch_pair, random_ordered_pair
from montecarlo.domination import default_battery, domination_mc, product_sample
from montecarlo.engine import RateCache, RngStream, run_trajectories, sample_path
from montecarlo.survival import (
    ConditionedSample,
    SurvivalCurve,
    conditioned_sample,
    lambda_fit,
    marginals_check,
    simulate_marginals,
    survival_curve,
    yaglom_compare,
)
