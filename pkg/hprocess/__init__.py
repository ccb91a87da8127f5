from hprocess.h_process import (
    HProcess,
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
