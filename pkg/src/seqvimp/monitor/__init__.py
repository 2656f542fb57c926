"""Sequential decision engine over exceedance streams and its operating characteristics."""

from .operating import (
    OperatingCharacteristic,
    average_expected_permutations,
    effective_alpha,
    expected_permutations,
    operating_characteristic,
    power_function,
    pval_expected_m,
    pval_se_fraction,
    singular_point,
    solve_k,
)
from .montecarlo import bernoulli_replays
from .regimes import (
    DEFAULTS,
    Decision,
    Method,
    MonitorState,
    SequentialSpec,
    certain_stop,
    complete_pvalue,
    decide_trajectories,
    evaluate,
    final_hypothesis,
    monitor_step,
    pval_estimate,
    pval_support,
    replay,
    sprt_boundaries,
    with_overrides,
)
from .tables import boundary_table, characteristic_table, write_csv

__all__ = [name for name in dir() if not name.startswith("_")]
