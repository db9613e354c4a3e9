from dataclasses import dataclass

import numpy as np

@dataclass(frozen=True)
class Constants:
    # Column names of emitted tables
    TIME_COL = 't'
    N_MC_COL = 'n_mc'
    N_SE_COL = 'n_se'
    N_ORACLE_COL = 'n_oracle'
    NORM_MC_COL = 'norm_mc'
    H_COL = 'h'
    MEAN_ERROR_COL = 'mean_error'
    N_PATHS_COL = 'n_paths'
    ORDER_COL = 'order'
    WEIGHTS_COL = 'weights'
    RESIDUAL_COL = 'residual'

    # Tableau file keywords
    TAB_NAME = 'name'
    TAB_ORDER = 'order'
    TAB_STAGES = 'stages'
    TAB_NODES = 'c'
    TAB_ROW = 'a'
    TAB_WEIGHTS = 'b'
    TAB_EMBEDDED = 'bhat'

    # Numerical floors and tolerances
    EPS = float(np.finfo(float).eps)
    FIT_FLOOR = 10 * EPS
    RESIDUAL_TOL = 1e-12
    TRACE_DRIFT_TOL = 1e-8
    NORM_DRIFT_WARN = 1e-3

    # Exit codes
    EXIT_OK = 0
    EXIT_VALIDATION_FAILED = 1
    EXIT_CONFIG_ERROR = 2
    EXIT_IO_ERROR = 3
    EXIT_NUMERICAL_ABORT = 4
