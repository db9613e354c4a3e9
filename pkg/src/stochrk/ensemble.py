"""
Monte Carlo ensembles of independent trajectories.

Trajectory i draws its Wiener increments from RngStream(master_seed,
stream_offset + i), so every trajectory is reproducible on its own and the
results do not depend on how trajectories are spread over worker processes.
Observables are evaluated at base grid points only; means and standard
errors are aggregated after all trajectories finished, in trajectory order.

Classes:
    Observable: Named real-valued function of the state
    ComponentObservable: One state component
    EnsembleResult: Means, standard errors and step statistics
    EnsembleError: Raised when a trajectory fails

Functions:
    run_trajectory: Integrate one trajectory and evaluate observables
    run_ensemble: Integrate N trajectories
    standard_error_scaling_check: Ratio of standard errors for N and 4N trajectories

Dependencies:
    - numpy: Aggregation
    - pandas: Result tables
    - multiprocessing: Worker pool
"""

from dataclasses import dataclass
from multiprocessing import Pool
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd

from .brownian import BrownianStack, RngStream
from .constants import Constants
from .sde import SdeSystem
from .stepper import StepController, integrate_path
from .tableau import ButcherTableau

class EnsembleError(RuntimeError):
    """
    Raised when a trajectory fails; the ensemble is abandoned.

    Attributes:
        index: Trajectory index
        reason: Description of the failure
    """

    def __init__(self, index: int, reason: str):
        super().__init__(index, reason)
        self.index = index
        self.reason = reason

    def __str__(self):
        return f"Trajectory {self.index} failed: {self.reason}"

class Observable:
    """
    Named real-valued function of the state.

    Subclasses implement __call__; instances must be picklable to be used
    with worker processes.
    """

    def __init__(self, name: str):
        self.name = name

    def __call__(self, state: np.ndarray) -> float:
        raise NotImplementedError

class ComponentObservable(Observable):
    """Value of one state component."""

    def __init__(self, index: int = 0, name: str = None):
        super().__init__(name if name is not None else f"x{index}")
        self.index = index

    def __call__(self, state: np.ndarray) -> float:
        return float(state[self.index])

@dataclass
class EnsembleResult:
    """
    Aggregated ensemble.

    Attributes:
        grid: Output times
        mean: Observable means, indexed by time, one column per observable
        standard_error: Unbiased sample standard deviation / sqrt(N); NaN for N = 1
        values: Raw observable values, shape (N, len(grid), observables)
        n_trajectories: N
        master_seed: Seed of all streams
        stream_offset: Stream of trajectory 0; streams are offset..offset+N-1
        accepted, rejected, f_evaluations: Step statistics summed over trajectories
        max_level: Finest level used by any trajectory
    """
    grid: np.ndarray
    mean: pd.DataFrame
    standard_error: pd.DataFrame
    values: np.ndarray
    n_trajectories: int
    master_seed: int
    stream_offset: int
    accepted: int
    rejected: int
    f_evaluations: int
    max_level: int

    @property
    def streams(self) -> range:
        return range(self.stream_offset, self.stream_offset + self.n_trajectories)

    def to_frame(self) -> pd.DataFrame:
        """Means and standard errors side by side, columns '<name>' and '<name>_se'."""
        se = self.standard_error.add_suffix('_se')
        frame = pd.concat([self.mean, se], axis=1)
        order = [col for name in self.mean.columns for col in (name, f"{name}_se")]
        return frame[order]

def _check_grid(grid: Sequence[float], base_step: float) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise ValueError("Output grid needs at least two times")
    offsets = (grid - grid[0]) / base_step
    if np.any(np.diff(grid) <= 0):
        raise ValueError("Output grid must be strictly increasing")
    if not np.allclose(offsets, np.round(offsets), rtol=0, atol=1e-9):
        raise ValueError(f"Output grid times must be multiples of the base step {base_step} "
                         f"from {grid[0]}")
    return grid

def run_trajectory(task: Tuple) -> Tuple[np.ndarray, Tuple[int, int, int, int]]:
    """
    Integrate one trajectory and evaluate the observables on the grid.

    Args:
        task: (system, tab, ctrl, observables, grid, y0, master_seed, stream_offset,
              index); trajectory index runs on stream stream_offset + index

    Returns:
        (values of shape (len(grid), observables),
         (accepted, rejected, f_evaluations, max_level))

    Raises:
        EnsembleError: Wrapping any failure with the trajectory index
    """
    system, tab, ctrl, observables, grid, y0, master_seed, stream_offset, index = task
    try:
        rng = RngStream(master_seed, stream_offset + index)
        stack = BrownianStack(m=system.m, base_step=ctrl.base_step, t0=grid[0], k_max=ctrl.k_max)
        path = integrate_path(system, tab, ctrl, stack, rng, y0, grid[0], grid[-1])
        positions = np.round((grid - grid[0]) / ctrl.base_step).astype(int)
        values = np.array([[obs(path.checkpoint_states[p]) for obs in observables]
                           for p in positions], dtype=float)
    except EnsembleError:
        raise
    except Exception as e:
        raise EnsembleError(index, f"{type(e).__name__}: {e}") from e
    return values, (path.accepted, path.rejected, path.f_evaluations, path.max_level)

def run_ensemble(system: SdeSystem, tab: ButcherTableau, ctrl: StepController,
                 observables: List[Observable], grid: Sequence[float], N: int,
                 master_seed: int, y0: np.ndarray, stream_offset: int = 0,
                 workers: int = 1, verbose: bool = False) -> EnsembleResult:
    """
    Integrate N independent trajectories and aggregate observables.

    Args:
        system: SDE system (picklable when workers > 1)
        tab: Tableau
        ctrl: Step controller
        observables: Observables evaluated at the grid times
        grid: Output times, multiples of ctrl.base_step from grid[0]
        N: Number of trajectories
        master_seed: Master seed
        y0: Initial state shared by all trajectories
        stream_offset: Stream of trajectory 0
        workers: Worker processes; 1 runs serially
        verbose: Print progress information

    Returns:
        EnsembleResult; identical for every worker count

    Raises:
        ValueError: For invalid arguments
        EnsembleError: If any trajectory fails
    """
    if N < 1:
        raise ValueError(f"Need at least one trajectory, got {N}")
    if not observables:
        raise ValueError("Need at least one observable")
    names = [obs.name for obs in observables]
    if len(set(names)) != len(names):
        raise ValueError(f"Observable names must be unique, got {names}")
    grid = _check_grid(grid, ctrl.base_step)
    y0 = np.asarray(y0, dtype=float)

    tasks = [(system, tab, ctrl, observables, grid, y0, master_seed, stream_offset, i)
             for i in range(N)]
    if verbose:
        print(f"Running {N} trajectories of '{system.name}' with '{tab.name}' "
              f"on {max(1, workers)} worker(s)")
    if workers > 1:
        with Pool(processes=workers) as pool:
            outcomes = pool.map(run_trajectory, tasks, chunksize=max(1, N // (4 * workers)))
    else:
        outcomes = [run_trajectory(task) for task in tasks]

    values = np.stack([outcome[0] for outcome in outcomes])
    stats = np.array([outcome[1] for outcome in outcomes], dtype=np.int64)

    index = pd.Index(grid, name=Constants.TIME_COL)
    mean = pd.DataFrame(values.mean(axis=0), index=index, columns=names)
    if N > 1:
        se = values.std(axis=0, ddof=1) / np.sqrt(N)
    else:
        se = np.full(values.shape[1:], np.nan)
    standard_error = pd.DataFrame(se, index=index, columns=names)

    result = EnsembleResult(grid=grid, mean=mean, standard_error=standard_error, values=values,
                            n_trajectories=N, master_seed=master_seed,
                            stream_offset=stream_offset,
                            accepted=int(stats[:, 0].sum()), rejected=int(stats[:, 1].sum()),
                            f_evaluations=int(stats[:, 2].sum()),
                            max_level=int(stats[:, 3].max()))
    if verbose:
        print(f"Accepted {result.accepted} steps, rejected {result.rejected}, "
              f"{result.f_evaluations} effective increment evaluations")
    return result

def standard_error_scaling_check(result_n: EnsembleResult,
                                 result_4n: EnsembleResult) -> pd.DataFrame:
    """
    Ratio SE_N / SE_4N per grid time and observable; close to 2 for
    independent trajectories.

    Both standard errors zero gives a ratio of 1.

    Raises:
        ValueError: If the trajectory counts are not N and 4N, the grids
            differ, or the two ensembles share streams of the same seed
    """
    if result_4n.n_trajectories != 4 * result_n.n_trajectories:
        raise ValueError(f"Expected N and 4N trajectories, got {result_n.n_trajectories} "
                         f"and {result_4n.n_trajectories}")
    if not np.array_equal(result_n.grid, result_4n.grid):
        raise ValueError("Results use different output grids")
    if result_n.master_seed == result_4n.master_seed:
        first, second = result_n.streams, result_4n.streams
        if first.start < second.stop and second.start < first.stop:
            raise ValueError(f"Seed ranges overlap: streams {first.start}..{first.stop - 1} and "
                             f"{second.start}..{second.stop - 1} of seed {result_n.master_seed}")
    se_n = result_n.standard_error.to_numpy()
    se_4n = result_4n.standard_error.to_numpy()
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where((se_n == 0) & (se_4n == 0), 1.0, se_n / se_4n)
    return pd.DataFrame(ratio, index=result_n.standard_error.index,
                        columns=result_n.standard_error.columns)
