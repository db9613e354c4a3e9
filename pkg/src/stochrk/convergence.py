"""
Empirical convergence order of the lifted Runge-Kutta schemes.

Strong errors are measured on SDEs whose solution is an explicit function
X(t, W_t) of time and the terminal Wiener value. All step sizes of one
experiment share a single Brownian tree: the increments for step h are the
nodes of the tree at depth log2(T/h), so the paths of coarse steps are the
exact coarsenings of the paths of fine steps.

Classes:
    AnalyticSde: SDE system with its closed-form solution
    OrderReport: Errors per step size and the fitted log-log slope
    WeakMeanReport: Outcome of the Ornstein-Uhlenbeck mean check

Functions:
    gbm_exact: Closed-form geometric Brownian motion
    gbm_problem: Geometric Brownian motion as an AnalyticSde
    ou_system: Ornstein-Uhlenbeck system
    brownian_family: Coupled increments for every depth of a Brownian tree
    strong_error: Mean absolute terminal error per step size
    fit_loglog_slope: Least squares slope of log error against log h
    ode_order_check: Deterministic order check on y' = -lambda y
    ou_mean_check: Weak check of E[X_T] for the Ornstein-Uhlenbeck process

Dependencies:
    - numpy: Array arithmetic
    - pandas: Result tables
    - statsmodels: Ordinary least squares
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm

from .brownian import FRESH, RngStream, refine_increments
from .constants import Constants
from .sde import SdeSystem
from .stepper import integrate_fixed
from .tableau import ButcherTableau

def gbm_exact(x0, mu: float, sigma: float, t, W):
    """
    Geometric Brownian motion x0 * exp((mu - sigma^2/2) t + sigma W).

    Example:
        gbm_exact(1.0, 0.0, 1.0, 1.0, 0.0) = exp(-1/2) = 0.6065306597...
    """
    return x0 * np.exp((mu - 0.5 * sigma ** 2) * t + sigma * W)

class LinearDrift:
    """Drift rate * x."""

    def __init__(self, rate: float):
        self.rate = rate

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.rate * x

class MultiplicativeNoise:
    """Diffusion sigma * x for a scalar state."""

    def __init__(self, sigma: float):
        self.sigma = sigma

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.sigma * x[..., None]

    def jacobian(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.full(x.shape + (1, 1), self.sigma)

class AdditiveNoise:
    """Constant diffusion sigma for a scalar state."""

    def __init__(self, sigma: float):
        self.sigma = sigma

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.full(x.shape + (1,), self.sigma)

    def jacobian(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.zeros(x.shape + (1, 1))

class GbmExact:
    """Closed-form solution map (x0, t, W) -> X_t for W of shape (..., 1)."""

    def __init__(self, mu: float, sigma: float):
        self.mu = mu
        self.sigma = sigma

    def __call__(self, x0, t, W) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        return gbm_exact(x0, self.mu, self.sigma, t, W[..., :1])

@dataclass(frozen=True)
class AnalyticSde:
    """
    SDE system with a strong solution X(t, W_t).

    Attributes:
        system: Vectorized SDE system
        exact: Map (x0, t, W_t) -> X_t with W_t of shape (..., m)
    """
    system: SdeSystem
    exact: Callable

@dataclass
class OrderReport:
    """
    Strong or deterministic order measurement.

    Attributes:
        table: Columns h, mean_error, n_paths, ordered by decreasing h
        slope: Fitted log-log slope
        half_width: Twice the standard error of the slope
        excluded: Step sizes left out of the fit
        name: Label of the experiment
    """
    table: pd.DataFrame
    slope: float
    half_width: float
    excluded: List[float] = field(default_factory=list)
    name: str = ''

    def summary(self) -> str:
        return f"slope={self.slope:.6g} halfwidth={self.half_width:.6g}"

@dataclass
class WeakMeanReport:
    mean: float
    standard_error: float
    exact: float

    @property
    def deviation(self) -> float:
        """|mean - exact| in standard errors."""
        if self.standard_error == 0:
            return 0.0 if self.mean == self.exact else np.inf
        return abs(self.mean - self.exact) / self.standard_error

    @property
    def passed(self) -> bool:
        return self.deviation <= 4.0

def gbm_problem(mu: float, sigma: float) -> AnalyticSde:
    """dX = mu X dt + sigma X dW with its closed-form solution."""
    noise = MultiplicativeNoise(sigma)
    system = SdeSystem(n=1, m=1, drift=LinearDrift(mu), diffusion=noise,
                       diffusion_jacobian=noise.jacobian, name='gbm', vectorized=True)
    return AnalyticSde(system=system, exact=GbmExact(mu, sigma))

def ou_system(lam: float, sigma: float) -> SdeSystem:
    """dX = -lam X dt + sigma dW."""
    noise = AdditiveNoise(sigma)
    return SdeSystem(n=1, m=1, drift=LinearDrift(-lam), diffusion=noise,
                     diffusion_jacobian=noise.jacobian, name='ou', vectorized=True)

def _dyadic_depth(T: float, h: float) -> int:
    depth = int(round(np.log2(T / h)))
    if depth < 0 or not np.isclose(np.ldexp(T, -depth), h, rtol=1e-12, atol=0):
        raise ValueError(f"Step {h} is not T/2^k for T={T}")
    return depth

def brownian_family(rng: RngStream, T: float, depth: int, paths: int,
                    m: int = 1) -> List[np.ndarray]:
    """
    Increments of every depth of a Brownian tree over [0, T].

    Args:
        rng: Stream for the whole family
        T: Horizon
        depth: Deepest level
        paths: Number of independent paths
        m: Number of Wiener processes

    Returns:
        List whose entry k has shape (paths, 2^k, m); consecutive pairs of
        entry k+1 are the midpoint splits of entry k
    """
    top = np.sqrt(T) * rng.standard_normal((paths, 1, m), address=(FRESH, 0, 0))
    family = [top]
    for level in range(depth):
        family.append(refine_increments(rng, family[-1], np.ldexp(T, -level), level))
    return family

def fit_loglog_slope(points: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """
    Ordinary least squares slope of log(err) against log(h).

    Args:
        points: (h, err) pairs with positive values

    Returns:
        (slope, half_width) with half_width twice the standard error of the slope

    Raises:
        ValueError: If fewer than 3 points are given or a value is not positive
    """
    points = list(points)
    if len(points) < 3:
        raise ValueError(f"Insufficient points for a slope fit: need at least 3, got {len(points)}")
    h, err = (np.array(values, dtype=float) for values in zip(*points))
    if np.any(h <= 0) or np.any(err <= 0):
        raise ValueError("Step sizes and errors must be positive")
    X = sm.add_constant(np.log(h))
    fit = sm.OLS(np.log(err), X).fit()
    return float(fit.params[1]), float(2.0 * fit.bse[1])

def _report(hs: Sequence[float], errors: Sequence[float], n_paths: int,
            fit_range: Tuple[float, float], name: str) -> OrderReport:
    table = pd.DataFrame({Constants.H_COL: hs, Constants.MEAN_ERROR_COL: errors,
                          Constants.N_PATHS_COL: n_paths})
    floor, ceiling = fit_range
    inside = (table[Constants.MEAN_ERROR_COL] >= floor) & (table[Constants.MEAN_ERROR_COL] <= ceiling)
    excluded = table.loc[~inside, Constants.H_COL].tolist()
    if excluded:
        warnings.warn(f"{name}: step sizes {excluded} excluded from the fit "
                      f"(errors outside [{floor:.1e}, {ceiling:.1e}])")
    used = table.loc[inside]
    slope, half_width = fit_loglog_slope(zip(used[Constants.H_COL], used[Constants.MEAN_ERROR_COL]))
    return OrderReport(table=table, slope=slope, half_width=half_width, excluded=excluded,
                       name=name)

def strong_error(problem: AnalyticSde, tab: ButcherTableau, h_list: Sequence[float], N: int,
                 seed: int, x0: float = 1.0, T: float = 1.0,
                 fit_range: Tuple[float, float] = (Constants.FIT_FLOOR, np.inf),
                 verbose: bool = False) -> OrderReport:
    """
    Mean absolute terminal error E|X_T^num - X_T| for every step size.

    Every step size uses the same N paths; the exact solution is evaluated
    at the terminal Wiener value of each path.

    Args:
        problem: SDE with closed-form solution
        tab: Tableau, used in fixed-step mode with weights b
        h_list: Step sizes T/2^k
        N: Number of paths
        seed: Master seed
        x0: Initial value
        T: Horizon
        fit_range: Errors outside [low, high] are excluded from the fit
        verbose: Print the error table

    Returns:
        OrderReport

    Raises:
        ValueError: If a step size is not dyadic in T or fewer than 3 points
            remain for the fit
    """
    hs = sorted({float(h) for h in h_list}, reverse=True)
    depths = [_dyadic_depth(T, h) for h in hs]
    system = problem.system
    family = brownian_family(RngStream(seed), T, max(depths), N, system.m)
    W_T = family[0][:, 0, :]
    y0 = np.full((N, system.n), float(x0))
    exact = problem.exact(y0, T, W_T)

    errors = []
    for h, depth in zip(hs, depths):
        numerical = integrate_fixed(system, tab, y0, 0.0, family[depth], h)
        errors.append(float(np.mean(np.max(np.abs(numerical - exact), axis=-1))))
        if verbose:
            print(f"{tab.name}: h={h:.6g} mean error={errors[-1]:.6e}")
    return _report(hs, errors, N, fit_range, f"{system.name}/{tab.name}")

def ode_order_check(tab: ButcherTableau, h_list: Sequence[float], T: float = 1.0,
                    lam: float = 1.0,
                    fit_range: Tuple[float, float] = (Constants.FIT_FLOOR, np.inf)) -> OrderReport:
    """
    Deterministic order on y' = -lam y, y(0) = 1.

    For each h, ceil(T/h) steps are taken and compared with exp(-lam * steps * h).

    Returns:
        OrderReport with n_paths = 1
    """
    system = SdeSystem(n=1, m=0, drift=LinearDrift(-lam), name='decay', vectorized=True)
    hs = sorted({float(h) for h in h_list}, reverse=True)
    errors = []
    for h in hs:
        steps = int(np.ceil(T / h - 1e-9))
        y = integrate_fixed(system, tab, np.ones(1), 0.0, np.zeros((steps, 0)), h)
        errors.append(float(abs(y[0] - np.exp(-lam * steps * h))))
    return _report(hs, errors, 1, fit_range, f"decay/{tab.name}")

def ou_mean_check(tab: ButcherTableau, lam: float = 1.0, sigma: float = 0.5,
                  x0: float = 1.0, T: float = 1.0, h: float = 0.0625, N: int = 4000,
                  seed: int = 0) -> WeakMeanReport:
    """
    Compare the sample mean of X_T for dX = -lam X dt + sigma dW with
    x0 * exp(-lam T).

    Returns:
        WeakMeanReport; passed when the deviation is within 4 standard errors
    """
    system = ou_system(lam, sigma)
    depth = _dyadic_depth(T, h)
    family = brownian_family(RngStream(seed), T, depth, N, 1)
    y = integrate_fixed(system, tab, np.full((N, 1), float(x0)), 0.0, family[depth], h)[:, 0]
    return WeakMeanReport(mean=float(np.mean(y)),
                          standard_error=float(np.std(y, ddof=1) / np.sqrt(N)),
                          exact=float(x0 * np.exp(-lam * T)))
