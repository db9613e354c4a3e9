"""
Runge-Kutta steps on the effective increment and adaptive path integration.

Stages are K^s = f(x + sum_{r<s} A_sr K^r, t + c_s dt) where f is the
effective increment over the full step. The embedded pair gives an error
estimate; a rejected step is retried on the left half of its Brownian node
and a comfortably accepted step lets the next step double. Step sizes are
always base_step / 2^k.

Classes:
    StepController: Tolerances and step size limits
    StepReport: Outcome of one attempted step
    SolutionPath: Accepted states and step statistics of one trajectory
    IntegrationError: Raised when a path cannot be advanced

Functions:
    rk_step: One Runge-Kutta step on the effective increment
    error_norm: Mixed absolute/relative RMS error norm
    attempt_step: Step, estimate the error and decide acceptance
    integrate_path: Adaptive integration of one trajectory over [t0, T]
    integrate_fixed: Fixed-step integration of a batch of paths

Dependencies:
    - numpy: Array arithmetic
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .brownian import (BrownianStack, IncrementNode, RngStream, is_chunk_end,
                       next_node, push_back)
from .sde import IncrementInput, SdeEvaluationError, SdeSystem, effective_increment
from .tableau import ButcherTableau

class IntegrationError(RuntimeError):
    """
    Raised when a step cannot be completed.

    Attributes:
        t: Time of the failed step
        dt: Step size of the failed step
        err: Last error estimate, if any
        stage: Stage index for stage evaluation failures
    """

    def __init__(self, message: str, t: Optional[float] = None, dt: Optional[float] = None,
                 err: Optional[float] = None, stage: Optional[int] = None):
        super().__init__(message)
        self.t = t
        self.dt = dt
        self.err = err
        self.stage = stage

@dataclass(frozen=True)
class StepController:
    """
    Step size control settings.

    Attributes:
        rtol: Relative tolerance
        atol: Absolute tolerance
        base_step: Base step H; steps are H / 2^k
        k_min: Coarsest level
        k_max: Finest level
        safety: Margin applied to the doubling threshold
        max_rejects: Rejections allowed at a single time
        fixed_step: Accept every step at level fixed_level
        fixed_level: Level used in fixed-step mode
    """
    rtol: float = 1e-8
    atol: float = 1e-10
    base_step: float = 1.0
    k_min: int = 0
    k_max: int = 40
    safety: float = 0.8
    max_rejects: int = 60
    fixed_step: bool = False
    fixed_level: int = 0

    def __post_init__(self):
        if self.rtol < 0 or self.atol < 0 or not self.rtol + self.atol > 0:
            raise ValueError(f"Tolerances must be non-negative with a positive sum, "
                             f"got rtol={self.rtol}, atol={self.atol}")
        if not self.base_step > 0:
            raise ValueError(f"Base step must be positive, got {self.base_step}")
        if not 0 <= self.k_min <= self.k_max:
            raise ValueError(f"Need 0 <= k_min <= k_max, got {self.k_min}, {self.k_max}")
        if not 0 <= self.fixed_level <= self.k_max:
            raise ValueError(f"fixed_level must lie in [0, {self.k_max}], got {self.fixed_level}")
        if not 0 < self.safety <= 1:
            raise ValueError(f"safety must lie in (0, 1], got {self.safety}")
        if self.max_rejects < 1:
            raise ValueError(f"max_rejects must be positive, got {self.max_rejects}")

@dataclass
class StepReport:
    t_new: float
    y_new: np.ndarray
    err: float
    accepted: bool
    dt_used: float

@dataclass
class SolutionPath:
    """
    Accepted states of one trajectory.

    Attributes:
        times, states: Every accepted step (only the initial condition unless
            recorded with record_steps=True)
        checkpoint_times, checkpoint_states: States at every base grid point,
            starting with the initial condition
        accepted, rejected, f_evaluations: Step statistics
        final_level: Level requested for the step after the last one
        max_level: Finest level used by an accepted step
    """
    times: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    checkpoint_times: List[float] = field(default_factory=list)
    checkpoint_states: List[np.ndarray] = field(default_factory=list)
    accepted: int = 0
    rejected: int = 0
    f_evaluations: int = 0
    final_level: int = 0
    max_level: int = 0

    @property
    def t_final(self) -> float:
        return self.checkpoint_times[-1]

    @property
    def y_final(self) -> np.ndarray:
        return self.checkpoint_states[-1]

def rk_step(tab: ButcherTableau, system: SdeSystem, x: np.ndarray, t: float,
            node) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    One Runge-Kutta step on the effective increment.

    Args:
        tab: Tableau
        system: SDE system
        x: State at t, shape (n,) or (..., n) for vectorized systems
        t: Time
        node: Increment over the step (IncrementNode or IncrementInput)

    Returns:
        (y_high, y_low); y_low is None without embedded weights

    Raises:
        IntegrationError: If a stage evaluation fails, naming the stage

    Example:
        With m = 0, drift -x, x = 1 and dt = 0.1 the classical method gives
        0.9048375.
    """
    x = np.asarray(x, dtype=float)
    K = np.empty((tab.s,) + x.shape)
    for i in range(tab.s):
        xs = x + np.tensordot(tab.A[i, :i], K[:i], axes=1) if i else x
        try:
            K[i] = effective_increment(system, xs, t + tab.c[i] * node.dt, node)
        except SdeEvaluationError as e:
            raise IntegrationError(f"Stage {i} evaluation failed at t={t}, dt={node.dt}: {e}",
                                   t=t, dt=node.dt, stage=i) from e
    y_high = x + np.tensordot(tab.b, K, axes=1)
    y_low = x + np.tensordot(tab.b_hat, K, axes=1) if tab.has_embedded else None
    return y_high, y_low

def error_norm(y_high: np.ndarray, y_low: np.ndarray, y_prev: np.ndarray,
               ctrl: StepController) -> float:
    """
    RMS of (y_high - y_low) / (atol + rtol * max(|y_prev|, |y_high|)).

    A step is accepted when the norm is at most 1.
    """
    y_high = np.asarray(y_high, dtype=float)
    diff = np.abs(y_high - np.asarray(y_low, dtype=float))
    scale = ctrl.atol + ctrl.rtol * np.maximum(np.abs(np.asarray(y_prev, dtype=float)),
                                               np.abs(y_high))
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(diff == 0, 0.0, diff / scale)
    return float(np.sqrt(np.mean(ratio ** 2)))

def attempt_step(tab: ButcherTableau, system: SdeSystem, ctrl: StepController,
                 y: np.ndarray, t: float, node: IncrementNode) -> StepReport:
    """
    Take one step and decide whether it is accepted.

    Raises:
        IntegrationError: If the new state is not finite
    """
    y_high, y_low = rk_step(tab, system, y, t, node)
    if not np.all(np.isfinite(y_high)):
        raise IntegrationError(f"Non-finite state at t={t}, dt={node.dt}", t=t, dt=node.dt)
    if ctrl.fixed_step or y_low is None:
        err = 0.0
    else:
        err = error_norm(y_high, y_low, y, ctrl)
    return StepReport(t_new=node.t1, y_new=y_high, err=err, accepted=err <= 1.0,
                      dt_used=node.dt)

def integrate_path(system: SdeSystem, tab: ButcherTableau, ctrl: StepController,
                   stack: BrownianStack, rng: RngStream, y0: np.ndarray, t0: float,
                   T: float, record_steps: bool = False, k_start: Optional[int] = None,
                   verbose: bool = False) -> SolutionPath:
    """
    Integrate one trajectory over [t0, T].

    Rejected steps push their node back onto the stack and retry at half
    the length; the left half of the split is integrated next and the
    right half stays pending. An accepted step with error below
    safety * 2^-(q_sde + 1) lets the next step double.

    Args:
        system: SDE system
        tab: Tableau; needs embedded weights unless ctrl.fixed_step
        ctrl: Step controller
        stack: Brownian stack of the trajectory, positioned at t0
        rng: Stream of the trajectory
        y0: Initial state
        t0: Start time
        T: End time; T - t0 must be a multiple of ctrl.base_step
        record_steps: Keep every accepted state, not only grid points
        k_start: Level of the first attempted step (default ctrl.k_min)
        verbose: Print step statistics

    Returns:
        SolutionPath ending exactly at T

    Raises:
        ValueError: For inconsistent arguments
        IntegrationError: When rejections at one time exceed ctrl.max_rejects,
            the step would fall below base_step / 2^k_max, or the state
            becomes non-finite
    """
    H = ctrl.base_step
    if not T > t0:
        raise ValueError(f"End time {T} must exceed start time {t0}")
    chunks = int(round((T - t0) / H))
    if chunks < 1 or not np.isclose(chunks * H, T - t0, rtol=1e-12, atol=0):
        raise ValueError(f"T - t0 = {T - t0} is not a multiple of the base step {H}")
    if not tab.has_embedded and not ctrl.fixed_step:
        raise ValueError(f"Tableau '{tab.name}' has no embedded weights; use fixed-step mode")
    if stack.base_step != H:
        raise ValueError(f"Stack base step {stack.base_step} differs from controller base step {H}")
    stack_time = stack.pending[-1].t0 if stack.pending else stack.horizon
    if not np.isclose(stack_time, t0, rtol=1e-12, atol=1e-12):
        raise ValueError(f"Stack is positioned at {stack_time}, not at t0={t0}")

    y = np.array(y0, dtype=float)
    if y.shape != (system.n,):
        raise ValueError(f"Initial state has shape {y.shape}, expected ({system.n},)")
    path = SolutionPath(times=[t0], states=[y.copy()], checkpoint_times=[t0],
                        checkpoint_states=[y.copy()])

    grow_below = ctrl.safety * 2.0 ** -(tab.q_sde + 1)
    if ctrl.fixed_step:
        k = ctrl.fixed_level
    else:
        k = ctrl.k_min if k_start is None else min(max(k_start, ctrl.k_min), ctrl.k_max)
    t = t0
    chunks_done = 0
    rejects_here = 0
    while chunks_done < chunks:
        node = next_node(stack, rng, np.ldexp(H, -k))
        report = attempt_step(tab, system, ctrl, y, t, node)
        path.f_evaluations += tab.s

        if not report.accepted:
            push_back(stack, node)
            path.rejected += 1
            rejects_here += 1
            k = node.level + 1
            if rejects_here > ctrl.max_rejects or k > ctrl.k_max:
                raise IntegrationError(
                    f"Step rejected {rejects_here} times at t={t} (dt={node.dt}, "
                    f"err={report.err:.3e})", t=t, dt=node.dt, err=report.err)
            continue

        y = report.y_new
        if system.project is not None:
            y = np.asarray(system.project(y), dtype=float)
        rejects_here = 0
        path.accepted += 1
        path.max_level = max(path.max_level, node.level)
        if is_chunk_end(node):
            chunks_done += 1
            t = t0 + chunks_done * H
            path.checkpoint_times.append(t)
            path.checkpoint_states.append(y.copy())
        else:
            t = node.t1
        if record_steps:
            path.times.append(t)
            path.states.append(y.copy())
        if not ctrl.fixed_step:
            # next target relative to the accepted node, at most one doubling
            k = node.level
            if report.err < grow_below and k > ctrl.k_min:
                k -= 1

    path.final_level = k
    if not record_steps:
        path.times.append(t)
        path.states.append(y.copy())
    if verbose:
        print(f"{system.name}: t={t0}..{T}, accepted={path.accepted}, "
              f"rejected={path.rejected}, f evaluations={path.f_evaluations}, "
              f"finest level={path.max_level}")
    return path

def integrate_fixed(system: SdeSystem, tab: ButcherTableau, y0: np.ndarray, t0: float,
                    increments: np.ndarray, dt: float) -> np.ndarray:
    """
    Fixed-step integration of a batch of paths on given Wiener increments.

    Args:
        system: Vectorized SDE system (or any system for a single path)
        tab: Tableau; only the weights b are used
        y0: Initial states, shape (P, n) or (n,)
        t0: Start time
        increments: Wiener increments, shape (P, steps, m) or (steps, m)
        dt: Step size

    Returns:
        States at t0 + steps * dt with the shape of y0
    """
    y = np.array(y0, dtype=float)
    increments = np.asarray(increments, dtype=float)
    steps = increments.shape[-2]
    for i in range(steps):
        inc = IncrementInput(dt, increments[..., i, :])
        y, _ = rk_step(tab, system, y, t0 + i * dt, inc)
    return y
