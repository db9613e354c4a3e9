"""
SDE system definition and the effective Runge-Kutta right-hand side.

An Itô system dX^j = a^j dt + sum_k b^j_k dW^k is described by its drift a
and diffusion b. Runge-Kutta stages are evaluated on the effective increment

    f = (a - c) dt + sum_k b_k dW^k,    c^j = 1/2 sum_k sum_i b^i_k db^j_k/dX^i

where c is the Itô drift correction. Systems whose time derivative dX/dt is
known directly are registered in derivative form and skip the correction.

Complex systems are embedded as real vectors with the real part of component
p at position 2p and the imaginary part at 2p+1.

Classes:
    SdeSystem: Drift, diffusion and optional diffusion Jacobian of an SDE
    IncrementInput: Time increment and Wiener increments of one step
    SdeEvaluationError: Raised for invalid shapes or non-finite values

Functions:
    evaluate_drift: Drift with shape checking
    evaluate_diffusion: Diffusion with shape checking
    finite_difference_jacobian: Central difference diffusion Jacobian
    diffusion_jacobian: Analytic Jacobian or finite-difference fallback
    ito_drift_correction: The correction c
    derivative_drift: dX/dt
    effective_increment: The effective increment f
    complex_to_real, real_to_complex: Interleaved embedding of complex states
    complex_operator_to_real: Real matrix of a complex linear map

Dependencies:
    - numpy: Array arithmetic
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np

ITO = 'ito'
DERIVATIVE = 'derivative'

class SdeEvaluationError(ValueError):
    """Raised when a system evaluation has the wrong shape or is not finite."""

    def __init__(self, message: str, index: Optional[Tuple[int, ...]] = None):
        super().__init__(message)
        self.index = index

class IncrementInput(NamedTuple):
    """Time increment dt and the m Wiener increments dW over it."""
    dt: float
    dW: np.ndarray

@dataclass(frozen=True)
class SdeSystem:
    """
    An Itô SDE with n state components driven by m Wiener processes.

    Attributes:
        n: State dimension
        m: Number of Wiener processes (0 for an ODE)
        drift: Map (x, t) -> array of shape (n,)
        diffusion: Map (x, t) -> array of shape (n, m); may be None when m == 0
        diffusion_jacobian: Optional map (x, t) -> array of shape (n, m, n)
            with entry [j, k, i] = db^j_k/dX^i
        name: Label
        form: 'ito' when drift is the Itô drift a, 'derivative' when drift is
            already dX/dt and the correction must not be applied
        vectorized: If True, drift, diffusion and Jacobian accept states with
            leading batch axes and return matching leading axes
        project: Optional map applied to every accepted state
    """
    n: int
    m: int
    drift: Callable[[np.ndarray, float], np.ndarray]
    diffusion: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    diffusion_jacobian: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    name: str = 'sde'
    form: str = ITO
    vectorized: bool = False
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"State dimension must be at least 1, got {self.n}")
        if self.m < 0:
            raise ValueError(f"Wiener process count must be non-negative, got {self.m}")
        if self.form not in (ITO, DERIVATIVE):
            raise ValueError(f"form must be '{ITO}' or '{DERIVATIVE}', got '{self.form}'")
        if self.m > 0 and self.diffusion is None:
            raise ValueError(f"System '{self.name}' has m={self.m} but no diffusion")

def _batch_shape(system: SdeSystem, x: np.ndarray) -> Tuple[int, ...]:
    if x.shape[-1:] != (system.n,):
        raise SdeEvaluationError(
            f"State has shape {x.shape}, expected trailing dimension {system.n}")
    if x.ndim > 1 and not system.vectorized:
        raise SdeEvaluationError(
            f"System '{system.name}' is not vectorized but got state of shape {x.shape}")
    return x.shape[:-1]

def _first_nonfinite(values: np.ndarray, batch_ndim: int) -> Tuple[int, ...]:
    bad = np.argwhere(~np.isfinite(values))[0]
    return tuple(int(v) for v in bad[batch_ndim:])

def evaluate_drift(system: SdeSystem, x: np.ndarray, t: float) -> np.ndarray:
    """Evaluate the drift and check its shape."""
    x = np.asarray(x, dtype=float)
    batch = _batch_shape(system, x)
    a = np.asarray(system.drift(x, t), dtype=float)
    if a.shape != batch + (system.n,):
        raise SdeEvaluationError(
            f"Drift of '{system.name}' has shape {a.shape}, expected {batch + (system.n,)}")
    return a

def evaluate_diffusion(system: SdeSystem, x: np.ndarray, t: float) -> np.ndarray:
    """
    Evaluate the diffusion and check its shape.

    Args:
        system: SDE system
        x: State, shape (n,) or (..., n) for vectorized systems
        t: Time

    Returns:
        Array of shape (..., n, m); zeros of shape (..., n, 0) when m == 0

    Raises:
        SdeEvaluationError: If the shape is not (..., n, m)
    """
    x = np.asarray(x, dtype=float)
    batch = _batch_shape(system, x)
    if system.m == 0:
        return np.zeros(batch + (system.n, 0))
    b = np.asarray(system.diffusion(x, t), dtype=float)
    expected = batch + (system.n, system.m)
    if b.shape != expected:
        raise SdeEvaluationError(
            f"Diffusion of '{system.name}' has shape {b.shape}, expected {expected}")
    return b

def finite_difference_jacobian(system: SdeSystem, x: np.ndarray, t: float,
                               h: float = 1e-6) -> np.ndarray:
    """
    Central difference Jacobian of the diffusion.

    Component i is displaced by h * max(1, |x_i|).

    Args:
        system: SDE system
        x: State, shape (n,) or (..., n)
        t: Time
        h: Relative displacement

    Returns:
        Array of shape (..., n, m, n) with entry [j, k, i] = db^j_k/dX^i

    Raises:
        ValueError: If h is not positive
        SdeEvaluationError: If a displaced diffusion evaluation is not finite
    """
    if not h > 0:
        raise ValueError(f"Finite difference step must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    batch = _batch_shape(system, x)
    jac = np.zeros(batch + (system.n, system.m, system.n))
    if system.m == 0:
        return jac
    steps = h * np.maximum(1.0, np.abs(x))
    for i in range(system.n):
        xp = x.copy()
        xm = x.copy()
        xp[..., i] += steps[..., i]
        xm[..., i] -= steps[..., i]
        bp = evaluate_diffusion(system, xp, t)
        bm = evaluate_diffusion(system, xm, t)
        for values in (bp, bm):
            if not np.all(np.isfinite(values)):
                j, k = _first_nonfinite(values, len(batch))
                raise SdeEvaluationError(
                    f"Non-finite diffusion of '{system.name}' at displaced point "
                    f"(j={j}, k={k}, i={i})", index=(j, k, i))
        width = (xp[..., i] - xm[..., i])[..., None, None]
        jac[..., i] = (bp - bm) / width
    return jac

def diffusion_jacobian(system: SdeSystem, x: np.ndarray, t: float) -> np.ndarray:
    """
    Diffusion Jacobian, analytic when the system supplies one.

    Raises:
        SdeEvaluationError: If the shape is wrong or an entry is not finite
    """
    x = np.asarray(x, dtype=float)
    batch = _batch_shape(system, x)
    if system.diffusion_jacobian is None or system.m == 0:
        return finite_difference_jacobian(system, x, t)
    jac = np.asarray(system.diffusion_jacobian(x, t), dtype=float)
    expected = batch + (system.n, system.m, system.n)
    if jac.shape != expected:
        raise SdeEvaluationError(
            f"Jacobian of '{system.name}' has shape {jac.shape}, expected {expected}")
    if not np.all(np.isfinite(jac)):
        index = _first_nonfinite(jac, len(batch))
        raise SdeEvaluationError(
            f"Non-finite Jacobian entry of '{system.name}' at (j,k,i)={index}", index=index)
    return jac

def ito_drift_correction(system: SdeSystem, x: np.ndarray, t: float) -> np.ndarray:
    """
    Itô drift correction c^j = 1/2 sum_k sum_i b^i_k db^j_k/dX^i.

    Args:
        system: SDE system
        x: State
        t: Time

    Returns:
        Array with the shape of x; zeros when m == 0

    Raises:
        SdeEvaluationError: If the Jacobian has non-finite entries

    Example:
        For b(x) = 0.5 x at x = 2 the correction is 0.5 * 0.5**2 * 2 = 0.25.
    """
    x = np.asarray(x, dtype=float)
    if system.m == 0:
        return np.zeros_like(x)
    b = evaluate_diffusion(system, x, t)
    jac = diffusion_jacobian(system, x, t)
    return 0.5 * np.einsum('...ik,...jki->...j', b, jac)

def derivative_drift(system: SdeSystem, x: np.ndarray, t: float) -> np.ndarray:
    """Time derivative dX/dt: the corrected drift for Itô systems, the drift itself otherwise."""
    a = evaluate_drift(system, x, t)
    if system.form == DERIVATIVE or system.m == 0:
        return a
    return a - ito_drift_correction(system, x, t)

def effective_increment(system: SdeSystem, x: np.ndarray, t: float, inc) -> np.ndarray:
    """
    Effective increment f = (dX/dt) dt + sum_k b_k dW^k over a full step.

    The increment is evaluated with the full-step dt and dW whatever the
    stage; stages only shift x and t.

    Args:
        system: SDE system
        x: State, shape (n,) or (..., n)
        t: Time
        inc: Object with attributes dt and dW (IncrementInput or IncrementNode);
            dW has shape (m,) or (..., m)

    Returns:
        Array with the shape of x

    Raises:
        SdeEvaluationError: If dW has the wrong length or the result is not finite
    """
    x = np.asarray(x, dtype=float)
    drift_part = derivative_drift(system, x, t) * inc.dt
    if system.m == 0:
        f = drift_part
    else:
        dW = np.asarray(inc.dW, dtype=float)
        if dW.shape[-1:] != (system.m,):
            raise SdeEvaluationError(
                f"Wiener increment has shape {dW.shape}, expected trailing dimension {system.m}")
        b = evaluate_diffusion(system, x, t)
        f = drift_part + np.einsum('...jk,...k->...j', b, dW)
    if not np.all(np.isfinite(f)):
        index = _first_nonfinite(f, f.ndim - 1)
        raise SdeEvaluationError(
            f"Non-finite effective increment of '{system.name}' at t={t}, component {index[0]}",
            index=index)
    return f

def complex_to_real(psi: np.ndarray) -> np.ndarray:
    """Interleave real and imaginary parts: (..., n) complex -> (..., 2n) real."""
    psi = np.asarray(psi, dtype=complex)
    x = np.empty(psi.shape[:-1] + (2 * psi.shape[-1],))
    x[..., 0::2] = psi.real
    x[..., 1::2] = psi.imag
    return x

def real_to_complex(x: np.ndarray) -> np.ndarray:
    """Inverse of complex_to_real."""
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]

def complex_operator_to_real(op: np.ndarray) -> np.ndarray:
    """
    Real 2n x 2n matrix R with complex_to_real(op @ psi) == R @ complex_to_real(psi).
    """
    op = np.asarray(op, dtype=complex)
    rotation = np.array([[0.0, -1.0], [1.0, 0.0]])
    return np.kron(op.real, np.eye(2)) + np.kron(op.imag, rotation)
