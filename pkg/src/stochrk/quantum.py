"""
Stochastic wave equations on a truncated oscillator basis and their master
equations.

Two open systems are provided, each as a stochastic wave equation driven by
real Wiener processes and as the Lindblad master equation obeyed by the
ensemble average of |psi><psi|:

    absorber: coherent drive 0.1(a^+ - a), two-photon loss L = sqrt(2) a^2
    cascade:  coherent drive -0.1i(a^+ + a), dephasing L1 = sqrt(2) a^+ a,
              weak loss L2 = 0.1 sqrt(2) a

The wave equations are available in derivative form (drift = dpsi/dt,
written out explicitly) and in Itô form (drift and diffusion of the
unravelling, with analytic diffusion Jacobians). Expectations
<Y> = <psi|Y|psi> are not normalized.

Classes:
    OscillatorBasis: Ladder operators of a truncated oscillator
    QsdDrift, QsdDiffusion, QsdJacobian: Itô-form coefficients
    AbsorberDerivativeDrift, CascadeDerivativeDrift: Derivative-form drifts
    Normalizer: Renormalization applied after accepted steps
    OccupationObservable, NormObservable: Ensemble observables
    MasterSystemDrift: Master equation as a real ODE right-hand side
    TraceDriftError: Raised when the master equation loses trace

Functions:
    absorber_system, cascade_system: SdeSystem builders
    master_rhs_absorber, master_rhs_cascade: Master equation right-hand sides
    integrate_master: Deterministic master equation integration
    occupation_number: <a^+ a> of a wavefunction or density matrix
    expectation: <psi|op|psi>
    fock_state, vacuum_state, vacuum_density: Initial states
    norm_drift: Largest |<psi|psi> - 1| in an ensemble
    run_example: Monte Carlo occupation number next to the master equation

Dependencies:
    - numpy: Complex linear algebra
    - pandas: Example result tables
"""

import warnings
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .brownian import BrownianStack, RngStream
from .constants import Constants
from .ensemble import Observable, run_ensemble
from .sde import (DERIVATIVE, ITO, SdeSystem, complex_to_real, real_to_complex)
from .stepper import StepController, integrate_path
from .tableau import ButcherTableau

ABSORBER = 'absorber'
CASCADE = 'cascade'
EXAMPLES = (ABSORBER, CASCADE)

class TraceDriftError(RuntimeError):
    """Raised when the master equation trace drifts beyond tolerance."""

class OscillatorBasis:
    """
    Lowest n_levels number states of a harmonic oscillator.

    Attributes:
        n_levels: Truncation
        a: Lowering operator, a[k-1, k] = sqrt(k)
        adag: Raising operator
        number: a^+ a
        identity: Identity matrix
    """

    def __init__(self, n_levels: int = 11):
        if n_levels < 2:
            raise ValueError(f"Oscillator basis needs at least 2 levels, got {n_levels}")
        self.n_levels = n_levels
        self.a = np.diag(np.sqrt(np.arange(1, n_levels)), k=1).astype(complex)
        self.adag = self.a.conj().T
        self.number = self.adag @ self.a
        self.identity = np.eye(n_levels, dtype=complex)

    def __repr__(self):
        return f"OscillatorBasis(n_levels={self.n_levels})"

@lru_cache(maxsize=None)
def oscillator_basis(n_levels: int) -> OscillatorBasis:
    return OscillatorBasis(n_levels)

def expectation(op: np.ndarray, psi: np.ndarray) -> complex:
    """<psi|op|psi> without normalization."""
    return np.vdot(psi, op @ psi)

def fock_state(n_levels: int, k: int) -> np.ndarray:
    """Number state |k> as complex amplitudes."""
    if not 0 <= k < n_levels:
        raise ValueError(f"Number state {k} outside basis of {n_levels} levels")
    psi = np.zeros(n_levels, dtype=complex)
    psi[k] = 1.0
    return psi

def vacuum_state(n_levels: int) -> np.ndarray:
    """|0> embedded as 2 * n_levels reals."""
    return complex_to_real(fock_state(n_levels, 0))

def vacuum_density(n_levels: int) -> np.ndarray:
    psi = fock_state(n_levels, 0)
    return np.outer(psi, psi.conj())

def _channels(name: str, basis: OscillatorBasis) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Coherent generator M (drift M psi) and Lindblad operators of an example."""
    a, adag = basis.a, basis.adag
    if name == ABSORBER:
        return 0.1 * (adag - a), [np.sqrt(2.0) * (a @ a)]
    if name == CASCADE:
        return -0.1j * (adag + a), [np.sqrt(2.0) * basis.number, 0.1 * np.sqrt(2.0) * a]
    raise KeyError(f"Unknown example '{name}'. Available: {', '.join(EXAMPLES)}")

class QsdDrift:
    """
    Itô drift M psi + sum_L (conj<L> L - L^+L/2 - |<L>|^2/2) psi.
    """

    def __init__(self, generator: np.ndarray, lindblads: Sequence[np.ndarray]):
        self.generator = generator
        self.lindblads = list(lindblads)
        self.dissipators = [L.conj().T @ L for L in self.lindblads]

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        psi = real_to_complex(x)
        dpsi = self.generator @ psi
        for L, LdL in zip(self.lindblads, self.dissipators):
            mean = expectation(L, psi)
            dpsi += np.conj(mean) * (L @ psi) - 0.5 * (LdL @ psi) - 0.5 * abs(mean) ** 2 * psi
        return complex_to_real(dpsi)

class QsdDiffusion:
    """Diffusion columns (L - <L>) psi."""

    def __init__(self, lindblads: Sequence[np.ndarray]):
        self.lindblads = list(lindblads)

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        psi = real_to_complex(x)
        columns = [complex_to_real(L @ psi - expectation(L, psi) * psi) for L in self.lindblads]
        return np.stack(columns, axis=-1)

class QsdJacobian:
    """
    Real Jacobian of the diffusion columns.

    The derivative of (L - <L>) psi along a complex direction v is
    (L - <L>) v - (<v|L|psi> + <psi|L|v>) psi, which is real-linear in v.
    """

    def __init__(self, lindblads: Sequence[np.ndarray]):
        self.lindblads = list(lindblads)

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        psi = real_to_complex(x)
        dim = len(x)
        # one complex direction per real coordinate, as rows
        directions = real_to_complex(np.eye(dim))
        blocks = []
        for L in self.lindblads:
            mean = expectation(L, psi)
            Lv = directions @ L.T
            overlap = directions.conj() @ (L @ psi) + Lv @ psi.conj()
            derivs = Lv - mean * directions - overlap[:, None] * psi[None, :]
            blocks.append(complex_to_real(derivs).T)
        return np.stack(blocks, axis=1)

class AbsorberDerivativeDrift:
    """
    dpsi/dt of the absorber with B = a^2 - <a^2>:

        0.1(a^+ - a) psi + 2 conj<a^2> a^2 psi - a^+2 a^2 psi - |<a^2>|^2 psi
        + (<a^4> - <a^2>^2) psi - B^2 psi + (<a^+2 a^2> - |<a^2>|^2) psi
    """

    def __init__(self, basis: OscillatorBasis):
        a, adag = basis.a, basis.adag
        self.drive = 0.1 * (adag - a)
        self.a2 = a @ a
        self.a4 = self.a2 @ self.a2
        self.a2dag_a2 = self.a2.conj().T @ self.a2

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        psi = real_to_complex(x)
        e2 = expectation(self.a2, psi)
        e4 = expectation(self.a4, psi)
        e22 = expectation(self.a2dag_a2, psi).real
        a2psi = self.a2 @ psi
        B_psi = a2psi - e2 * psi
        B2_psi = self.a2 @ B_psi - e2 * B_psi
        dpsi = (self.drive @ psi + 2 * np.conj(e2) * a2psi - self.a2dag_a2 @ psi
                - abs(e2) ** 2 * psi + (e4 - e2 ** 2) * psi - B2_psi
                + (e22 - abs(e2) ** 2) * psi)
        return complex_to_real(dpsi)

class CascadeDerivativeDrift:
    """
    dpsi/dt of the cascade with N = a^+ a:

        -0.1i(a^+ + a) psi + (2<N>N - N^2 - <N>^2) psi
        + 0.01(2<a^+> a - N - |<a>|^2) psi
        - (N - <N>)^2 psi + 2(<N^2> - <N>^2) psi
        - 0.01(a - <a>)^2 psi + 0.01(<N> - |<a>|^2) psi + 0.01(<a^2> - <a>^2) psi
    """

    def __init__(self, basis: OscillatorBasis):
        self.a = basis.a
        self.drive = -0.1j * (basis.adag + basis.a)
        self.N = basis.number
        self.N2 = self.N @ self.N
        self.a2 = self.a @ self.a

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        psi = real_to_complex(x)
        n1 = expectation(self.N, psi).real
        n2 = expectation(self.N2, psi).real
        ea = expectation(self.a, psi)
        ea2 = expectation(self.a2, psi)
        Npsi = self.N @ psi
        N2psi = self.N2 @ psi
        apsi = self.a @ psi
        shifted_N = Npsi - n1 * psi
        shifted_a = apsi - ea * psi
        dpsi = (self.drive @ psi
                + 2 * n1 * Npsi - N2psi - n1 ** 2 * psi
                + 0.01 * (2 * np.conj(ea) * apsi - Npsi - abs(ea) ** 2 * psi)
                - (self.N @ shifted_N - n1 * shifted_N) + 2 * (n2 - n1 ** 2) * psi
                - 0.01 * (self.a @ shifted_a - ea * shifted_a)
                + 0.01 * (n1 - abs(ea) ** 2) * psi + 0.01 * (ea2 - ea ** 2) * psi)
        return complex_to_real(dpsi)

class Normalizer:
    """Rescale an embedded wavefunction to unit norm."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x / np.linalg.norm(x)

def _wave_system(name: str, n_levels: int, form: str, renormalize: bool) -> SdeSystem:
    basis = oscillator_basis(n_levels)
    generator, lindblads = _channels(name, basis)
    if form == DERIVATIVE:
        drift = AbsorberDerivativeDrift(basis) if name == ABSORBER else CascadeDerivativeDrift(basis)
        jacobian = None
    elif form == ITO:
        drift = QsdDrift(generator, lindblads)
        jacobian = QsdJacobian(lindblads)
    else:
        raise ValueError(f"form must be '{ITO}' or '{DERIVATIVE}', got '{form}'")
    return SdeSystem(n=2 * n_levels, m=len(lindblads), drift=drift,
                     diffusion=QsdDiffusion(lindblads), diffusion_jacobian=jacobian,
                     name=f"{name}-{form}", form=form,
                     project=Normalizer() if renormalize else None)

def absorber_system(n_levels: int = 11, form: str = DERIVATIVE,
                    renormalize: bool = False) -> SdeSystem:
    """
    Stochastic wave equation of the nonlinear absorber, one Wiener process.

    Args:
        n_levels: Basis truncation, at least 2
        form: 'derivative' (drift is dpsi/dt) or 'ito' (drift of the
              unravelling, with analytic diffusion Jacobian)
        renormalize: Rescale psi to unit norm after every accepted step

    Returns:
        SdeSystem on 2 * n_levels reals
    """
    return _wave_system(ABSORBER, n_levels, form, renormalize)

def cascade_system(n_levels: int = 11, form: str = DERIVATIVE,
                   renormalize: bool = False) -> SdeSystem:
    """
    Stochastic wave equation of the quantum cascade, two Wiener processes.

    Args:
        n_levels: Basis truncation, at least 2
        form: 'derivative' or 'ito'
        renormalize: Rescale psi to unit norm after every accepted step

    Returns:
        SdeSystem on 2 * n_levels reals
    """
    return _wave_system(CASCADE, n_levels, form, renormalize)

def example_system(name: str, n_levels: int = 11, form: str = DERIVATIVE,
                   renormalize: bool = False) -> SdeSystem:
    """Wave equation system by example name."""
    if name not in EXAMPLES:
        raise KeyError(f"Unknown example '{name}'. Available: {', '.join(EXAMPLES)}")
    return _wave_system(name, n_levels, form, renormalize)

def _basis_for(rho: np.ndarray) -> OscillatorBasis:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"Density matrix must be square, got shape {rho.shape}")
    return oscillator_basis(rho.shape[0])

def master_rhs_absorber(rho: np.ndarray) -> np.ndarray:
    """
    drho/dt = 0.1[a^+ - a, rho] + 2 a^2 rho a^+2 - a^+2 a^2 rho - rho a^+2 a^2.
    """
    basis = _basis_for(rho)
    a2 = basis.a @ basis.a
    a2dag = a2.conj().T
    loss = a2dag @ a2
    drive = 0.1 * (basis.adag - basis.a)
    return (drive @ rho - rho @ drive + 2 * a2 @ rho @ a2dag
            - loss @ rho - rho @ loss)

def master_rhs_cascade(rho: np.ndarray) -> np.ndarray:
    """
    drho/dt = -0.1i[a^+ + a, rho] + 2 N rho N - N^2 rho - rho N^2
              + 0.02 a rho a^+ - 0.01 N rho - 0.01 rho N.
    """
    basis = _basis_for(rho)
    a, adag, N = basis.a, basis.adag, basis.number
    N2 = N @ N
    drive = adag + a
    return (-0.1j * (drive @ rho - rho @ drive) + 2 * N @ rho @ N - N2 @ rho - rho @ N2
            + 0.02 * a @ rho @ adag - 0.01 * N @ rho - 0.01 * rho @ N)

MASTER_RHS = {ABSORBER: master_rhs_absorber, CASCADE: master_rhs_cascade}

class MasterSystemDrift:
    """Master equation right-hand side on the embedded, flattened density matrix."""

    def __init__(self, rhs: Callable[[np.ndarray], np.ndarray], n_levels: int):
        self.rhs = rhs
        self.n_levels = n_levels

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        rho = real_to_complex(x).reshape(self.n_levels, self.n_levels)
        return complex_to_real(self.rhs(rho).ravel())

def integrate_master(rhs: Callable[[np.ndarray], np.ndarray], rho0: np.ndarray,
                     grid: Sequence[float], tab: ButcherTableau,
                     ctrl: Optional[StepController] = None,
                     verbose: bool = False) -> np.ndarray:
    """
    Integrate a master equation with the deterministic path of the stepper.

    Each grid interval is integrated separately and rho is replaced by
    (rho + rho^+)/2 at every grid time.

    Args:
        rhs: Map rho -> drho/dt
        rho0: Hermitian initial density matrix with unit trace
        grid: Output times, equally spaced
        tab: Tableau with embedded weights
        ctrl: Step controller; default rtol 1e-12, atol 1e-14 with the grid
              spacing as base step
        verbose: Print step statistics

    Returns:
        Array of shape (len(grid), n, n)

    Raises:
        ValueError: If rho0 is not Hermitian with unit trace or the grid is
            not equally spaced
        TraceDriftError: If the trace moves more than 1e-8 from 1
    """
    rho0 = np.asarray(rho0, dtype=complex)
    n = _basis_for(rho0).n_levels
    if not np.allclose(rho0, rho0.conj().T, rtol=0, atol=1e-12):
        raise ValueError("Initial density matrix is not Hermitian")
    if abs(np.trace(rho0) - 1) > 1e-10:
        raise ValueError(f"Initial density matrix has trace {np.trace(rho0).real}, expected 1")
    grid = np.asarray(grid, dtype=float)
    spacing = np.diff(grid)
    if len(grid) < 2 or np.any(spacing <= 0) or not np.allclose(spacing, spacing[0], rtol=1e-9):
        raise ValueError("Master equation grid must be increasing and equally spaced")
    H = float(spacing[0])
    if ctrl is None:
        ctrl = StepController(rtol=1e-12, atol=1e-14, base_step=H)
    elif not np.isclose(ctrl.base_step, H, rtol=1e-12):
        raise ValueError(f"Controller base step {ctrl.base_step} differs from grid spacing {H}")

    system = SdeSystem(n=2 * n * n, m=0, drift=MasterSystemDrift(rhs, n), name='master')
    rng = RngStream(0)
    out = np.empty((len(grid), n, n), dtype=complex)
    out[0] = rho0
    rho = rho0
    level = None
    for i in range(1, len(grid)):
        t_start = grid[0] + (i - 1) * H
        stack = BrownianStack(m=0, base_step=H, t0=t_start, k_max=ctrl.k_max)
        path = integrate_path(system, tab, ctrl, stack, rng, complex_to_real(rho.ravel()),
                              t_start, t_start + H, k_start=level)
        level = path.final_level
        rho = real_to_complex(path.y_final).reshape(n, n)
        rho = 0.5 * (rho + rho.conj().T)
        drift = abs(np.trace(rho) - 1)
        if drift > Constants.TRACE_DRIFT_TOL:
            raise TraceDriftError(f"Trace drifted by {drift:.3e} at t={grid[i]}")
        out[i] = rho
        if verbose:
            print(f"t={grid[i]:.6g}: trace defect {drift:.3e}, "
                  f"{path.accepted} accepted / {path.rejected} rejected steps")
    return out

def occupation_number(state: np.ndarray) -> float:
    """
    Mean occupation <a^+ a>.

    Args:
        state: Density matrix (n x n), complex amplitudes (n,) or an embedded
               wavefunction (2n reals)

    Returns:
        Tr(a^+ a rho) or <psi|a^+ a|psi> (not normalized)
    """
    state = np.asarray(state)
    if state.ndim == 2:
        basis = _basis_for(state)
        return float(np.trace(basis.number @ state).real)
    if np.iscomplexobj(state):
        psi = state
    else:
        psi = real_to_complex(state)
    levels = np.arange(len(psi))
    return float(np.sum(levels * np.abs(psi) ** 2))

class OccupationObservable(Observable):
    """<psi|a^+ a|psi> of an embedded wavefunction."""

    def __init__(self, name: str = 'n'):
        super().__init__(name)

    def __call__(self, state: np.ndarray) -> float:
        return occupation_number(state)

class NormObservable(Observable):
    """<psi|psi> of an embedded wavefunction."""

    def __init__(self, name: str = 'norm'):
        super().__init__(name)

    def __call__(self, state: np.ndarray) -> float:
        return float(np.dot(state, state))

def norm_drift(values: np.ndarray, tolerance: float = Constants.NORM_DRIFT_WARN) -> float:
    """
    Largest |<psi|psi> - 1| over trajectories and grid times.

    Warns when the drift exceeds the tolerance.

    Args:
        values: Norm observable values of any shape
        tolerance: Warning threshold
    """
    drift = float(np.max(np.abs(np.asarray(values) - 1.0)))
    if drift > tolerance:
        warnings.warn(f"Wavefunction norm drifted by {drift:.3e} (tolerance {tolerance:.1e})")
    return drift

def run_example(name: str, n_levels: int, horizon: float, chunks: int,
                tab: ButcherTableau, ctrl: StepController, trajectories: int,
                master_seed: int, workers: int = 1, renormalize: bool = False,
                oracle_tableau: Optional[ButcherTableau] = None,
                verbose: bool = False) -> pd.DataFrame:
    """
    Monte Carlo occupation number of an example next to its master equation.

    Trajectories start in the vacuum; the grid is every base grid point of
    [0, horizon].

    Args:
        name: 'absorber' or 'cascade'
        n_levels: Basis truncation
        horizon: End time
        chunks: Number of base steps
        tab: Tableau for the trajectories
        ctrl: Step controller with base_step horizon / chunks
        trajectories: Ensemble size
        master_seed: Master seed
        workers: Worker processes
        renormalize: Renormalize wavefunctions after accepted steps
        oracle_tableau: Tableau for the master equation (default: tab)
        verbose: Print progress

    Returns:
        DataFrame indexed by t with columns n_mc, n_se, n_oracle, norm_mc
    """
    if name not in EXAMPLES:
        raise KeyError(f"Unknown example '{name}'. Available: {', '.join(EXAMPLES)}")
    grid = np.arange(chunks + 1) * (horizon / chunks)
    system = example_system(name, n_levels, DERIVATIVE, renormalize)
    observables = [OccupationObservable(), NormObservable()]
    result = run_ensemble(system, tab, ctrl, observables, grid, trajectories, master_seed,
                          vacuum_state(n_levels), workers=workers, verbose=verbose)
    norm_drift(result.values[:, :, 1])

    oracle_tab = oracle_tableau if oracle_tableau is not None else tab
    oracle_ctrl = StepController(rtol=1e-12, atol=1e-14, base_step=ctrl.base_step,
                                 k_max=ctrl.k_max)
    rhos = integrate_master(MASTER_RHS[name], vacuum_density(n_levels), grid, oracle_tab,
                            oracle_ctrl, verbose=verbose)
    frame = pd.DataFrame({
        Constants.N_MC_COL: result.mean['n'].to_numpy(),
        Constants.N_SE_COL: result.standard_error['n'].to_numpy(),
        Constants.N_ORACLE_COL: [occupation_number(rho) for rho in rhos],
        Constants.NORM_MC_COL: result.mean['norm'].to_numpy(),
    }, index=pd.Index(grid, name=Constants.TIME_COL))
    return frame
