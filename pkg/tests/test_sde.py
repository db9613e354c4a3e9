"""
This module provides test cases for the sde module.
"""

import numpy as np
import pytest

from stochrk.sde import (SdeSystem, IncrementInput, SdeEvaluationError, complex_operator_to_real,
                         complex_to_real, derivative_drift, diffusion_jacobian,
                         effective_increment, finite_difference_jacobian, ito_drift_correction,
                         real_to_complex, DERIVATIVE)

verbose = False

def gbm(mu: float, sigma: float) -> SdeSystem:
    return SdeSystem(n=1, m=1, drift=lambda x, t: mu * x,
                     diffusion=lambda x, t: sigma * x[:, None], name='gbm')

def constant_noise(rate: float = 1.0) -> SdeSystem:
    return SdeSystem(n=1, m=1, drift=lambda x, t: rate * x,
                     diffusion=lambda x, t: np.ones((1, 1)), name='additive')

def coupled_system() -> SdeSystem:
    """Two components, two Wiener processes, state dependent noise."""
    def drift(x, t):
        return np.array([-x[0] + x[1] ** 2, np.sin(x[0]) * (1 + t)])

    def diffusion(x, t):
        return np.array([[x[0] * x[1], 0.3],
                         [np.cos(x[1]), x[0] ** 2]])

    def jacobian(x, t):
        jac = np.zeros((2, 2, 2))
        jac[0, 0, 0] = x[1]
        jac[0, 0, 1] = x[0]
        jac[1, 0, 1] = -np.sin(x[1])
        jac[1, 1, 0] = 2 * x[0]
        return jac

    return SdeSystem(n=2, m=2, drift=drift, diffusion=diffusion,
                     diffusion_jacobian=jacobian, name='coupled')

class TestItoDriftCorrection:

    def test_gbm_correction(self):
        # 1/2 sigma^2 x with sigma = 0.5, x = 2
        correction = ito_drift_correction(gbm(0.0, 0.5), np.array([2.0]), 0.0)
        assert np.isclose(correction[0], 0.25, rtol=0, atol=1e-10)

    def test_constant_diffusion_has_no_correction(self):
        rng = np.random.default_rng(1)
        for x in rng.normal(size=(10, 1)) * 5:
            correction = ito_drift_correction(constant_noise(), x, 0.0)
            assert np.all(np.abs(correction) <= 1e-12)

    def test_no_noise(self):
        system = SdeSystem(n=3, m=0, drift=lambda x, t: -x)
        correction = ito_drift_correction(system, np.array([1.0, 2.0, 3.0]), 0.0)
        assert np.array_equal(correction, np.zeros(3))

    def test_analytic_and_finite_difference_jacobians_agree(self):
        system = coupled_system()
        rng = np.random.default_rng(2)
        for x in rng.normal(size=(20, 2)):
            analytic = diffusion_jacobian(system, x, 0.0)
            numeric = finite_difference_jacobian(system, x, 0.0)
            assert np.allclose(analytic, numeric, rtol=1e-6, atol=1e-8)

    def test_non_finite_jacobian_reports_index(self):
        def jacobian(x, t):
            jac = np.zeros((2, 2, 2))
            jac[1, 0, 1] = np.nan
            return jac
        system = SdeSystem(n=2, m=2, drift=lambda x, t: x,
                           diffusion=lambda x, t: np.eye(2), diffusion_jacobian=jacobian)
        with pytest.raises(SdeEvaluationError) as excinfo:
            ito_drift_correction(system, np.ones(2), 0.0)
        assert excinfo.value.index == (1, 0, 1)

class TestEffectiveIncrement:

    def test_pure_drift(self):
        system = SdeSystem(n=1, m=0, drift=lambda x, t: 1.0 * x)
        f = effective_increment(system, np.array([1.0]), 0.0, IncrementInput(0.1, np.zeros(0)))
        assert np.isclose(f[0], 0.1, rtol=1e-15)

    def test_gbm_increment(self):
        # (0 - 1/2) * 0.01 + 0.2
        f = effective_increment(gbm(0.0, 1.0), np.array([1.0]), 0.0,
                                IncrementInput(0.01, np.array([0.2])))
        assert np.isclose(f[0], 0.195, rtol=0, atol=1e-10)

    def test_zero_noise_with_constant_diffusion(self):
        system = constant_noise(rate=-0.7)
        x = np.array([1.3])
        f = effective_increment(system, x, 0.0, IncrementInput(0.1, np.zeros(1)))
        assert f[0] == -0.7 * 1.3 * 0.1

    def test_linear_in_increments(self):
        system = coupled_system()
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.normal(size=2)
            t = rng.uniform()
            dt = rng.uniform(0.001, 0.1)
            dW = rng.normal(size=2) * np.sqrt(dt)
            full = effective_increment(system, x, t, IncrementInput(dt, dW))
            drift_only = effective_increment(system, x, t, IncrementInput(dt, np.zeros(2)))
            noise_only = effective_increment(system, x, t, IncrementInput(0.0, dW))
            assert np.array_equal(full, drift_only + noise_only)

    def test_derivative_form_skips_correction(self):
        ito = gbm(0.3, 0.5)
        derivative = SdeSystem(n=1, m=1, drift=ito.drift, diffusion=ito.diffusion,
                               form=DERIVATIVE)
        x = np.array([2.0])
        assert np.array_equal(derivative_drift(derivative, x, 0.0), np.array([0.6]))
        assert np.isclose(derivative_drift(ito, x, 0.0)[0], 0.6 - 0.25, atol=1e-10)

    def test_wrong_increment_length(self):
        with pytest.raises(SdeEvaluationError, match="Wiener increment"):
            effective_increment(coupled_system(), np.ones(2), 0.0,
                                IncrementInput(0.1, np.zeros(3)))

    def test_non_finite_increment(self):
        system = SdeSystem(n=2, m=0, drift=lambda x, t: np.array([0.0, np.inf]))
        with pytest.raises(SdeEvaluationError) as excinfo:
            effective_increment(system, np.ones(2), 0.0, IncrementInput(0.1, np.zeros(0)))
        assert excinfo.value.index == (1,)

class TestFiniteDifferenceJacobian:

    def test_linear_diffusion(self):
        jac = finite_difference_jacobian(gbm(0.0, 1.0), np.array([1.0]), 0.0, h=1e-6)
        assert np.isclose(jac[0, 0, 0], 1.0, rtol=0, atol=1e-10)

    def test_constant_diffusion(self):
        jac = finite_difference_jacobian(constant_noise(), np.array([0.4]), 0.0)
        assert np.array_equal(jac, np.zeros((1, 1, 1)))

    def test_quadratic_diffusion(self):
        system = SdeSystem(n=1, m=1, drift=lambda x, t: 0 * x,
                           diffusion=lambda x, t: (x ** 2)[:, None])
        jac = finite_difference_jacobian(system, np.array([1.0]), 0.0, h=1e-5)
        assert np.isclose(jac[0, 0, 0], 2.0, rtol=0, atol=1e-9)

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            finite_difference_jacobian(gbm(0.0, 1.0), np.array([1.0]), 0.0, h=0.0)

    def test_non_finite_displaced_evaluation(self):
        system = SdeSystem(n=1, m=1, drift=lambda x, t: 0 * x,
                           diffusion=lambda x, t: np.array([[np.inf if x[0] < 0 else x[0]]]))
        with pytest.raises(SdeEvaluationError) as excinfo:
            finite_difference_jacobian(system, np.array([0.0]), 0.0)
        assert excinfo.value.index == (0, 0, 0)

class TestSystem:

    def test_invalid_dimensions(self):
        with pytest.raises(ValueError):
            SdeSystem(n=0, m=0, drift=lambda x, t: x)
        with pytest.raises(ValueError):
            SdeSystem(n=1, m=-1, drift=lambda x, t: x)
        with pytest.raises(ValueError, match="no diffusion"):
            SdeSystem(n=1, m=1, drift=lambda x, t: x)
        with pytest.raises(ValueError, match="form"):
            SdeSystem(n=1, m=0, drift=lambda x, t: x, form='stratonovich')

    def test_diffusion_shape_is_checked(self):
        system = SdeSystem(n=2, m=1, drift=lambda x, t: x, diffusion=lambda x, t: np.ones((2, 2)))
        with pytest.raises(SdeEvaluationError, match="shape"):
            effective_increment(system, np.ones(2), 0.0, IncrementInput(0.1, np.zeros(1)))

    def test_batched_state_needs_vectorized_system(self):
        with pytest.raises(SdeEvaluationError, match="not vectorized"):
            effective_increment(gbm(0.0, 1.0), np.ones((3, 1)), 0.0,
                                IncrementInput(0.1, np.zeros((3, 1))))

def test_complex_embedding():
    rng = np.random.default_rng(4)
    psi = rng.normal(size=5) + 1j * rng.normal(size=5)
    op = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    x = complex_to_real(psi)
    assert x[0] == psi[0].real and x[1] == psi[0].imag
    assert np.array_equal(real_to_complex(x), psi)
    assert np.allclose(complex_operator_to_real(op) @ x, complex_to_real(op @ psi))
