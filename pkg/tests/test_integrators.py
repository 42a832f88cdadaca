import numpy as np
import pytest

from dfacs.dynamics import SatelliteParams, make_rhs
from dfacs.integrators import (
    IntegrationError,
    IntegratorConfig,
    integrate,
    integrate_fixed,
)


class TestConfig:
    def test_defaults(self):
        cfg = IntegratorConfig()
        assert cfg.rel_tol == 1e-10
        assert cfg.abs_tol == 1e-12
        assert cfg.output_dt == 0.1

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            IntegratorConfig(rel_tol=0.0)
        with pytest.raises(ValueError):
            IntegratorConfig(output_dt=-0.1)


class TestIntegrate:
    def test_constant_solution(self):
        f = lambda t, x: np.zeros_like(x)
        times, states = integrate(f, np.array([3.0, -1.0]), (0.0, 2.0))
        assert np.all(states == [3.0, -1.0])
        assert times[0] == 0.0 and times[-1] == 2.0

    def test_exponential_decay(self):
        f = lambda t, x: -x
        times, states = integrate(f, np.array([1.0]), (0.0, 1.0))
        assert abs(states[-1, 0] - np.exp(-1.0)) < 1e-8

    def test_output_grid_built_by_multiplication(self):
        f = lambda t, x: -x
        times, states = integrate(
            f, np.array([1.0]), (0.0, 5.0), IntegratorConfig(output_dt=0.1)
        )
        assert len(times) == 51
        assert np.array_equal(times, 0.0 + np.arange(51) * 0.1)

    def test_tolerance_halving_monotone_accuracy(self):
        f = lambda t, x: 2.0 * x
        errs = []
        for rtol in (1e-6, 1e-8, 1e-10):
            _, states = integrate(
                f,
                np.array([1.0]),
                (0.0, 1.0),
                IntegratorConfig(rel_tol=rtol, abs_tol=rtol * 1e-2, output_dt=1.0),
            )
            errs.append(abs(states[-1, 0] - np.exp(2.0)))
        assert errs[0] > errs[1] > errs[2]

    def test_deterministic(self):
        f = lambda t, x: np.array([np.sin(t) * x[0], -x[1]])
        a = integrate(f, np.array([1.0, 2.0]), (0.0, 3.0))[1]
        b = integrate(f, np.array([1.0, 2.0]), (0.0, 3.0))[1]
        assert np.array_equal(a, b)

    def test_input_schedule_forwarded(self):
        f = lambda t, x, u: u
        times, states = integrate(
            f,
            np.array([0.0]),
            (0.0, 1.0),
            IntegratorConfig(output_dt=0.5),
            u=lambda t: np.array([2.0]),
        )
        np.testing.assert_allclose(states[-1, 0], 2.0, rtol=1e-10)

    def test_blow_up_raises_with_last_valid_time(self):
        # x' = x^2 from x0=1 has a pole at t=1
        f = lambda t, x: x**2
        with pytest.raises(IntegrationError) as exc_info:
            integrate(f, np.array([1.0]), (0.0, 2.0))
        assert 0.9 < exc_info.value.last_valid_time <= 1.05
        assert np.all(np.isfinite(exc_info.value.last_state))

    def test_rejects_bad_span(self):
        with pytest.raises(ValueError):
            integrate(lambda t, x: -x, np.array([1.0]), (1.0, 0.0))

    def test_dense_output_accuracy_between_steps(self):
        # force large internal steps so samples rely on interpolation
        f = lambda t, x: np.array([np.cos(t)])
        cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12, output_dt=0.05)
        times, states = integrate(f, np.array([0.0]), (0.0, 3.0), cfg)
        np.testing.assert_allclose(states[:, 0], np.sin(times), atol=1e-9)


class TestFixedStep:
    def test_order_at_least_four(self):
        f = lambda t, x: -x
        exact = np.exp(-1.0)
        e1 = abs(integrate_fixed(f, np.array([1.0]), (0.0, 1.0), 0.1)[0] - exact)
        e2 = abs(integrate_fixed(f, np.array([1.0]), (0.0, 1.0), 0.05)[0] - exact)
        assert e1 / e2 >= 16.0

    def test_rejects_non_integer_span(self):
        with pytest.raises(ValueError):
            integrate_fixed(lambda t, x: -x, np.array([1.0]), (0.0, 1.0), 0.3)


class TestOnPlant:
    def test_zero_state_stays_zero(self):
        rhs = make_rhs(SatelliteParams())
        times, states = integrate(rhs, np.zeros(34), (0.0, 1.0))
        assert np.all(states == 0.0)

    def test_small_perturbation_stays_finite(self):
        rhs = make_rhs(SatelliteParams())
        x0 = np.zeros(34)
        x0[6] = 1e-8  # zeta_1 release
        times, states = integrate(rhs, x0, (0.0, 2.0))
        assert np.all(np.isfinite(states))
        # MOSA oscillation decays: |zeta| at the end below its start
        assert abs(states[-1, 6]) < 1e-8
