import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dfacs.dynamics import (
    DisturbanceModel,
    SatelliteParams,
    omega_big,
    plant_derivative,
    rotation_orf_to_srf,
    skew,
)
from dfacs.states import INPUT_BLOCKS, INPUT_DIM, STATE_BLOCKS, STATE_DIM, ControlInput, PlantState

E1, E2, E3 = np.eye(3)

finite_vec3 = arrays(
    np.float64, 3, elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
)


class TestSkew:
    def test_zero(self):
        assert np.array_equal(skew(np.zeros(3)), np.zeros((3, 3)))

    def test_basis_identity(self):
        assert np.array_equal(skew(E1) @ E2, E3)

    def test_matches_cross_product(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            v, w = rng.normal(size=3), rng.normal(size=3)
            np.testing.assert_allclose(skew(v) @ w, np.cross(v, w), rtol=0, atol=1e-15)

    @given(finite_vec3, finite_vec3)
    @settings(max_examples=50, deadline=None)
    def test_antisymmetry(self, v, w):
        np.testing.assert_allclose(skew(v) @ w + skew(w) @ v, 0.0, atol=1e-9)

    @given(finite_vec3)
    @settings(max_examples=50, deadline=None)
    def test_transpose_is_negative(self, v):
        assert np.array_equal(skew(v).T, -skew(v))


class TestOmegaBig:
    def test_zero(self):
        assert np.array_equal(omega_big(np.zeros(3), np.zeros(3)), np.zeros((3, 3)))

    def test_e3_squared(self):
        # skew(e3)^2 = diag(-1, -1, 0), hand-expanded
        np.testing.assert_allclose(
            omega_big(E3, np.zeros(3)), np.diag([-1.0, -1.0, 0.0]), atol=1e-15
        )

    def test_matches_independent_formula(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            x, xd = rng.normal(size=3), rng.normal(size=3)
            # independently coded: entry (a,b) of skew(xd) + skew(x)skew(x)
            expected = np.empty((3, 3))
            for a in range(3):
                for b in range(3):
                    sxd = np.cross(xd, np.eye(3)[b])[a]
                    sxx = np.cross(x, np.cross(x, np.eye(3)[b]))[a]
                    expected[a, b] = sxd + sxx
            np.testing.assert_allclose(omega_big(x, xd), expected, atol=1e-14)


class TestRotation:
    def setup_method(self):
        self.params = SatelliteParams()

    def test_identity_at_zero(self):
        params = SatelliteParams(gamma_nominal=np.zeros(2))
        for i in (1, 2):
            np.testing.assert_allclose(rotation_orf_to_srf(i, 0.0, params), np.eye(3))

    def test_orthonormal_unit_det(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            i = int(rng.integers(1, 3))
            r = rotation_orf_to_srf(i, rng.uniform(-np.pi, np.pi), self.params)
            assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-12
            assert abs(np.linalg.det(r) - 1.0) < 1e-12

    def test_closed_form_pi_over_6(self):
        params = SatelliteParams(gamma_nominal=np.array([np.pi / 6, np.pi / 6]))
        c, s = np.cos(np.pi / 6), np.sin(np.pi / 6)
        expected = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(rotation_orf_to_srf(1, 0.0, params), expected, atol=1e-15)
        # TM 2 rotates the opposite way
        np.testing.assert_allclose(rotation_orf_to_srf(2, 0.0, params), expected.T, atol=1e-15)

    def test_bad_index(self):
        with pytest.raises(ValueError):
            rotation_orf_to_srf(3, 0.0, self.params)


class TestParams:
    def test_defaults_match_reference_profile(self):
        p = SatelliteParams()
        assert p.m_s == 1500.0
        np.testing.assert_allclose(np.diag(p.j_s), [800.0, 800.0, 1000.0])
        np.testing.assert_allclose(p.m_m, [1.9369, 1.9369])
        np.testing.assert_allclose(p.j_m[0], np.eye(3) * 6.9e-4)
        np.testing.assert_allclose(p.omega_n, [72.76, 72.76])
        np.testing.assert_allclose(p.xi, [0.0323, 0.0323])
        np.testing.assert_allclose(p.b_s[0], [0.1074, 0.3216, 0.0])
        np.testing.assert_allclose(p.b_s[1], [0.1074, -0.3216, 0.0])
        np.testing.assert_allclose(p.b_m, [[0.25, 0.0, 0.0]] * 2)

    def test_rejects_bad_mass(self):
        with pytest.raises(ValueError):
            SatelliteParams(m_s=-1.0)

    def test_rejects_non_spd_inertia(self):
        with pytest.raises(ValueError):
            SatelliteParams(j_s=np.diag([1.0, -1.0, 1.0]))
        bad = np.eye(3)
        bad[0, 1] = 0.5  # asymmetric
        with pytest.raises(ValueError):
            SatelliteParams(j_s=bad)

    def test_rejects_bad_damping(self):
        with pytest.raises(ValueError):
            SatelliteParams(xi=np.array([1.5, 0.03]))

    def test_dict_round_trip(self):
        p = SatelliteParams()
        q = SatelliteParams.from_dict(p.to_dict())
        np.testing.assert_array_equal(p.j_s, q.j_s)
        np.testing.assert_array_equal(p.b_s, q.b_s)
        assert p.m_s == q.m_s


class TestStateTypes:
    def test_dimensions(self):
        assert PlantState().to_vector().shape == (STATE_DIM,)
        assert ControlInput().to_vector().shape == (INPUT_DIM,)
        assert STATE_DIM == 34
        assert INPUT_DIM == 20

    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=STATE_DIM)
        assert np.array_equal(PlantState.from_vector(x).to_vector(), x)
        u = rng.normal(size=INPUT_DIM)
        assert np.array_equal(ControlInput.from_vector(u).to_vector(), u)

    def test_rejects_non_finite(self):
        x = np.zeros(STATE_DIM)
        x[0] = np.nan
        with pytest.raises(ValueError):
            PlantState.from_vector(x)

    def test_block_layout_covers_vector(self):
        covered = np.zeros(STATE_DIM, dtype=int)
        for sl in STATE_BLOCKS.values():
            covered[sl] += 1
        assert np.all(covered == 1)
        covered = np.zeros(INPUT_DIM, dtype=int)
        for sl in INPUT_BLOCKS.values():
            covered[sl] += 1
        assert np.all(covered == 1)


class TestPlantDerivative:
    def setup_method(self):
        self.params = SatelliteParams()
        self.x0 = np.zeros(STATE_DIM)
        self.u0 = np.zeros(INPUT_DIM)

    def test_equilibrium_is_exact_zero(self):
        out = plant_derivative(self.x0, self.u0, self.params)
        assert np.all(out == 0.0)

    def test_deterministic_bit_identical(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=STATE_DIM) * 1e-6
        u = rng.normal(size=INPUT_DIM) * 1e-7
        a = plant_derivative(x, u, self.params)
        b = plant_derivative(x, u, self.params)
        assert np.array_equal(a, b)

    def test_thruster_torque_only(self):
        # zero state, M_T = (tau, 0, 0): omega_dot = J^-1 M_T exactly
        # (the MOSA reaction column is along e3 so the x-row is unaffected,
        # and zeta_ddot couples only through e3^T omega_dot = tau-free row).
        tau = 1e-6
        u = np.zeros(INPUT_DIM)
        u[0] = tau
        out = plant_derivative(self.x0, u, self.params)
        om_dot = out[3:6]
        np.testing.assert_allclose(om_dot, [tau / 800.0, 0.0, 0.0], rtol=1e-12, atol=1e-25)
        # zeta_ddot = -e3^T R^T om_dot = 0 since om_dot has no z component
        np.testing.assert_allclose(out[8:10], 0.0, atol=1e-25)
        # TM accelerations: -R_S_Oi (skew(om_dot) b_S) - skew(om_dot_OiI) b_M,
        # hand-evaluated (all velocity-quadratic terms vanish at zero state)
        for i in range(2):
            r_i = rotation_orf_to_srf(i + 1, 0.0, self.params)
            om_dot_oi = r_i.T @ om_dot
            expected = -r_i.T @ (np.cross(om_dot, self.params.b_s[i])) - np.cross(
                om_dot_oi, self.params.b_m[i]
            )
            base = 10 + 12 * i
            np.testing.assert_allclose(out[base + 3 : base + 6], expected, rtol=1e-12)
            # TM angular acceleration: -R_Oi_Mi om_dot_OiI with R = I at zero state
            np.testing.assert_allclose(out[base + 9 : base + 12], -om_dot_oi, rtol=1e-12)

    def test_mosa_damped_oscillator_closed_form(self):
        # With torques and couplings zero the hinge is a free damped
        # oscillator. A negligible MOSA inertia removes the reaction
        # coupling into the satellite (the term scales with I_zz).
        params = SatelliteParams(i_zz=np.array([1e-12, 1e-12]))
        c, c_dot = 3e-8, -2e-9
        x = np.zeros(STATE_DIM)
        x[6] = c
        x[8] = c_dot
        out = plant_derivative(x, self.u0, params)
        wn, xi = 72.76, 0.0323
        expected = -2.0 * wn * xi * c_dot - wn**2 * c
        np.testing.assert_allclose(out[8], expected, rtol=1e-9)
        assert abs(out[9]) < 1e-15

    def test_decoupled_when_coupling_inputs_zero(self):
        # with F_E = M_E = F_T = 0, the satellite block must not react to
        # TM position perturbations (bit-exact, not merely small)
        rng = np.random.default_rng(6)
        x = rng.normal(size=STATE_DIM) * 1e-7
        u = np.zeros(INPUT_DIM)
        u[0:3] = 1e-7
        u[18:20] = 1e-9
        base = plant_derivative(x, u, self.params)
        x_pert = x.copy()
        x_pert[10:13] += 1e-6
        pert = plant_derivative(x_pert, u, self.params)
        assert np.array_equal(base[0:10], pert[0:10])

    def test_rejects_wrong_shapes(self):
        with pytest.raises(ValueError):
            plant_derivative(np.zeros(10), self.u0, self.params)
        with pytest.raises(ValueError):
            plant_derivative(self.x0, np.zeros(3), self.params)

    def test_disturbance_model_default_zero(self):
        d = DisturbanceModel()
        out = plant_derivative(self.x0, self.u0, self.params, d)
        assert np.all(out == 0.0)

    def test_constant_disturbance_torque(self):
        d = DisturbanceModel(d_s_torque=np.array([1e-7, 0.0, 0.0]))
        out = plant_derivative(self.x0, self.u0, self.params, d)
        np.testing.assert_allclose(out[3], 1e-7 / 800.0, rtol=1e-12)

    def test_callable_disturbance(self):
        d = DisturbanceModel(d_s_torque=lambda t, x: np.array([t, 0.0, 0.0]))
        out = plant_derivative(self.x0, self.u0, self.params, d, t=2.0)
        np.testing.assert_allclose(out[3], 2.0 / 800.0, rtol=1e-12)
