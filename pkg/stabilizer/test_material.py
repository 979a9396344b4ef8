import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from .config import CurveConfig, MaterialConfig
from .material import (
    BergstromParams,
    DrxParams,
    bergstrom_stress,
    curve_parameters,
    drx_stress,
    feedback_gains,
    kappa_for_rate,
    linearize_plastic,
    physical_to_riemann,
    proportional_sensitivity,
    rate_estimate,
    riemann_to_physical,
    riemann_transform,
    sensitivity_from_config,
    stress_strain_curve,
)

HOT_WORKING = dict(
    U0=1.273e11, temperature=1273.0, omega0=5.0, C=85.0, m=0.1, Q=3e5, R=8.314,
    strain_rate=1.0, sigma0=20.0, alpha=0.5, G=8e4, b=2.5e-10, rho_init=1e12,
)
HOT_WORKING_CURVE = dict(
    u0=1.273e11, temperature=1273.0, omega0=5.0, recovery_c=85.0, rate_sensitivity=0.1,
    activation_energy=3e5, gas_constant=8.314, strain_rate=1.0, sigma0=20.0, alpha=0.5,
    shear_modulus=8e4, burgers_vector=2.5e-10, rho_init=1e12, strain_end=1.0, strain_points=1001,
)


def closed_form_stress(strain, params):
    """sqrt(rho) obeys a linear equation: d sqrt(rho)/d strain = (hardening - recovery sqrt(rho)) / 2"""
    steady = params.hardening / params.recovery
    root = steady + (math.sqrt(params.rho_init) - steady) * np.exp(-0.5 * params.recovery * strain)
    return params.sigma0 + params.alpha * params.G * params.b * root


class BergstromTest(SimpleTestCase):
    def setUp(self):
        self.params = BergstromParams(**HOT_WORKING)
        self.strain = np.linspace(0.0, 1.0, 1001)

    def test_rates(self):
        self.assertAlmostEqual(self.params.hardening, 1e8, delta=1.0)
        self.assertAlmostEqual(self.params.recovery, 10.0, delta=0.05)

    def test_matches_closed_form(self):
        stress = bergstrom_stress(self.strain, self.params)
        np.testing.assert_allclose(stress, closed_form_stress(self.strain, self.params), rtol=1e-6)

    def test_monotone_towards_saturation(self):
        stress = bergstrom_stress(self.strain, self.params)
        self.assertAlmostEqual(stress[0], 30.0, places=10)
        self.assertTrue(np.all(np.diff(stress) > 0))
        saturation = self.params.sigma0 + self.params.alpha * self.params.G * self.params.b * self.params.hardening / self.params.recovery
        self.assertLess(stress[-1], saturation)
        self.assertGreater(stress[-1], 119.0)

    def test_invalid_grid(self):
        with self.assertRaises(ValidationError):
            bergstrom_stress(np.array([0.1, 0.2]), self.params)
        with self.assertRaises(ValidationError):
            bergstrom_stress(np.array([0.0, 0.2, 0.2]), self.params)

    def test_non_positive_parameter(self):
        with self.assertRaises(ValidationError):
            BergstromParams(**dict(HOT_WORKING, temperature=0.0))


class DrxTest(SimpleTestCase):
    def setUp(self):
        self.base = BergstromParams(**HOT_WORKING)
        self.params = DrxParams(base=self.base, critical_strain=0.3, saturation_strain=0.8, kappa=3.0, q=2.0)
        self.strain = np.linspace(0.0, 1.5, 1501)

    def test_fraction(self):
        fraction = self.params.fraction(self.strain)
        self.assertTrue(np.all(fraction[self.strain <= 0.3] == 0))
        self.assertTrue(np.all(np.diff(fraction) >= 0))
        self.assertAlmostEqual(float(self.params.fraction(0.8)), 1.0 - math.exp(-3.0), places=12)

    def test_softening_after_critical_strain(self):
        base = bergstrom_stress(self.strain, self.base)
        stress = drx_stress(self.strain, self.params)
        before = self.strain <= 0.3
        np.testing.assert_array_equal(stress[before], base[before])
        self.assertTrue(np.all(stress <= base + 1e-12))
        self.assertLess(stress[-1], base[-1] - 1.0)

    def test_critical_strain_outside_grid(self):
        with self.assertRaises(ValidationError):
            drx_stress(np.linspace(0.0, 0.2, 21), self.params)

    def test_saturation_below_critical(self):
        with self.assertRaises(ValidationError):
            DrxParams(base=self.base, critical_strain=0.5, saturation_strain=0.4, kappa=1.0, q=1.0)


class LinearizationTest(SimpleTestCase):
    def test_proportional(self):
        self.assertAlmostEqual(linearize_plastic(70.0, relation=proportional_sensitivity(0.02)), 1.4)

    def test_linear_curve(self):
        strain = np.linspace(0.0, 1.0, 11)
        stress = 30.0 + 100.0 * strain
        self.assertAlmostEqual(linearize_plastic(70.0, strain=strain, stress=stress), 0.01, places=12)
        self.assertAlmostEqual(linearize_plastic(70.0, strain=strain, stress=stress, elastic_modulus=50.0), -0.01, places=12)

    def test_first_increasing_branch_only(self):
        strain = np.linspace(0.0, 2.0, 21)
        stress = 100.0 - 50.0 * (strain - 1.0) ** 2
        self.assertGreater(linearize_plastic(80.0, strain=strain, stress=stress), 0)
        with self.assertRaises(ValidationError):
            linearize_plastic(120.0, strain=strain, stress=stress)

    def test_outside_curve(self):
        strain = np.linspace(0.0, 1.0, 11)
        with self.assertRaises(ValidationError):
            linearize_plastic(10.0, strain=strain, stress=30.0 + 100.0 * strain)

    def test_needs_a_source(self):
        with self.assertRaises(ValidationError):
            linearize_plastic(70.0)

    def test_bergstrom_inverse_slope(self):
        """At 70 MPa the sensitivity is the inverse of the hardening slope d sigma / d strain"""
        params = BergstromParams(**HOT_WORKING)
        strain = np.linspace(0.0, 1.0, 1001)
        sensitivity = linearize_plastic(70.0, strain=strain, stress=bergstrom_stress(strain, params))
        root = (70.0 - params.sigma0) / (params.alpha * params.G * params.b)
        slope = 0.5 * params.alpha * params.G * params.b * (params.hardening - params.recovery * root)
        self.assertAlmostEqual(sensitivity, 1.0 / slope, delta=2e-5)
        self.assertGreater(sensitivity, 0)

    def test_elastic_part_is_opt_in(self):
        curve = CurveConfig(**HOT_WORKING_CURVE)
        plain = MaterialConfig(desired_stress=70.0, sensitivity='bergstrom', curve=curve)
        corrected = MaterialConfig(desired_stress=70.0, sensitivity='bergstrom', curve=curve, subtract_elastic=True)
        value, (strain, stress) = sensitivity_from_config(plain)
        self.assertEqual(value, linearize_plastic(70.0, strain=strain, stress=stress))
        self.assertGreater(value, 0)
        self.assertAlmostEqual(sensitivity_from_config(corrected)[0], value - 0.01, places=12)

    def test_curve_config(self):
        curve = CurveConfig(**dict(HOT_WORKING_CURVE, strain_points=101))
        self.assertIsInstance(curve_parameters(curve), BergstromParams)
        strain, stress = stress_strain_curve(curve)
        self.assertEqual(len(strain), 101)
        self.assertAlmostEqual(stress[0], 30.0, places=10)

        drx = CurveConfig(**dict(curve.__dict__, critical_strain=0.3, saturation_strain=0.8, drx_kappa=3.0, drx_q=2.0))
        self.assertIsInstance(curve_parameters(drx), DrxParams)


class RiemannTest(SimpleTestCase):
    def test_diagonalizes_elastic_operator(self):
        system = riemann_transform(100.0, [0.2, -0.4])
        np.testing.assert_allclose(system.T @ system.T_inverse, np.eye(2), atol=1e-15)
        np.testing.assert_allclose(system.T_inverse @ system.A @ system.T, system.Lambda, atol=1e-12)
        np.testing.assert_allclose(system.Lambda, np.diag([10.0, -10.0]))
        np.testing.assert_allclose(system.C[1], 0.2 * np.ones((2, 2)))
        self.assertEqual(system.C.shape, (2, 2, 2))

    def test_coordinate_maps(self):
        velocity, stress = np.array([0.3, -1.0]), np.array([2.0, 5.0])
        plus, minus = physical_to_riemann(25.0, velocity, stress)
        np.testing.assert_allclose(plus, 0.5 * (stress / 5.0 - velocity))
        back = riemann_to_physical(25.0, plus, minus)
        np.testing.assert_allclose(back[0], velocity, atol=1e-15)
        np.testing.assert_allclose(back[1], stress, atol=1e-14)

    def test_rejects_non_positive_modulus(self):
        with self.assertRaises(ValidationError):
            riemann_transform(0.0, 0.1)


class FeedbackTest(SimpleTestCase):
    def test_gains(self):
        gains = feedback_gains(0.9, 0.5, 100.0)
        np.testing.assert_array_equal(gains.B, [[0.0, 0.9], [0.5, 0.0]])
        self.assertAlmostEqual(gains.B_y[0, 0], 0.1 / 19.0, places=15)
        self.assertAlmostEqual(gains.B_y[1, 1], -0.5 / 15.0, places=15)

    def test_physical_law_reproduces_riemann_law(self):
        """R+ = k0 R- at the left end and R- = k1 R+ at the right end"""
        E, k0, k1 = 64.0, 0.7, 0.4
        gains = feedback_gains(k0, k1, E)
        v0, s0 = riemann_to_physical(E, k0 * 1.3, 1.3)
        vL, sL = riemann_to_physical(E, -0.6, k1 * -0.6)
        left, right = gains.boundary_velocity(float(s0), float(sL))
        self.assertAlmostEqual(left, float(v0), places=14)
        self.assertAlmostEqual(right, float(vL), places=14)

    def test_desired_state_offsets(self):
        gains = feedback_gains(0.9, 0.9, 100.0)
        left, right = gains.boundary_velocity(72.0, 70.0, 70.0, 70.0, 1.0, 2.0)
        self.assertAlmostEqual(left, 1.0 + 2.0 * gains.B_y[0, 0])
        self.assertEqual(right, 2.0)

    def test_singular_gain(self):
        with self.assertRaises(ValidationError):
            feedback_gains(-1.0, 0.5, 100.0)
        with self.assertRaises(ValidationError):
            feedback_gains(0.5, -1.0, 100.0)


class KappaTest(SimpleTestCase):
    def test_growing_gain_violates_dissipativity(self):
        choice = kappa_for_rate(1.4, 100.0, 1.0)
        self.assertAlmostEqual(choice.mu_hat, 2.8)
        self.assertAlmostEqual(choice.kappa_growing, math.exp(0.14), places=14)
        self.assertAlmostEqual(choice.growing_product, math.exp(0.28), places=12)
        self.assertFalse(choice.growing_passes)
        self.assertIn('FAIL', choice.as_text())

    def test_decaying_gain_meets_condition_with_equality(self):
        choice = kappa_for_rate(-0.6, 100.0, 2.0)
        self.assertAlmostEqual(choice.kappa_corrected, math.exp(-0.12), places=14)
        self.assertAlmostEqual(choice.corrected_product, 1.0, delta=1e-12)
        self.assertTrue(choice.corrected_passes)
        self.assertAlmostEqual(choice.corrected_slope, math.tanh(0.06) / 10.0, places=14)
        self.assertAlmostEqual(choice.coth_slope, 1.0 / (10.0 * math.tanh(0.12)), places=12)


class RateEstimateTest(SimpleTestCase):
    def test_no_source(self):
        self.assertAlmostEqual(rate_estimate(0.0, 0.5, 100.0, 1.0), 0.5)

    def test_no_rate_ansatz(self):
        self.assertAlmostEqual(rate_estimate(0.3, 0.0, 100.0, 1.0), -0.6)

    def test_source_lowers_estimate(self):
        self.assertLess(rate_estimate(0.1, 0.5, 100.0, 1.0), 0.5)
