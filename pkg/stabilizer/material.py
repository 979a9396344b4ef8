"""
Viscoplastic material: Bergstrom and dynamic recrystallization stress-strain
curves, the linearized plastic sensitivity, the Riemann diagonalization of
the linearized elastic-viscoplastic system and its boundary feedback law.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from django.core.exceptions import ValidationError

from .exceptions import NumericalError
from .lyapunov import dissipativity_check

logger = logging.getLogger(__name__)


def _require_positive(**values):
    for name, value in values.items():
        if value is None or not value > 0:
            raise ValidationError(f"{name} must be strictly positive, got {value}")


@dataclass(frozen=True)
class BergstromParams:
    U0: float
    temperature: float
    omega0: float
    C: float
    m: float
    Q: float
    R: float
    strain_rate: float
    sigma0: float
    alpha: float
    G: float
    b: float
    rho_init: float

    def __post_init__(self):
        _require_positive(**{name: getattr(self, name) for name in self.__dataclass_fields__})

    @property
    def hardening(self) -> float:
        return self.strain_rate * self.U0 / self.temperature

    @property
    def recovery(self) -> float:
        return self.omega0 + self.C * np.exp(-self.m * self.Q / (self.R * self.temperature)) * self.strain_rate ** (-self.m)

    def stress(self, rho: np.ndarray) -> np.ndarray:
        return self.sigma0 + self.alpha * self.G * self.b * np.sqrt(rho)


@dataclass(frozen=True)
class DrxParams:
    base: BergstromParams
    critical_strain: float
    saturation_strain: float
    kappa: float
    q: float

    def __post_init__(self):
        _require_positive(critical_strain=self.critical_strain, kappa=self.kappa, q=self.q)
        if not self.saturation_strain > self.critical_strain:
            raise ValidationError(
                f"Saturation strain {self.saturation_strain} must exceed the critical strain {self.critical_strain}"
            )

    def fraction(self, strain: np.ndarray) -> np.ndarray:
        """Recrystallized volume fraction X"""
        u = np.clip((np.asarray(strain, dtype=float) - self.critical_strain) / (self.saturation_strain - self.critical_strain), 0.0, None)
        return 1.0 - np.exp(-self.kappa * u ** self.q)


def _density_rate(params: BergstromParams, rho: float) -> float:
    if not rho > 0:
        raise NumericalError(f"Dislocation density reached {rho}", rho=rho)
    return params.hardening * np.sqrt(rho) - params.recovery * rho


def bergstrom_stress(strain: np.ndarray, params: BergstromParams, substeps: int = 1) -> np.ndarray:
    """Integrate the dislocation density with classical RK4 on the strain grid"""
    strain = np.asarray(strain, dtype=float)
    if strain.ndim != 1 or len(strain) == 0:
        raise ValidationError("Strain grid must be a non-empty one-dimensional array")
    if strain[0] != 0 or np.any(np.diff(strain) <= 0):
        raise ValidationError("Strain grid must start at 0 and increase strictly")

    rho = np.empty_like(strain)
    rho[0] = params.rho_init
    for i in range(1, len(strain)):
        h = (strain[i] - strain[i - 1]) / substeps
        value = rho[i - 1]
        for _ in range(substeps):
            k1 = _density_rate(params, value)
            k2 = _density_rate(params, value + 0.5 * h * k1)
            k3 = _density_rate(params, value + 0.5 * h * k2)
            k4 = _density_rate(params, value + h * k3)
            value = value + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not value > 0:
            raise NumericalError(f"Dislocation density became non-positive at strain {strain[i]:.6g}", index=i)
        rho[i] = value
    return params.stress(rho)


def drx_stress(strain: np.ndarray, params: DrxParams, substeps: int = 1) -> np.ndarray:
    strain = np.asarray(strain, dtype=float)
    base = bergstrom_stress(strain, params.base, substeps)
    critical = params.critical_strain
    if critical < strain[0] or critical > strain[-1]:
        raise ValidationError(f"Critical strain {critical} lies outside the strain grid [{strain[0]}, {strain[-1]}]")

    stress = base.copy()
    beyond = np.flatnonzero(strain > critical)
    if beyond.size == 0:
        return stress

    sigma_critical = float(np.interp(critical, strain, base))
    # accumulate int X'(s) sigma(s - eps_c) ds as a Stieltjes sum over X
    points = np.concatenate([[critical], strain[beyond]])
    fraction = params.fraction(points)
    shifted = np.interp(points - critical, strain, base)
    increments = 0.5 * (shifted[1:] + shifted[:-1]) * np.diff(fraction)
    accumulated = np.cumsum(increments)
    stress[beyond] = sigma_critical * (1.0 - fraction[1:]) + accumulated
    return stress


def proportional_sensitivity(factor: float) -> Callable[[float], float]:
    def relation(sigma_star: float) -> float:
        return factor * sigma_star
    return relation


def linearize_plastic(
    sigma_star: float,
    relation: Optional[Callable[[float], float]] = None,
    strain: Optional[np.ndarray] = None,
    stress: Optional[np.ndarray] = None,
    elastic_modulus: Optional[float] = None,
) -> float:
    """
    Plastic sensitivity at sigma_star, from an analytic relation or by the
    central difference slope of strain as a function of stress along the
    first strictly increasing branch of a curve. With an elastic modulus the
    elastic part sigma/E is removed.
    """
    if relation is not None:
        return float(relation(sigma_star))
    if strain is None or stress is None:
        raise ValidationError("Either a sensitivity relation or a stress-strain curve is required")

    strain = np.asarray(strain, dtype=float)
    stress = np.asarray(stress, dtype=float)
    rising = np.diff(stress) > 0
    end = len(stress) if rising.all() else int(np.argmin(rising)) + 1
    if end < 2:
        raise ValidationError("Stress-strain curve has no strictly increasing branch")
    branch_stress, branch_strain = stress[:end], strain[:end]

    low, high = branch_stress[0], branch_stress[-1]
    if not low < sigma_star < high:
        raise ValidationError(f"Desired stress {sigma_star} is outside the increasing branch [{low:.6g}, {high:.6g}]")

    step = 1e-3 * min(sigma_star - low, high - sigma_star)
    above = np.interp(sigma_star + step, branch_stress, branch_strain)
    below = np.interp(sigma_star - step, branch_stress, branch_strain)
    slope = (above - below) / (2.0 * step)
    if elastic_modulus is not None:
        slope -= 1.0 / elastic_modulus
    return float(slope)


@dataclass(frozen=True)
class ViscoplasticSystem:
    E: float
    sensitivity: np.ndarray
    T: np.ndarray
    T_inverse: np.ndarray
    Lambda: np.ndarray
    C: np.ndarray  # (cells, 2, 2)

    @property
    def A(self) -> np.ndarray:
        return np.array([[0.0, -1.0], [-self.E, 0.0]])


def riemann_transform(E: float, sensitivity) -> ViscoplasticSystem:
    _require_positive(E=E)
    root = np.sqrt(E)
    T = np.array([[-1.0, 1.0], [root, root]])
    T_inverse = np.array([[-0.5, 0.5 / root], [0.5, 0.5 / root]])
    Lambda = np.diag([root, -root])
    sensitivity = np.atleast_1d(np.asarray(sensitivity, dtype=float))
    C = -(sensitivity / 2.0)[:, None, None] * np.ones((2, 2))
    return ViscoplasticSystem(E=E, sensitivity=sensitivity, T=T, T_inverse=T_inverse, Lambda=Lambda, C=C)


def physical_to_riemann(E: float, velocity, stress) -> Tuple[np.ndarray, np.ndarray]:
    """R = T^-1 (dv, dsigma) = ((dsigma/sqrt(E) - dv)/2, (dsigma/sqrt(E) + dv)/2)"""
    root = np.sqrt(E)
    velocity = np.asarray(velocity, dtype=float)
    stress = np.asarray(stress, dtype=float)
    return 0.5 * (stress / root - velocity), 0.5 * (stress / root + velocity)


def riemann_to_physical(E: float, plus, minus) -> Tuple[np.ndarray, np.ndarray]:
    root = np.sqrt(E)
    plus = np.asarray(plus, dtype=float)
    minus = np.asarray(minus, dtype=float)
    return minus - plus, root * (plus + minus)


@dataclass(frozen=True)
class FeedbackGains:
    B: np.ndarray
    B_y: np.ndarray

    def boundary_velocity(self, sigma_0: float, sigma_L: float, sigma_star_0: float = 0.0, sigma_star_L: float = 0.0, v_star_0: float = 0.0, v_star_L: float = 0.0) -> Tuple[float, float]:
        """Physical feedback law v = v* + B_y (sigma - sigma*) at both ends"""
        return (
            v_star_0 + self.B_y[0, 0] * (sigma_0 - sigma_star_0),
            v_star_L + self.B_y[1, 1] * (sigma_L - sigma_star_L),
        )


def feedback_gains(kappa_0: float, kappa_1: float, E: float) -> FeedbackGains:
    for name, kappa in (('kappa_0', kappa_0), ('kappa_1', kappa_1)):
        if kappa == -1:
            raise ValidationError(f"{name} = -1 makes the physical feedback singular")
    _require_positive(E=E)
    root = np.sqrt(E)
    B = np.array([[0.0, kappa_0], [kappa_1, 0.0]])
    B_y = np.diag([(1 - kappa_0) / ((1 + kappa_0) * root), (kappa_1 - 1) / ((1 + kappa_1) * root)])
    return FeedbackGains(B=B, B_y=B_y)


@dataclass(frozen=True)
class KappaChoice:
    mu_hat: float
    kappa_growing: float
    kappa_corrected: float
    growing_product: float
    corrected_product: float
    growing_passes: bool
    corrected_passes: bool
    coth_slope: float
    corrected_slope: float

    def as_text(self) -> str:
        return (
            f"mu_hat = {self.mu_hat:.12e}\n"
            f"kappa_growing = {self.kappa_growing:.12e} (dissipativity {'PASS' if self.growing_passes else 'FAIL'}, product {self.growing_product:.12e})\n"
            f"kappa_corrected = {self.kappa_corrected:.12e} (dissipativity {'PASS' if self.corrected_passes else 'FAIL'}, product {self.corrected_product:.12e})\n"
            f"coth_slope = {self.coth_slope:.12e}\n"
            f"corrected_slope = {self.corrected_slope:.12e}\n"
        )


def kappa_for_rate(sensitivity: float, E: float, length: float) -> KappaChoice:
    """
    Candidate gains for the rate ansatz mu_hat = 2|sensitivity|: the
    exp(+L|s|/sqrt(E)) and exp(-L|s|/sqrt(E)) forms, each checked against
    the dissipativity condition with lambda_min = sqrt(E).
    """
    _require_positive(E=E, length=length)
    root = np.sqrt(E)
    exponent = length / root * abs(sensitivity)
    mu_hat = 2.0 * abs(sensitivity)
    kappa_growing = float(np.exp(exponent))
    kappa_corrected = float(np.exp(-exponent))

    verdicts = []
    for kappa in (kappa_growing, kappa_corrected):
        gains = feedback_gains(kappa, kappa, E)
        verdicts.append(dissipativity_check(gains.B, mu_hat, root, length))

    with np.errstate(divide='ignore'):
        coth_slope = float(1.0 / (root * np.tanh(exponent)))
    corrected_slope = float((1 - kappa_corrected) / ((1 + kappa_corrected) * root))
    choice = KappaChoice(
        mu_hat=mu_hat,
        kappa_growing=kappa_growing,
        kappa_corrected=kappa_corrected,
        growing_product=1.0 - verdicts[0].margin,
        corrected_product=1.0 - verdicts[1].margin,
        growing_passes=verdicts[0].passed,
        corrected_passes=verdicts[1].passed,
        coth_slope=coth_slope,
        corrected_slope=corrected_slope,
    )
    if not choice.growing_passes:
        logger.warning(f"Gain exp(+L|s|/sqrt(E)) = {kappa_growing:.6g} violates the dissipativity condition")
    return choice


def rate_estimate(sensitivity: float, mu_hat: float, E: float, length: float, x=None) -> float:
    """Closed-form lower estimate of the decay rate for the deterministic viscoplastic system"""
    root = np.sqrt(E)
    x = np.linspace(0.0, length, 1025) if x is None else np.asarray(x, dtype=float)
    left = np.exp(-mu_hat * x / root)
    right = np.exp(-mu_hat * (length - x) / root)
    worst = np.maximum(3 * left + right, left + 3 * right).max()
    return float(mu_hat - abs(sensitivity / 2.0) * worst)


def curve_parameters(curve) -> Union[BergstromParams, DrxParams]:
    base = BergstromParams(
        U0=curve.u0,
        temperature=curve.temperature,
        omega0=curve.omega0,
        C=curve.recovery_c,
        m=curve.rate_sensitivity,
        Q=curve.activation_energy,
        R=curve.gas_constant,
        strain_rate=curve.strain_rate,
        sigma0=curve.sigma0,
        alpha=curve.alpha,
        G=curve.shear_modulus,
        b=curve.burgers_vector,
        rho_init=curve.rho_init,
    )
    if curve.critical_strain is None:
        return base
    return DrxParams(
        base=base,
        critical_strain=curve.critical_strain,
        saturation_strain=curve.saturation_strain,
        kappa=curve.drx_kappa,
        q=curve.drx_q,
    )


def stress_strain_curve(curve) -> Tuple[np.ndarray, np.ndarray]:
    strain = np.linspace(0.0, curve.strain_end, curve.strain_points)
    params = curve_parameters(curve)
    if isinstance(params, DrxParams):
        return strain, drx_stress(strain, params)
    return strain, bergstrom_stress(strain, params)


def sensitivity_from_config(config) -> Tuple[float, Optional[Tuple[np.ndarray, np.ndarray]]]:
    """Mean plastic sensitivity for a [material] block, with the curve it came from if any"""
    kind = config.sensitivity
    if kind == 'proportional':
        return linearize_plastic(config.desired_stress, relation=proportional_sensitivity(config.sensitivity_factor)), None
    if kind == 'constant':
        return float(config.sensitivity_value), None
    strain, stress = stress_strain_curve(config.curve)
    elastic_modulus = config.elastic_modulus if config.subtract_elastic else None
    value = linearize_plastic(config.desired_stress, strain=strain, stress=stress, elastic_modulus=elastic_modulus)
    logger.info(f"Linearized {kind} curve at sigma*={config.desired_stress}: sensitivity {value:.6g}")
    return value, (strain, stress)
