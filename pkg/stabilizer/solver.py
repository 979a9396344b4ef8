"""
Upwind / explicit Euler time integration of the Galerkin system with
ghost-cell boundary feedback, discrete Lyapunov monitoring and physical
moment extraction, plus the config-driven experiment pipeline.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from django.core.exceptions import ValidationError

from .config import ExperimentConfig, InitialCoordinates, Profile
from .exceptions import NumericalError
from .galerkin import GalerkinSystem, RandomSystemSpec, assemble_system
from .gpc import GpcBasis, build_basis
from .lyapunov import Scaling, StabilityCertificate, certify
from .material import (
    FeedbackGains,
    ViscoplasticSystem,
    feedback_gains,
    physical_to_riemann,
    riemann_transform,
    sensitivity_from_config,
)
from .randfield import ExplainedVariance, KLExpansion, build_field, explained_variance, kl_decompose, kl_to_gpc

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    length: float
    cells: int
    cfl: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise ValidationError(f"Domain length must be positive, got {self.length}")
        if self.cells < 1:
            raise ValidationError(f"Grid needs at least one cell, got {self.cells}")
        if not 0 < self.cfl <= 1:
            raise ValidationError(f"CFL number must lie in (0, 1], got {self.cfl}")

    @property
    def dx(self) -> float:
        return self.length / self.cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(1, self.cells + 1) - 0.5) * self.dx


def cfl_timestep(system: GalerkinSystem, dx: float, cfl: float) -> float:
    """dt = CFL dx / max |D|"""
    if not 0 < cfl <= 1:
        raise ValidationError(f"CFL number must lie in (0, 1], got {cfl}")
    fastest = system.lambda_max
    if fastest == 0:
        raise ValidationError("All characteristic speeds vanish; no CFL time step exists")
    return cfl * dx / fastest


def discrete_weights(system: GalerkinSystem, dx: float, mu_hat: float, h_plus: Scaling = 1.0, h_minus: Scaling = 1.0) -> np.ndarray:
    """
    w_i+ = h+/D+_i prod_{l<i} (1 - dx mu_hat/D+_l),
    w_i- = h-/|D-_i| prod_{l>i} (1 + dx mu_hat/D-_l); shape (cells, 2P).
    """
    if mu_hat < 0:
        raise ValidationError(f"Rate ansatz mu_hat must be non-negative, got {mu_hat}")
    P = system.modes
    h_plus = np.broadcast_to(np.asarray(h_plus, dtype=float), (P,))
    h_minus = np.broadcast_to(np.asarray(h_minus, dtype=float), (P,))

    factors_plus = 1.0 - dx * mu_hat / system.D_plus
    factors_minus = 1.0 + dx * mu_hat / system.D_minus
    if np.any(factors_plus <= 0) or np.any(factors_minus <= 0):
        raise ValidationError(
            f"Discrete weights lose positivity for mu_hat={mu_hat} and dx={dx}; use a smaller mu_hat or a finer grid"
        )

    ones = np.ones((1, P))
    prefix = np.vstack([ones, np.cumprod(factors_plus[:-1], axis=0)])
    suffix = np.vstack([np.cumprod(factors_minus[:0:-1], axis=0)[::-1], ones])
    plus = h_plus / system.D_plus * prefix
    minus = h_minus / np.abs(system.D_minus) * suffix
    return np.concatenate([plus, minus], axis=1)


@dataclass
class SolverState:
    step: int
    time: float
    zeta: np.ndarray  # (cells + 2, 2P), ghosts in the first and last row

    @property
    def interior(self) -> np.ndarray:
        return self.zeta[1:-1]


def apply_boundary(zeta: np.ndarray, B_hat: np.ndarray) -> None:
    """(zeta_0+, zeta_{N+1}-) = B_hat (zeta_N+, zeta_1-), in place"""
    P = zeta.shape[1] // 2
    outgoing = np.concatenate([zeta[-2, :P], zeta[1, P:]])
    incoming = B_hat @ outgoing
    zeta[0, :] = 0.0
    zeta[-1, :] = 0.0
    zeta[0, :P] = incoming[:P]
    zeta[-1, P:] = incoming[P:]


def initial_state(interior: np.ndarray, B_hat: np.ndarray) -> SolverState:
    interior = np.asarray(interior, dtype=float)
    zeta = np.zeros((len(interior) + 2, interior.shape[1]))
    zeta[1:-1] = interior
    apply_boundary(zeta, B_hat)
    return SolverState(step=0, time=0.0, zeta=zeta)


def _source_action(system: GalerkinSystem, interior: np.ndarray) -> np.ndarray:
    if system.shared:
        return interior @ system.Q[0].T
    return np.matmul(system.Q, interior[:, :, None])[:, :, 0]


def step(state: SolverState, system: GalerkinSystem, B_hat: np.ndarray, dt: float, dx: float) -> SolverState:
    """One upwind / explicit Euler step; ghosts are refreshed from the new interior"""
    P = system.modes
    zeta = state.zeta
    interior = zeta[1:-1]

    difference = np.empty_like(interior)
    difference[:, :P] = interior[:, :P] - zeta[:-2, :P]
    difference[:, P:] = zeta[2:, P:] - interior[:, P:]

    updated = np.empty_like(zeta)
    updated[1:-1] = interior - (dt / dx) * system.speeds * difference - dt * _source_action(system, interior)
    if not np.all(np.isfinite(updated[1:-1])):
        raise NumericalError(f"Non-finite state at step {state.step + 1}", step=state.step + 1)
    apply_boundary(updated, B_hat)
    return SolverState(step=state.step + 1, time=state.time + dt, zeta=updated)


def discrete_lyapunov(interior: np.ndarray, weights: np.ndarray, dx: float) -> float:
    """dx sum_i zeta_i^T W_i zeta_i"""
    return float(dx * np.sum(weights * np.asarray(interior) ** 2))


@dataclass(frozen=True)
class Moments:
    velocity_mean: np.ndarray
    velocity_variance: np.ndarray
    stress_mean: np.ndarray
    stress_variance: np.ndarray


def riemann_modes(interior: np.ndarray, system: GalerkinSystem) -> np.ndarray:
    """R = blockdiag(T+, T-) zeta per cell"""
    if system.shared:
        return interior @ system.T[0].T
    return np.matmul(system.T, interior[:, :, None])[:, :, 0]


def moments(interior: np.ndarray, system: GalerkinSystem, T_physical: np.ndarray, desired_velocity=0.0, desired_stress=0.0) -> Moments:
    P = system.modes
    R = riemann_modes(interior, system)
    plus, minus = R[:, :P], R[:, P:]
    velocity = T_physical[0, 0] * plus + T_physical[0, 1] * minus
    stress = T_physical[1, 0] * plus + T_physical[1, 1] * minus
    return Moments(
        velocity_mean=desired_velocity + velocity[:, 0],
        velocity_variance=np.sum(velocity[:, 1:] ** 2, axis=1),
        stress_mean=desired_stress + stress[:, 0],
        stress_variance=np.sum(stress[:, 1:] ** 2, axis=1),
    )


def center_value(values: np.ndarray, grid: Grid) -> float:
    return float(np.interp(grid.length / 2.0, grid.centers, values))


@dataclass
class TimeSeries:
    grid: Grid
    times: List[float] = field(default_factory=list)
    lyapunov: List[float] = field(default_factory=list)
    normalized: List[float] = field(default_factory=list)
    envelope: Optional[List[float]] = None
    stress_mean: List[np.ndarray] = field(default_factory=list)
    stress_variance: List[np.ndarray] = field(default_factory=list)
    velocity_mean: List[np.ndarray] = field(default_factory=list)
    velocity_variance: List[np.ndarray] = field(default_factory=list)
    actuation_left: List[float] = field(default_factory=list)
    actuation_right: List[float] = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    @property
    def final_normalized(self) -> float:
        return self.normalized[-1]


@dataclass(frozen=True)
class Experiment:
    config: ExperimentConfig
    basis: GpcBasis
    grid: Grid
    sensitivity: float
    sensitivity_modes: np.ndarray
    material: ViscoplasticSystem
    gains: FeedbackGains
    system: GalerkinSystem
    certificate: StabilityCertificate
    kl: Optional[KLExpansion] = None
    explained: Optional[ExplainedVariance] = None
    curve: Optional[tuple] = None


def make_grid(config: ExperimentConfig) -> Grid:
    return Grid(length=config.grid.length, cells=config.grid.cells, cfl=config.grid.cfl)


def make_basis(config: ExperimentConfig) -> GpcBasis:
    b = config.basis
    return build_basis(b.family, b.dimensions, b.order, b.index_set, b.quadrature_nodes)


def decompose_field(config: ExperimentConfig, basis: GpcBasis, grid: Grid, mean):
    """KL expansion of the configured sensitivity field, or None without a [field] block"""
    if config.random_field is None:
        return None, None, None
    source = build_field(config.random_field, mean)
    n_quad = config.random_field.quadrature_points or 8 * grid.cells
    kl = kl_decompose(source, grid.length, basis.M, n_quad)
    return source, kl, explained_variance(kl, source)


def assemble_experiment(config: ExperimentConfig) -> Experiment:
    """basis -> sensitivity field -> Galerkin system -> certificate"""
    grid = make_grid(config)
    basis = make_basis(config)
    material_config = config.material
    sensitivity, curve = sensitivity_from_config(material_config)

    source, kl, explained = decompose_field(config, basis, grid, sensitivity)
    if kl is None:
        modes = np.zeros((grid.cells, basis.size))
        modes[:, 0] = sensitivity
    else:
        modes = kl_to_gpc(kl, source.mean, basis, grid.centers)

    E = material_config.elastic_modulus
    material = riemann_transform(E, modes[:, 0])
    gains = feedback_gains(material_config.kappa_left, material_config.kappa_right, E)

    root = math.sqrt(E)
    speed_plus = np.zeros((grid.cells, basis.size))
    speed_plus[:, 0] = root
    speed_minus = -speed_plus
    source_modes = np.repeat((-0.5 * modes)[:, None, None, :], 2, axis=1).repeat(2, axis=2)

    spec = RandomSystemSpec(
        length=grid.length,
        grid=grid.centers,
        basis=basis,
        speed_plus=speed_plus,
        speed_minus=speed_minus,
        source=source_modes,
        boundary=gains.B,
    )
    system = assemble_system(spec)
    stability = config.stability
    certificate = certify(
        system, stability.mu_hat, grid.length,
        np.asarray(stability.h_plus), np.asarray(stability.h_minus),
        stability.optimize_scaling,
    )
    return Experiment(
        config=config,
        basis=basis,
        grid=grid,
        sensitivity=sensitivity,
        sensitivity_modes=modes,
        material=material,
        gains=gains,
        system=system,
        certificate=certificate,
        kl=kl,
        explained=explained,
        curve=curve,
    )


def profile_values(kind: str, amplitude: float, wavenumber: float, x: np.ndarray, length: float) -> np.ndarray:
    if kind == Profile.COS:
        return amplitude * np.cos(2 * np.pi * wavenumber * x / length)
    if kind == Profile.SIN:
        return amplitude * np.sin(2 * np.pi * wavenumber * x / length)
    if kind == Profile.SIN_SQUARED:
        return amplitude * np.sin(np.pi * wavenumber * x / length) ** 2
    if kind == Profile.CONSTANT:
        return np.full_like(x, amplitude)
    return np.zeros_like(x)


def initial_modes(experiment: Experiment) -> np.ndarray:
    """Deterministic initial data in the mean mode, mapped to zeta = T^T R"""
    initial = experiment.config.initial
    grid = experiment.grid
    x = grid.centers
    first = profile_values(initial.profile_plus, initial.amplitude_plus, initial.wavenumber, x, grid.length)
    second = profile_values(initial.profile_minus, initial.amplitude_minus, initial.wavenumber, x, grid.length)
    if initial.coordinates == InitialCoordinates.PHYSICAL:
        first, second = physical_to_riemann(experiment.material.E, first, second)

    P = experiment.basis.size
    R = np.zeros((grid.cells, 2 * P))
    R[:, 0] = first
    R[:, P] = second
    system = experiment.system
    if system.shared:
        return R @ system.T[0]
    return np.matmul(np.transpose(system.T, (0, 2, 1)), R[:, :, None])[:, :, 0]


def default_cadence(dt: float) -> int:
    return max(1, math.ceil(1.0 / (50.0 * dt)))


def _record(series: TimeSeries, experiment: Experiment, state: SolverState, weights: np.ndarray, initial_value: float, mu: float):
    grid = experiment.grid
    value = discrete_lyapunov(state.interior, weights, grid.dx)
    series.times.append(state.time)
    series.lyapunov.append(value)
    series.normalized.append(value / initial_value if initial_value > 0 else 1.0)
    if series.envelope is not None:
        series.envelope.append(math.exp(-mu * state.time))

    material = experiment.config.material
    fields = moments(state.interior, experiment.system, experiment.material.T, material.desired_velocity, material.desired_stress)
    series.stress_mean.append(fields.stress_mean)
    series.stress_variance.append(fields.stress_variance)
    series.velocity_mean.append(fields.velocity_mean)
    series.velocity_variance.append(fields.velocity_variance)
    B_y = experiment.gains.B_y
    series.actuation_left.append(float(B_y[0, 0] * (fields.stress_mean[0] - material.desired_stress)))
    series.actuation_right.append(float(B_y[1, 1] * (fields.stress_mean[-1] - material.desired_stress)))


def integrate(experiment: Experiment) -> TimeSeries:
    config = experiment.config
    grid = experiment.grid
    system = experiment.system
    certificate = experiment.certificate

    dt = cfl_timestep(system, grid.dx, grid.cfl)
    t_end = config.grid.t_end
    n_steps = math.ceil(t_end / dt - 1e-9) if t_end > 0 else 0
    cadence = config.output.cadence or default_cadence(dt)
    # same h as the certificate, which may carry the rho2 scaling
    weights = discrete_weights(system, grid.dx, certificate.mu_hat, certificate.h_plus, certificate.h_minus)

    state = initial_state(initial_modes(experiment), system.B_hat)
    initial_value = discrete_lyapunov(state.interior, weights, grid.dx)
    mu = certificate.mu
    series = TimeSeries(grid=grid, envelope=[] if mu > 0 else None)
    _record(series, experiment, state, weights, initial_value, mu)

    logger.info(f"Integrating {n_steps} steps with dt={dt:.6e}, sampling every {cadence} steps")
    for k in range(1, n_steps + 1):
        # last step lands exactly on t_end
        tau = dt if k < n_steps else t_end - (n_steps - 1) * dt
        state = step(state, system, system.B_hat, tau, grid.dx)
        if k == n_steps:
            state.time = t_end
        if k % cadence == 0 or k == n_steps:
            _record(series, experiment, state, weights, initial_value, mu)

    logger.info(f"Finished at t={state.time:.6g}: normalized Lyapunov value {series.final_normalized:.6e}")
    return series


@dataclass(frozen=True)
class SimulationResult:
    experiment: Experiment
    series: TimeSeries


def run(config: ExperimentConfig) -> SimulationResult:
    experiment = assemble_experiment(config)
    return SimulationResult(experiment=experiment, series=integrate(experiment))
