"""
Typed experiment configuration. Instances are produced by
`stabilizer.parsers.config_parser.ExperimentConfigParser`, which also
validates every value before any computation starts.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

from django.db import models


class SensitivityKind(models.TextChoices):
    PROPORTIONAL = 'proportional', 'Proportional to the desired stress'
    CONSTANT = 'constant', 'Constant value'
    BERGSTROM = 'bergstrom', 'Slope of the Bergstrom curve'
    DRX = 'drx', 'Slope of the recrystallization curve'


class InitialCoordinates(models.TextChoices):
    RIEMANN = 'riemann', 'Riemann invariants'
    PHYSICAL = 'physical', 'Velocity and stress deviations'


class Profile(models.TextChoices):
    COS = 'cos', 'a cos(2 pi k x / L)'
    SIN = 'sin', 'a sin(2 pi k x / L)'
    SIN_SQUARED = 'sin2', 'a sin(pi k x / L)^2'
    CONSTANT = 'constant', 'a'
    ZERO = 'zero', '0'


@dataclass(frozen=True)
class BasisConfig:
    family: str = 'hermite'
    dimensions: int = 4
    order: int = 4
    index_set: str = 'sparse'
    quadrature_nodes: Optional[int] = None


@dataclass(frozen=True)
class FieldConfig:
    kernel: str = 'squared_exponential'
    variance: float = 0.01
    length_scale: float = 0.2
    smoothness: Optional[float] = None
    measurement_locations: Tuple[float, ...] = ()
    measurement_values: Tuple[float, ...] = ()
    quadrature_points: Optional[int] = None


@dataclass(frozen=True)
class CurveConfig:
    u0: float
    temperature: float
    omega0: float
    recovery_c: float
    rate_sensitivity: float
    activation_energy: float
    gas_constant: float
    strain_rate: float
    sigma0: float
    alpha: float
    shear_modulus: float
    burgers_vector: float
    rho_init: float
    strain_end: float
    strain_points: int
    critical_strain: Optional[float] = None
    saturation_strain: Optional[float] = None
    drx_kappa: Optional[float] = None
    drx_q: Optional[float] = None


@dataclass(frozen=True)
class MaterialConfig:
    elastic_modulus: float = 100.0
    desired_stress: float = 70.0
    desired_velocity: float = 0.0
    sensitivity: str = 'proportional'
    sensitivity_factor: Optional[float] = 0.02
    sensitivity_value: Optional[float] = None
    kappa_left: float = 0.9
    kappa_right: float = 0.9
    # remove the elastic part sigma/E from a curve slope
    subtract_elastic: bool = False
    curve: Optional[CurveConfig] = None


@dataclass(frozen=True)
class StabilityConfig:
    mu_hat: float = 0.25
    h_plus: Tuple[float, ...] = (1.0,)
    h_minus: Tuple[float, ...] = (1.0,)
    optimize_scaling: bool = False


@dataclass(frozen=True)
class GridConfig:
    length: float = 1.0
    cells: int = 256
    cfl: float = 0.99
    t_end: float = 5.0

    @property
    def dx(self) -> float:
        return self.length / self.cells


@dataclass(frozen=True)
class InitialConfig:
    coordinates: str = 'riemann'
    profile_plus: str = 'cos'
    profile_minus: str = 'cos'
    amplitude_plus: float = 1.0
    amplitude_minus: float = 1.0
    wavenumber: float = 1.0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = ''
    cadence: int = 0


@dataclass(frozen=True)
class SweepConfig:
    parameter: str
    values: Tuple[str, ...]


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    basis: BasisConfig = field(default_factory=BasisConfig)
    random_field: Optional[FieldConfig] = None
    material: MaterialConfig = field(default_factory=MaterialConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    sweep: Optional[SweepConfig] = None
