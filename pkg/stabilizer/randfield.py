"""
Gaussian random fields on [0, L]: covariance kernels, conditioning on point
measurements and Karhunen-Loeve decomposition by the Nystrom method.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models
from scipy.integrate import trapezoid
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh
from scipy.special import gamma, kv
from scipy.stats import norm

from .exceptions import NumericalError
from .gpc import GpcBasis, unit_positions

logger = logging.getLogger(__name__)

MeanFunction = Union[float, Callable[[np.ndarray], np.ndarray]]


class KernelKind(models.TextChoices):
    EXPONENTIAL = 'exponential', 'Exponential (Matern nu = 1/2)'
    SQUARED_EXPONENTIAL = 'squared_exponential', 'Squared exponential (Gaussian)'
    MATERN = 'matern', 'Matern'


def _matern_closed_form(nu: float, r: np.ndarray) -> Optional[np.ndarray]:
    if nu == 0.5:
        return np.exp(-r)
    if nu == 1.5:
        s = np.sqrt(3.0) * r
        return (1.0 + s) * np.exp(-s)
    if nu == 2.5:
        s = np.sqrt(5.0) * r
        return (1.0 + s + s ** 2 / 3.0) * np.exp(-s)
    return None


def _matern_bessel(nu: float, r: np.ndarray) -> np.ndarray:
    """Correlation 2^(1-nu)/Gamma(nu) (sqrt(2 nu) r)^nu K_nu(sqrt(2 nu) r), r = d / length"""
    s = np.sqrt(2.0 * nu) * np.asarray(r, dtype=float)
    with np.errstate(invalid='ignore', over='ignore'):
        value = 2.0 ** (1.0 - nu) / gamma(nu) * s ** nu * kv(nu, s)
    value = np.where(s == 0.0, 1.0, value)
    # K_nu underflows for large arguments
    return np.nan_to_num(value, nan=0.0, posinf=0.0)


@dataclass(frozen=True)
class CovarianceKernel:
    kind: str
    variance: float
    length_scale: float
    nu: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KernelKind.values:
            raise ValidationError(f"Unknown kernel '{self.kind}'")
        if not self.variance > 0:
            raise ValidationError(f"Kernel variance must be positive, got {self.variance}")
        if not self.length_scale > 0:
            raise ValidationError(f"Correlation length must be positive, got {self.length_scale}")
        if self.kind == KernelKind.MATERN and (self.nu is None or not self.nu > 0):
            raise ValidationError(f"Matern smoothness must be positive, got {self.nu}")

    @property
    def sill(self) -> float:
        return self.variance

    def correlation(self, distance) -> np.ndarray:
        r = np.abs(np.asarray(distance, dtype=float)) / self.length_scale
        if self.kind == KernelKind.EXPONENTIAL:
            return np.exp(-r)
        if self.kind == KernelKind.SQUARED_EXPONENTIAL:
            return np.exp(-0.5 * r ** 2)
        closed = _matern_closed_form(self.nu, r)
        return closed if closed is not None else _matern_bessel(self.nu, r)

    def gram(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return self.variance * self.correlation(x[:, None] - y[None, :])

    def variance_at(self, x) -> np.ndarray:
        return np.full(np.shape(np.atleast_1d(x)), self.variance)

    def mean(self, x) -> np.ndarray:
        return np.zeros(np.shape(np.atleast_1d(x)))

    def __call__(self, x1: float, x2: float) -> float:
        return float(self.gram([x1], [x2])[0, 0])

    def is_positive_definite(self, points) -> bool:
        smallest = eigh(self.gram(points, points), eigvals_only=True)[0]
        return bool(smallest > -1e-10 * self.variance)


def kernel_eval(kernel: CovarianceKernel, x1: float, x2: float) -> float:
    return kernel(x1, x2)


def _mean_values(mean: MeanFunction, x: np.ndarray) -> np.ndarray:
    if callable(mean):
        return np.broadcast_to(np.asarray(mean(x), dtype=float), x.shape).astype(float)
    return np.full(x.shape, float(mean))


@dataclass(frozen=True)
class ConditionedField:
    """Gaussian field conditioned on exact point measurements"""
    prior_mean: MeanFunction
    kernel: CovarianceKernel
    locations: np.ndarray
    values: np.ndarray
    _factor: Optional[tuple] = field(default=None, repr=False, compare=False)
    _residual_weights: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def sill(self) -> float:
        return self.kernel.variance

    def mean(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        prior = _mean_values(self.prior_mean, x)
        if self._factor is None:
            return prior
        return prior + self.kernel.gram(x, self.locations) @ self._residual_weights

    def gram(self, x, y) -> np.ndarray:
        prior = self.kernel.gram(x, y)
        if self._factor is None:
            return prior
        cross_x = self.kernel.gram(x, self.locations)
        cross_y = self.kernel.gram(self.locations, y)
        return prior - cross_x @ cho_solve(self._factor, cross_y)

    def variance_at(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self._factor is None:
            return self.kernel.variance_at(x)
        cross = self.kernel.gram(self.locations, x)
        reduction = np.sum(cross * cho_solve(self._factor, cross), axis=0)
        return self.kernel.variance - reduction

    def covariance(self, x1: float, x2: float) -> float:
        return float(self.gram([x1], [x2])[0, 0])


def condition(prior_mean: MeanFunction, kernel: CovarianceKernel, locations: Sequence[float], values: Sequence[float]) -> ConditionedField:
    locations = np.asarray(locations, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(-1)
    if len(locations) != len(values):
        raise ValidationError(f"{len(locations)} measurement locations but {len(values)} values")
    if len(locations) == 0:
        return ConditionedField(prior_mean, kernel, locations, values)

    if len(np.unique(locations)) != len(locations):
        raise ValidationError("Measurement locations must be pairwise distinct")

    try:
        factor = cho_factor(kernel.gram(locations, locations), lower=True)
    except LinAlgError:
        raise ValidationError("Measurement Gram matrix is singular; locations are too close to each other")

    residual = values - _mean_values(prior_mean, locations)
    residual_weights = cho_solve(factor, residual)
    logger.info(f"Conditioned {kernel.kind} field on {len(locations)} measurements")
    return ConditionedField(prior_mean, kernel, locations, values, factor, residual_weights)


@dataclass(frozen=True)
class KLExpansion:
    length: float
    nodes: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray = field(repr=False)  # (M, nodes)

    @property
    def M(self) -> int:
        return len(self.eigenvalues)

    def evaluate(self, x) -> np.ndarray:
        """Eigenfunctions at arbitrary points by linear interpolation, shape (M, len(x))"""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([np.interp(x, self.nodes, psi) for psi in self.eigenfunctions]).reshape(self.M, len(x))

    def truncated_covariance(self, x, y) -> np.ndarray:
        psi_x = self.evaluate(x)
        psi_y = self.evaluate(y)
        return psi_x.T @ (self.eigenvalues[:, None] * psi_y)


def _canonical_sign(vector: np.ndarray) -> np.ndarray:
    scale = np.max(np.abs(vector))
    significant = np.flatnonzero(np.abs(vector) > 1e-10 * scale)
    if significant.size and vector[significant[0]] < 0:
        return -vector
    return vector


def kl_decompose(source, length: float, M: int, n_quad: int) -> KLExpansion:
    """
    Nystrom solution of the Fredholm eigenproblem on a uniform trapezoid grid.
    `source` is a CovarianceKernel or a ConditionedField.
    """
    if M < 1:
        raise ValidationError(f"KL truncation must be at least 1, got {M}")
    if n_quad < 4 * M:
        raise ValidationError(f"Nystrom resolution {n_quad} is below 4M = {4 * M}")
    if not length > 0:
        raise ValidationError(f"Domain length must be positive, got {length}")

    nodes = np.linspace(0.0, length, n_quad)
    h = length / (n_quad - 1)
    weights = np.full(n_quad, h)
    weights[[0, -1]] = h / 2.0
    root = np.sqrt(weights)

    symmetric = root[:, None] * source.gram(nodes, nodes) * root[None, :]
    symmetric = 0.5 * (symmetric + symmetric.T)
    try:
        values, vectors = eigh(symmetric)
    except LinAlgError as e:
        raise NumericalError(f"Nystrom eigen-solve failed: {e}")

    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = vectors[:, order]

    threshold = 1e-12 * source.sill * length
    achievable = int(np.sum(values > threshold))
    if achievable < M:
        raise NumericalError(
            f"Only {achievable} eigenvalues exceed {threshold:.3e}; achievable M = {achievable}",
            achievable=achievable,
        )

    eigenfunctions = np.array([_canonical_sign(vectors[:, k]) / root for k in range(M)])
    logger.info(
        f"KL decomposition with M={M} on {n_quad} nodes: d_1={values[0]:.6e}, d_M={values[M - 1]:.6e}"
    )
    return KLExpansion(length=length, nodes=nodes, eigenvalues=values[:M].copy(), eigenfunctions=eigenfunctions)


@dataclass(frozen=True)
class ExplainedVariance:
    total: float
    nodes: np.ndarray
    pointwise: np.ndarray

    def at(self, x) -> np.ndarray:
        return np.interp(np.atleast_1d(x), self.nodes, self.pointwise)


def explained_variance(kl: KLExpansion, source) -> ExplainedVariance:
    prior_variance = source.variance_at(kl.nodes)
    total = float(np.sum(kl.eigenvalues) / trapezoid(prior_variance, kl.nodes))
    captured = np.sum(kl.eigenvalues[:, None] * kl.eigenfunctions ** 2, axis=0)
    # conditioned fields vanish at measurement points
    tiny = 1e-14 * source.sill
    safe = np.where(prior_variance > tiny, prior_variance, 1.0)
    pointwise = np.where(prior_variance > tiny, captured / safe, 1.0)
    return ExplainedVariance(total=total, nodes=kl.nodes, pointwise=pointwise)


def sample_path(kl: KLExpansion, mean: MeanFunction, xi, x=None) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if len(xi) != kl.M:
        raise ValidationError(f"Draw has {len(xi)} entries, expansion has M={kl.M}")
    x = kl.nodes if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    return _mean_values(mean, x) + (np.sqrt(kl.eigenvalues) * xi) @ kl.evaluate(x)


def kl_to_gpc(kl: KLExpansion, mean: MeanFunction, basis: GpcBasis, x) -> np.ndarray:
    """Degree-one Hermite embedding, mode fields of shape (len(x), modes)"""
    if not basis.is_hermite:
        raise ValidationError("KL variables are standard Gaussian; the basis must be Hermite in every dimension")
    if basis.M != kl.M:
        raise ValidationError(f"Basis has M={basis.M} dimensions but the expansion has M={kl.M}")
    if basis.K < 1:
        raise ValidationError("KL embedding needs a basis of order K >= 1")

    x = np.atleast_1d(np.asarray(x, dtype=float))
    modes = np.zeros((len(x), basis.size))
    modes[:, 0] = _mean_values(mean, x)
    scaled = np.sqrt(kl.eigenvalues)[:, None] * kl.evaluate(x)
    for k, position in enumerate(unit_positions(basis)):
        modes[:, position] = scaled[k]
    return modes


def confidence_band(field: ConditionedField, x, level: float = 0.95) -> Tuple[np.ndarray, np.ndarray]:
    """Pointwise lower and upper bounds of the field at the given level"""
    if not 0 < level < 1:
        raise ValidationError(f"Confidence level must lie in (0, 1), got {level}")
    z = norm.ppf(0.5 + level / 2.0)
    mean = field.mean(x)
    spread = z * np.sqrt(np.clip(field.variance_at(x), 0.0, None))
    return mean - spread, mean + spread


def gershgorin_check(mean: MeanFunction, kl: KLExpansion, x=None) -> np.ndarray:
    """Pointwise diagonal dominance: mean(x) > sum_k |sqrt(d_k) psi_k(x)|"""
    x = kl.nodes if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    radius = np.sum(np.abs(np.sqrt(kl.eigenvalues)[:, None] * kl.evaluate(x)), axis=0)
    return _mean_values(mean, x) > radius


def coefficient_of_variation(modes) -> np.ndarray:
    modes = np.asarray(modes, dtype=float)
    return np.sqrt(np.sum(modes[..., 1:] ** 2, axis=-1)) / np.abs(modes[..., 0])


def build_field(config, prior_mean: MeanFunction) -> ConditionedField:
    """Prior kernel from a [field] block conditioned on its measurements"""
    kernel = CovarianceKernel(
        kind=config.kernel,
        variance=config.variance,
        length_scale=config.length_scale,
        nu=config.smoothness,
    )
    return condition(prior_mean, kernel, config.measurement_locations, config.measurement_values)
