"""
Stochastic Galerkin assembly of the random 2x2 balance law in Riemann
coordinates: advection blocks, their eigen-decompositions, the transformed
source and the transformed boundary matrix.

Mode vectors are stacked as (plus block, minus block) throughout.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
from django.core.exceptions import ValidationError
from scipy.linalg import LinAlgError, block_diag, eigh, orthogonal_procrustes

from .exceptions import NumericalError
from .gpc import GpcBasis, realizations, triple_product_tensor

logger = logging.getLogger(__name__)

# relative gap below which eigenvalues count as one eigenspace
DEGENERACY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class HyperbolicityReport:
    plus_min: float
    plus_max: float
    minus_min: float
    minus_max: float

    @property
    def passed(self) -> bool:
        return self.plus_min > 0 and self.minus_max < 0

    @property
    def lambda_min(self) -> float:
        return min(self.plus_min, -self.minus_max)

    def as_text(self) -> str:
        verdict = 'PASS' if self.passed else 'FAIL'
        return (
            f"hyperbolicity = {verdict}\n"
            f"lambda_plus_range = {self.plus_min:.12e}, {self.plus_max:.12e}\n"
            f"lambda_minus_range = {self.minus_min:.12e}, {self.minus_max:.12e}\n"
            f"lambda_min_nodes = {self.lambda_min:.12e}\n"
        )


def check_hyperbolicity(speed_plus: np.ndarray, speed_minus: np.ndarray, basis: GpcBasis) -> HyperbolicityReport:
    """Evaluate projected speeds at every tensorized quadrature node and cell"""
    plus = realizations(speed_plus, basis)
    minus = realizations(speed_minus, basis)
    report = HyperbolicityReport(
        plus_min=float(plus.min()),
        plus_max=float(plus.max()),
        minus_min=float(minus.min()),
        minus_max=float(minus.max()),
    )
    if not report.passed:
        logger.warning(
            f"Speeds are not strictly signed at the quadrature nodes: "
            f"min lambda+ = {report.plus_min:.4e}, max lambda- = {report.minus_max:.4e}"
        )
    return report


@dataclass(frozen=True)
class RandomSystemSpec:
    length: float
    grid: np.ndarray
    basis: GpcBasis
    speed_plus: np.ndarray   # (cells, modes)
    speed_minus: np.ndarray  # (cells, modes)
    source: np.ndarray       # (cells, 2, 2, modes)
    boundary: np.ndarray     # (2, 2)

    def __post_init__(self):
        cells, modes = len(self.grid), self.basis.size
        for name, value, shape in (
            ('speed_plus', self.speed_plus, (cells, modes)),
            ('speed_minus', self.speed_minus, (cells, modes)),
            ('source', self.source, (cells, 2, 2, modes)),
            ('boundary', self.boundary, (2, 2)),
        ):
            if np.shape(value) != shape:
                raise ValidationError(f"{name} has shape {np.shape(value)}, expected {shape}")
        report = check_hyperbolicity(self.speed_plus, self.speed_minus, self.basis)
        if not report.passed:
            raise ValidationError(
                f"Random speeds are not strictly signed: min lambda+ = {report.plus_min:.6g}, "
                f"max lambda- = {report.minus_max:.6g}"
            )
        object.__setattr__(self, 'hyperbolicity', report)


@dataclass(frozen=True)
class GalerkinSystem:
    grid: np.ndarray
    basis: GpcBasis
    A_plus: np.ndarray   # (cells, P, P)
    A_minus: np.ndarray
    T_plus: np.ndarray
    T_minus: np.ndarray
    D_plus: np.ndarray   # (cells, P) diagonal entries
    D_minus: np.ndarray
    Q: np.ndarray        # (cells, 2P, 2P)
    B_hat: np.ndarray    # (2P, 2P)
    hyperbolicity: HyperbolicityReport
    shared: bool = False

    @property
    def modes(self) -> int:
        return self.basis.size

    @cached_property
    def speeds(self) -> np.ndarray:
        """Diagonal of blockdiag(D+, D-) per cell, shape (cells, 2P)"""
        return np.concatenate([self.D_plus, self.D_minus], axis=1)

    @property
    def lambda_min(self) -> float:
        return float(min(self.D_plus.min(), np.abs(self.D_minus).min()))

    @property
    def lambda_max(self) -> float:
        return float(max(np.abs(self.D_plus).max(), np.abs(self.D_minus).max()))

    @cached_property
    def T(self) -> np.ndarray:
        """blockdiag(T+, T-) per cell"""
        return _block_diagonal(self.T_plus, self.T_minus)

    def summary(self) -> str:
        lines = [
            f"cells = {len(self.grid)}",
            f"modes = {self.modes}",
            f"shared_blocks = {str(self.shared).lower()}",
            f"lambda_min = {self.lambda_min:.12e}",
            f"lambda_max = {self.lambda_max:.12e}",
            f"B_hat_norm = {np.linalg.norm(self.B_hat, 2):.12e}",
        ]
        return "\n".join(lines) + "\n" + self.hyperbolicity.as_text()


def _block_diagonal(upper: np.ndarray, lower: np.ndarray) -> np.ndarray:
    cells, P, _ = upper.shape
    result = np.zeros((cells, 2 * P, 2 * P))
    result[:, :P, :P] = upper
    result[:, P:, P:] = lower
    return result


def _is_shared(modes: np.ndarray) -> bool:
    return bool(np.all(modes == modes[:1]))


def _galerkin_cell(row: np.ndarray, tensor: np.ndarray) -> np.ndarray:
    return np.tensordot(row, tensor, axes=1)


def galerkin_matrix(modes: np.ndarray, tensor: np.ndarray, share: bool = True) -> np.ndarray:
    """sum_k f_k(x) G^k per cell for a scalar mode field (cells, modes)"""
    modes = np.atleast_2d(np.asarray(modes, dtype=float))
    if share and _is_shared(modes):
        single = _galerkin_cell(modes[0], tensor)
        return np.repeat(single[None, :, :], len(modes), axis=0)
    return np.array([_galerkin_cell(row, tensor) for row in modes])


def assemble_advection(speed_plus: np.ndarray, speed_minus: np.ndarray, tensor: np.ndarray, share: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    return galerkin_matrix(speed_plus, tensor, share), galerkin_matrix(speed_minus, tensor, share)


def _canonical_columns(vectors: np.ndarray) -> np.ndarray:
    largest = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[largest, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _diagonalize_cell(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    off_diagonal = matrix - np.diag(np.diag(matrix))
    if not np.any(off_diagonal):
        order = np.argsort(np.diag(matrix), kind='stable')
        return np.diag(matrix)[order], np.eye(len(matrix))[:, order]
    try:
        values, vectors = eigh(matrix)
    except LinAlgError as e:
        raise NumericalError(f"Symmetric eigen-solve failed: {e}")
    return values, _canonical_columns(vectors)


def _degenerate_clusters(values: np.ndarray):
    """Runs of ascending eigenvalues that agree to DEGENERACY_TOLERANCE, only runs of two or more"""
    tolerance = DEGENERACY_TOLERANCE * max(1.0, float(np.max(np.abs(values))))
    breaks = np.flatnonzero(np.diff(values) > tolerance) + 1
    return [run for run in np.split(np.arange(len(values)), breaks) if len(run) > 1]


def _align_to(vectors: np.ndarray, values: np.ndarray, previous: np.ndarray) -> np.ndarray:
    """Rotate each degenerate eigenspace onto the previous cell's basis of it"""
    aligned = vectors.copy()
    for run in _degenerate_clusters(values):
        rotation, _ = orthogonal_procrustes(vectors[:, run], previous[:, run])
        aligned[:, run] = vectors[:, run] @ rotation
    return aligned


def diagonalize(blocks: np.ndarray, share: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    Orthogonal eigen-decomposition per cell.
    Returns (T, D) with D the ascending eigenvalues, shapes (cells, P, P) and (cells, P).
    Bases of repeated eigenvalues follow the previous cell so that dT/dx stays smooth.
    """
    blocks = np.asarray(blocks, dtype=float)
    if share and np.all(blocks == blocks[:1]):
        values, vectors = _diagonalize_cell(blocks[0])
        cells = len(blocks)
        return np.repeat(vectors[None], cells, axis=0), np.repeat(values[None], cells, axis=0)
    T, D = [], []
    for block in blocks:
        values, vectors = _diagonalize_cell(block)
        if T:
            vectors = _align_to(vectors, values, T[-1])
        T.append(vectors)
        D.append(values)
    return np.array(T), np.array(D)


def source_matrix(source: np.ndarray, tensor: np.ndarray, share: bool = True) -> np.ndarray:
    """2x2-block Galerkin matrix of the source mode field (cells, 2, 2, modes)"""
    cells, P = source.shape[0], tensor.shape[0]
    result = np.zeros((cells, 2 * P, 2 * P))
    for a in range(2):
        for b in range(2):
            result[:, a * P:(a + 1) * P, b * P:(b + 1) * P] = galerkin_matrix(source[:, a, b, :], tensor, share)
    return result


def assemble_Q(T: np.ndarray, C_hat: np.ndarray, D: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Q = T^T C T + D T^T dT/dx, derivative by second-order finite differences"""
    Tt = np.transpose(T, (0, 2, 1))
    Q = Tt @ C_hat @ T
    if len(grid) >= 2:
        edge_order = 2 if len(grid) >= 3 else 1
        dT = np.gradient(T, grid, axis=0, edge_order=edge_order)
        Q = Q + D[:, :, None] * (Tt @ dT)
    return Q


def transform_boundary(B: np.ndarray, T_plus_0: np.ndarray, T_plus_L: np.ndarray, T_minus_0: np.ndarray, T_minus_L: np.ndarray) -> np.ndarray:
    P = T_plus_0.shape[0]
    left = block_diag(T_plus_0, T_minus_L)
    right = block_diag(T_plus_L, T_minus_0)
    return left.T @ np.kron(np.asarray(B, dtype=float), np.eye(P)) @ right


def assemble_system(spec: RandomSystemSpec, share: bool = True) -> GalerkinSystem:
    tensor = triple_product_tensor(spec.basis)
    shared = share and all(
        _is_shared(np.reshape(m, (len(spec.grid), -1))) for m in (spec.speed_plus, spec.speed_minus, spec.source)
    )

    A_plus, A_minus = assemble_advection(spec.speed_plus, spec.speed_minus, tensor, share)
    T_plus, D_plus = diagonalize(A_plus, share)
    T_minus, D_minus = diagonalize(A_minus, share)

    if np.any(D_plus <= 0) or np.any(D_minus >= 0):
        raise NumericalError("Galerkin speeds lost their sign after projection")

    C_hat = source_matrix(spec.source, tensor, share)
    T = _block_diagonal(T_plus, T_minus)
    D = np.concatenate([D_plus, D_minus], axis=1)
    Q = assemble_Q(T, C_hat, D, spec.grid)

    B_hat = transform_boundary(spec.boundary, T_plus[0], T_plus[-1], T_minus[0], T_minus[-1])

    system = GalerkinSystem(
        grid=np.asarray(spec.grid, dtype=float),
        basis=spec.basis,
        A_plus=A_plus,
        A_minus=A_minus,
        T_plus=T_plus,
        T_minus=T_minus,
        D_plus=D_plus,
        D_minus=D_minus,
        Q=Q,
        B_hat=B_hat,
        hyperbolicity=spec.hyperbolicity,
        shared=shared,
    )
    logger.info(
        f"Assembled Galerkin system: {len(spec.grid)} cells, {spec.basis.size} modes, "
        f"lambda_min={system.lambda_min:.6g}, lambda_max={system.lambda_max:.6g}"
    )
    return system
