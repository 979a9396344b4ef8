"""
Lyapunov weights and the stability certificate of a Galerkin system with
boundary feedback.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from django.core.exceptions import ValidationError
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import eigvalsh, svdvals
from scipy.optimize import minimize_scalar

from .galerkin import GalerkinSystem, check_hyperbolicity
from .gpc import GpcBasis

logger = logging.getLogger(__name__)

Scaling = Union[float, Sequence[float], np.ndarray]

# floating-point allowance for conditions that hold with equality
MARGIN_TOLERANCE = 1e-12


def _per_mode(value: Scaling, P: int, name: str) -> np.ndarray:
    result = np.broadcast_to(np.asarray(value, dtype=float), (P,)).copy()
    if np.any(result <= 0):
        raise ValidationError(f"{name} must be strictly positive, got {value}")
    return result


def _check_mu_hat(mu_hat: float):
    if mu_hat < 0:
        raise ValidationError(f"Rate ansatz mu_hat must be non-negative, got {mu_hat}")


@dataclass(frozen=True)
class Weights:
    x: np.ndarray
    plus: np.ndarray   # (points, P)
    minus: np.ndarray  # (points, P)

    @property
    def diagonal(self) -> np.ndarray:
        return np.concatenate([self.plus, self.minus], axis=1)


def continuous_weights(
    D_plus: np.ndarray,
    D_minus: np.ndarray,
    x: np.ndarray,
    length: float,
    mu_hat: float,
    h_plus: Scaling = 1.0,
    h_minus: Scaling = 1.0,
) -> Weights:
    """
    w+ = h+/D+ exp(-mu_hat int_0^x 1/D+), w- = h-/|D-| exp(mu_hat int_x^L 1/D-).
    Speeds are given at the increasing points x; the integrals use the
    trapezoid rule, with the speed held constant outside [x_0, x_N].
    """
    _check_mu_hat(mu_hat)
    x = np.asarray(x, dtype=float)
    D_plus = np.asarray(D_plus, dtype=float).reshape(len(x), -1)
    D_minus = np.asarray(D_minus, dtype=float).reshape(len(x), -1)
    P = D_plus.shape[1]
    h_plus = _per_mode(h_plus, P, 'h_plus')
    h_minus = _per_mode(h_minus, P, 'h_minus')

    inverse_plus = 1.0 / D_plus
    inverse_minus = 1.0 / D_minus
    from_left = cumulative_trapezoid(inverse_plus, x, axis=0, initial=0.0) + x[0] * inverse_plus[:1]
    to_right = cumulative_trapezoid(inverse_minus[::-1], x[::-1], axis=0, initial=0.0)[::-1]
    to_right = -to_right + (length - x[-1]) * inverse_minus[-1:]

    plus = h_plus / D_plus * np.exp(-mu_hat * from_left)
    minus = h_minus / np.abs(D_minus) * np.exp(mu_hat * to_right)
    return Weights(x=x, plus=plus, minus=minus)


@dataclass(frozen=True)
class DissipativityResult:
    margin: float
    norm: float
    factor: float

    @property
    def passed(self) -> bool:
        return self.margin >= -MARGIN_TOLERANCE


def dissipativity_check(B_hat: np.ndarray, mu_hat: float, lambda_min: float, length: float, scaling: Optional[Scaling] = None) -> DissipativityResult:
    """delta = 1 - exp(mu_hat L / (2 lambda_min)) ||D B D^-1||_2"""
    B_hat = np.atleast_2d(np.asarray(B_hat, dtype=float))
    if scaling is None:
        scaled = B_hat
    else:
        d = _per_mode(scaling, len(B_hat), 'scaling')
        scaled = d[:, None] * B_hat / d[None, :]
    norm = float(svdvals(scaled)[0]) if scaled.size else 0.0
    with np.errstate(over='ignore'):
        factor = float(np.exp(mu_hat * length / (2.0 * lambda_min)))
    product = factor * norm if norm > 0 else 0.0
    return DissipativityResult(margin=1.0 - product, norm=norm, factor=factor)


@dataclass(frozen=True)
class CorollaryResult:
    passed: bool
    lambda_min: float
    margin: float


def corollary_bound(B: np.ndarray, speed_plus: np.ndarray, speed_minus: np.ndarray, basis: GpcBasis, mu_hat: float, length: float) -> CorollaryResult:
    """Sufficient dissipativity test from the 2x2 boundary matrix and node speeds"""
    report = check_hyperbolicity(speed_plus, speed_minus, basis)
    if not report.passed:
        return CorollaryResult(passed=False, lambda_min=report.lambda_min, margin=-np.inf)
    result = dissipativity_check(B, mu_hat, report.lambda_min, length)
    return CorollaryResult(passed=result.passed, lambda_min=report.lambda_min, margin=result.margin)


def decay_rate(W: np.ndarray, Q: np.ndarray, mu_hat: float) -> float:
    """mu = mu_hat + min over cells of the smallest eigenvalue of W Q + Q^T W"""
    W = np.asarray(W, dtype=float)
    Q = np.broadcast_to(np.asarray(Q, dtype=float), W.shape + W.shape[-1:])
    WQ = W[:, :, None] * Q
    symmetric = WQ + np.transpose(WQ, (0, 2, 1))
    smallest = np.linalg.eigvalsh(symmetric)[:, 0]
    return float(mu_hat + smallest.min())


@dataclass(frozen=True)
class BoundaryMatrix:
    H: np.ndarray
    eigenvalues: np.ndarray

    @property
    def max_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def negative_semidefinite(self) -> bool:
        scale = max(np.linalg.norm(self.H, 2), 1e-300)
        return self.max_eigenvalue <= 1e-8 * scale


def boundary_matrix_H(B_hat: np.ndarray, weights_0: Weights, weights_L: Weights, D_0: np.ndarray, D_L: np.ndarray) -> BoundaryMatrix:
    """
    H = B^T diag(W+(0) D+(0), W-(L)|D-(L)|) B - diag(W+(L) D+(L), W-(0)|D-(0)|).
    weights_0/weights_L hold the weights at x = 0 and x = L; D_0/D_L the stacked speeds there.
    """
    P = len(B_hat) // 2
    D_0 = np.asarray(D_0, dtype=float).reshape(-1)
    D_L = np.asarray(D_L, dtype=float).reshape(-1)
    w0 = weights_0.diagonal.reshape(-1)
    wL = weights_L.diagonal.reshape(-1)

    incoming = np.concatenate([w0[:P] * D_0[:P], wL[P:] * np.abs(D_L[P:])])
    outgoing = np.concatenate([wL[:P] * D_L[:P], w0[P:] * np.abs(D_0[P:])])
    H = B_hat.T @ (incoming[:, None] * B_hat) - np.diag(outgoing)
    H = 0.5 * (H + H.T)
    return BoundaryMatrix(H=H, eigenvalues=eigvalsh(H))


def lyapunov_matrix_M(W: np.ndarray, D: np.ndarray, Q: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """M(x) = -d/dx (W D) + W Q + Q^T W per cell"""
    WD = np.asarray(W) * np.asarray(D)
    if len(grid) >= 3:
        derivative = np.gradient(WD, grid, axis=0, edge_order=2)
    elif len(grid) == 2:
        derivative = np.gradient(WD, grid, axis=0, edge_order=1)
    else:
        derivative = np.zeros_like(WD)
    Q = np.broadcast_to(Q, W.shape + W.shape[-1:])
    WQ = W[:, :, None] * Q
    M = WQ + np.transpose(WQ, (0, 2, 1))
    idx = np.arange(W.shape[1])
    M[:, idx, idx] -= derivative
    return M


def weighted_rate(M: np.ndarray, W: np.ndarray) -> float:
    """min over cells of the smallest eigenvalue of W^-1/2 M W^-1/2"""
    inverse_root = 1.0 / np.sqrt(W)
    scaled = inverse_root[:, :, None] * M * inverse_root[:, None, :]
    return float(np.linalg.eigvalsh(scaled)[:, 0].min())


@dataclass(frozen=True)
class Rho2Result:
    value: float
    scaling: np.ndarray
    converged: bool


def rho2(B: np.ndarray, max_iterations: int = 200, tolerance: float = 1e-10, bound: float = 8.0) -> Rho2Result:
    """
    inf over positive diagonal D of ||D B D^-1||_2 by coordinate descent on
    log D, with the first entry fixed to 1.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != B.shape[1]:
        raise ValidationError(f"rho2 needs a square matrix, got shape {B.shape}")
    n = len(B)

    def objective(log_d):
        d = np.exp(log_d)
        return float(svdvals(d[:, None] * B / d[None, :])[0])

    log_d = np.zeros(n)
    best = objective(log_d)
    converged = n == 1
    for iteration in range(max_iterations if n > 1 else 0):
        previous = best
        for i in range(1, n):
            def along(t, i=i):
                trial = log_d.copy()
                trial[i] = t
                return objective(trial)

            found = minimize_scalar(along, bounds=(log_d[i] - bound, log_d[i] + bound), method='bounded',
                                    options={'xatol': 1e-10})
            if found.fun < best:
                best = float(found.fun)
                log_d[i] = found.x
        if previous - best <= tolerance * max(previous, 1e-300):
            converged = True
            break

    if not converged:
        logger.warning(f"rho2 coordinate descent did not converge after {max_iterations} iterations")
    return Rho2Result(value=best, scaling=np.exp(log_d), converged=converged)


@dataclass(frozen=True)
class StabilityCertificate:
    mu_hat: float
    h_plus: np.ndarray
    h_minus: np.ndarray
    weights: Weights
    lambda_min: float
    dissipativity: DissipativityResult
    mu: float
    boundary: BoundaryMatrix
    M: np.ndarray
    proof_rate: float
    B_hat_norm: float

    @property
    def margin(self) -> float:
        return self.dissipativity.margin

    @property
    def valid(self) -> bool:
        return self.dissipativity.passed

    @property
    def guarantees_decay(self) -> bool:
        return self.valid and self.mu > 0

    def as_text(self) -> str:
        verdict = 'VALID' if self.valid else 'INVALID'
        return (
            f"certificate = {verdict}\n"
            f"mu_hat = {self.mu_hat:.12e}\n"
            f"h_plus = {', '.join(f'{h:.6g}' for h in self.h_plus)}\n"
            f"h_minus = {', '.join(f'{h:.6g}' for h in self.h_minus)}\n"
            f"lambda_min = {self.lambda_min:.12e}\n"
            f"B_hat_norm = {self.B_hat_norm:.12e}\n"
            f"dissipativity_margin = {self.margin:.12e}\n"
            f"margin_tolerance = {MARGIN_TOLERANCE:.1e}\n"
            f"decay_rate = {self.mu:.12e}\n"
            f"proof_rate = {self.proof_rate:.12e}\n"
            f"H_min_eigenvalue = {self.boundary.min_eigenvalue:.12e}\n"
            f"H_max_eigenvalue = {self.boundary.max_eigenvalue:.12e}\n"
        )


def _certificate_pieces(system: GalerkinSystem, mu_hat: float, length: float, h_plus, h_minus):
    grid = system.grid
    points = np.concatenate([[0.0], grid, [length]])
    D_plus = np.vstack([system.D_plus[:1], system.D_plus, system.D_plus[-1:]])
    D_minus = np.vstack([system.D_minus[:1], system.D_minus, system.D_minus[-1:]])
    extended = continuous_weights(D_plus, D_minus, points, length, mu_hat, h_plus, h_minus)
    cells = Weights(x=grid, plus=extended.plus[1:-1], minus=extended.minus[1:-1])
    at_0 = Weights(x=points[:1], plus=extended.plus[:1], minus=extended.minus[:1])
    at_L = Weights(x=points[-1:], plus=extended.plus[-1:], minus=extended.minus[-1:])
    D_0 = np.concatenate([D_plus[0], D_minus[0]])
    D_L = np.concatenate([D_plus[-1], D_minus[-1]])
    return cells, at_0, at_L, D_0, D_L


def certify(
    system: GalerkinSystem,
    mu_hat: float,
    length: float,
    h_plus: Scaling = 1.0,
    h_minus: Scaling = 1.0,
    optimize_scaling: bool = False,
) -> StabilityCertificate:
    """
    Bundle weights, dissipativity margin, guaranteed decay rate and the
    matrices H and M for a Galerkin system. Boundary speeds are taken from
    the first and last cell.
    """
    _check_mu_hat(mu_hat)
    P = system.modes
    h_plus = _per_mode(h_plus, P, 'h_plus')
    h_minus = _per_mode(h_minus, P, 'h_minus')
    lambda_min = system.lambda_min

    # the weights h enter the boundary estimate through D = diag(sqrt(h))
    dissipativity = dissipativity_check(
        system.B_hat, mu_hat, lambda_min, length, np.sqrt(np.concatenate([h_plus, h_minus]))
    )
    if optimize_scaling:
        proposal = rho2(system.B_hat)
        candidate = dissipativity_check(system.B_hat, mu_hat, lambda_min, length, proposal.scaling)
        if candidate.margin > dissipativity.margin:
            logger.info(f"Using rho2 scaling: margin {dissipativity.margin:.6g} -> {candidate.margin:.6g}")
            h_plus, h_minus = proposal.scaling[:P] ** 2, proposal.scaling[P:] ** 2
            dissipativity = candidate

    cells, at_0, at_L, D_0, D_L = _certificate_pieces(system, mu_hat, length, h_plus, h_minus)
    W = cells.diagonal
    mu = decay_rate(W, system.Q, mu_hat)
    boundary = boundary_matrix_H(system.B_hat, at_0, at_L, D_0, D_L)
    M = lyapunov_matrix_M(W, system.speeds, system.Q, system.grid)

    certificate = StabilityCertificate(
        mu_hat=mu_hat,
        h_plus=h_plus,
        h_minus=h_minus,
        weights=cells,
        lambda_min=lambda_min,
        dissipativity=dissipativity,
        mu=mu,
        boundary=boundary,
        M=M,
        proof_rate=weighted_rate(M, W),
        B_hat_norm=float(svdvals(system.B_hat)[0]),
    )
    if not certificate.valid:
        logger.warning(f"Dissipativity condition fails: margin {certificate.margin:.6g}")
    elif mu <= 0:
        logger.warning(f"Certificate valid but guaranteed rate is not positive: mu = {mu:.6g}")
    else:
        logger.info(f"Certificate valid: margin {certificate.margin:.6g}, mu = {mu:.6g}")
    return certificate
