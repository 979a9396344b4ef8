"""
Orthogonal polynomial chaos bases: univariate families, multi-index sets,
Gaussian quadrature and the triple-product tensors used by Galerkin assembly.

All bases are normalized so that every tensorized polynomial has unit norm
with respect to the underlying probability measure.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from django.db import models
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .exceptions import NumericalError

logger = logging.getLogger(__name__)


class PolynomialFamily(models.TextChoices):
    HERMITE = 'hermite', 'Hermite (probabilists, standard Gaussian)'
    LEGENDRE = 'legendre', 'Legendre (uniform on (-1, 1))'


class IndexSetKind(models.TextChoices):
    TOTAL = 'total', 'Total (every component <= K)'
    SPARSE = 'sparse', 'Sparse (component sum <= K)'


DEFAULT_INDEX_SET_CAP = 10 ** 6


def _index_set_cap() -> int:
    return getattr(settings, 'STABILIZER_INDEX_SET_CAP', DEFAULT_INDEX_SET_CAP)


def index_set_cardinality(M: int, K: int, kind: str) -> int:
    if kind == IndexSetKind.TOTAL:
        return (K + 1) ** M
    return math.comb(M + K, K)


@dataclass(frozen=True)
class MultiIndexSet:
    M: int
    K: int
    kind: str
    indices: Tuple[Tuple[int, ...], ...]
    position: Dict[Tuple[int, ...], int] = field(repr=False, compare=False, hash=False, default_factory=dict)

    def __len__(self):
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int).reshape(len(self.indices), self.M)

    def unit(self, dimension: int) -> int:
        """Position of the first-degree index e_dimension"""
        key = tuple(1 if d == dimension else 0 for d in range(self.M))
        return self.position[key]


def _sparse_indices(M: int, K: int):
    # lexicographic by construction
    if M == 1:
        for k in range(K + 1):
            yield (k,)
        return
    for first in range(K + 1):
        for rest in _sparse_indices(M - 1, K - first):
            yield (first,) + rest


def build_index_set(M: int, K: int, kind: str = IndexSetKind.SPARSE, cap: Optional[int] = None) -> MultiIndexSet:
    """Enumerate a total or sparse multi-index set in lexicographic order"""
    if kind not in IndexSetKind.values:
        raise ValidationError(f"Unknown index set kind '{kind}' (expected one of {', '.join(IndexSetKind.values)})")
    if M < 1:
        raise ValidationError(f"Number of random dimensions must be at least 1, got {M}")
    if K < 0:
        raise ValidationError(f"Truncation order must be non-negative, got {K}")

    cap = _index_set_cap() if cap is None else cap
    cardinality = index_set_cardinality(M, K, kind)
    if cardinality > cap:
        raise ValidationError(
            f"Index set with M={M}, K={K} ({kind}) has {cardinality} elements, exceeding the cap of {cap}"
        )

    if kind == IndexSetKind.TOTAL:
        indices = tuple(itertools.product(range(K + 1), repeat=M))
    else:
        indices = tuple(_sparse_indices(M, K))

    position = {index: i for i, index in enumerate(indices)}
    return MultiIndexSet(M=M, K=K, kind=str(kind), indices=indices, position=position)


def eval_poly(family: str, k: int, xi):
    """Unnormalized recurrence polynomial of degree k evaluated at xi"""
    if k < 0:
        raise ValidationError(f"Polynomial degree must be non-negative, got {k}")
    xi = np.asarray(xi, dtype=float)
    previous = np.ones_like(xi)
    if k == 0:
        return previous if previous.ndim else float(previous)
    current = xi.copy()
    for n in range(1, k):
        if family == PolynomialFamily.HERMITE:
            nxt = xi * current - n * previous
        else:
            nxt = ((2 * n + 1) * xi * current - n * previous) / (n + 1)
        previous, current = current, nxt
    return current if current.ndim else float(current)


def squared_norm(family: str, k: int) -> float:
    if family == PolynomialFamily.HERMITE:
        return float(math.factorial(k))
    return 1.0 / (2 * k + 1)


def gauss_quadrature(family: str, Q: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Golub-Welsch nodes and weights for the family's probability measure.
    Weights sum to one.
    """
    if Q < 1:
        raise ValidationError(f"Quadrature node count must be at least 1, got {Q}")
    if Q == 1:
        return np.zeros(1), np.ones(1)

    k = np.arange(1, Q, dtype=float)
    if family == PolynomialFamily.HERMITE:
        off_diagonal = np.sqrt(k)
    else:
        off_diagonal = k / np.sqrt(4.0 * k ** 2 - 1.0)

    try:
        nodes, vectors = eigh_tridiagonal(np.zeros(Q), off_diagonal)
    except LinAlgError as e:
        raise NumericalError(f"Jacobi matrix eigen-solve failed for {family} with Q={Q}: {e}", family=family, Q=Q)

    weights = vectors[0, :] ** 2
    weights = weights / weights.sum()
    return nodes, weights


def default_node_count(K: int) -> int:
    return math.ceil(1.5 * (K + 1))


def normalized_table(family: str, kmax: int, xi: np.ndarray) -> np.ndarray:
    """Rows are normalized polynomials of degree 0..kmax evaluated at xi"""
    xi = np.asarray(xi, dtype=float)
    table = np.empty((kmax + 1,) + xi.shape)
    for k in range(kmax + 1):
        table[k] = eval_poly(family, k, xi) / math.sqrt(squared_norm(family, k))
    return table


@dataclass(frozen=True)
class GpcBasis:
    families: Tuple[str, ...]
    index_set: MultiIndexSet
    Q: int
    nodes: Tuple[np.ndarray, ...] = field(repr=False, compare=False)
    weights: Tuple[np.ndarray, ...] = field(repr=False, compare=False)
    normalized: bool = True

    @property
    def M(self) -> int:
        return self.index_set.M

    @property
    def K(self) -> int:
        return self.index_set.K

    @property
    def size(self) -> int:
        return len(self.index_set)

    @property
    def is_hermite(self) -> bool:
        return all(f == PolynomialFamily.HERMITE for f in self.families)

    def describe(self) -> Dict[str, str]:
        """Plain-text descriptor as written in a [basis] config block"""
        families = set(self.families)
        return {
            'family': self.families[0] if len(families) == 1 else ', '.join(self.families),
            'dimensions': str(self.M),
            'order': str(self.K),
            'index_set': self.index_set.kind,
            'quadrature_nodes': str(self.Q),
        }


def build_basis(
    families: Union[str, Sequence[str]],
    M: int,
    K: int,
    kind: str = IndexSetKind.SPARSE,
    Q: Optional[int] = None,
) -> GpcBasis:
    if M == 0:
        logger.info("Deterministic basis requested, using M=1, K=0")
        M, K = 1, 0

    if isinstance(families, str):
        families = (families,) * M
    families = tuple(str(f) for f in families)
    if len(families) != M:
        raise ValidationError(f"Expected {M} polynomial families, got {len(families)}")
    for family in families:
        if family not in PolynomialFamily.values:
            raise ValidationError(f"Unknown polynomial family '{family}'")

    minimum = default_node_count(K)
    if Q is None:
        Q = minimum
    elif Q < minimum:
        raise ValidationError(
            f"Quadrature node count {Q} is below {minimum} = ceil(3/2 (K+1)); triple products would be inexact"
        )

    index_set = build_index_set(M, K, kind)
    rules = [gauss_quadrature(family, Q) for family in families]
    basis = GpcBasis(
        families=families,
        index_set=index_set,
        Q=Q,
        nodes=tuple(r[0] for r in rules),
        weights=tuple(r[1] for r in rules),
    )
    logger.info(f"Built {kind} {'/'.join(sorted(set(families)))} basis M={M} K={K} with {basis.size} modes, Q={Q}")
    return basis


def tensor_grid(basis: GpcBasis) -> Tuple[np.ndarray, np.ndarray]:
    """All tensorized quadrature nodes (Q^M, M) with their product weights"""
    nodes = np.array(list(itertools.product(*basis.nodes)), dtype=float).reshape(-1, basis.M)
    weights = np.prod(np.array(list(itertools.product(*basis.weights)), dtype=float).reshape(-1, basis.M), axis=1)
    return nodes, weights


def evaluate_basis(basis: GpcBasis, xi) -> np.ndarray:
    """Normalized tensorized polynomials at sample points, shape (samples, modes)"""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[1] != basis.M:
        raise ValidationError(f"Sample points have {xi.shape[1]} coordinates, basis has M={basis.M}")
    indices = basis.index_set.as_array()
    values = np.ones((xi.shape[0], basis.size))
    for d, family in enumerate(basis.families):
        table = normalized_table(family, basis.K, xi[:, d])
        values *= table[indices[:, d]].T
    return values


def _univariate_triple(family: str, K: int, nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    table = normalized_table(family, K, nodes)
    return np.einsum('q,aq,bq,cq->abc', weights, table, table, table)


def triple_product_tensor(basis: GpcBasis) -> np.ndarray:
    """
    G[k, i, j] = <phi_k, phi_i phi_j> for the normalized basis.

    Computed from the exact univariate Gauss rules and multiplied across
    dimensions, which equals tensorized quadrature for product measures.
    """
    indices = basis.index_set.as_array()
    tensor = np.ones((basis.size,) * 3)
    for d, family in enumerate(basis.families):
        univariate = _univariate_triple(family, basis.K, basis.nodes[d], basis.weights[d])
        column = indices[:, d]
        tensor *= univariate[np.ix_(column, column, column)]
    return tensor


def project_function(f: Callable[[np.ndarray], float], basis: GpcBasis) -> np.ndarray:
    """Modes <f, phi_k> by tensorized quadrature; f receives one node (length M) at a time"""
    nodes, weights = tensor_grid(basis)
    values = np.empty(len(nodes))
    for q, node in enumerate(nodes):
        value = float(f(node))
        if not np.isfinite(value):
            raise ValidationError(f"Function is not finite at quadrature node {tuple(node)}: {value}")
        values[q] = value
    return evaluate_basis(basis, nodes).T @ (weights * values)


def moments(modes) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and variance from modes stored along the last axis"""
    modes = np.asarray(modes, dtype=float)
    return modes[..., 0], np.sum(modes[..., 1:] ** 2, axis=-1)


def reconstruct(modes, basis: GpcBasis, xi) -> np.ndarray:
    """Value of the truncated expansion at realizations xi"""
    return evaluate_basis(basis, xi) @ np.asarray(modes, dtype=float).T


def realizations(modes: np.ndarray, basis: GpcBasis) -> np.ndarray:
    """Mode fields (cells, modes) evaluated at every tensorized node -> (cells, nodes)"""
    nodes, _ = tensor_grid(basis)
    return np.asarray(modes, dtype=float) @ evaluate_basis(basis, nodes).T


def unit_positions(basis: GpcBasis) -> List[int]:
    return [basis.index_set.unit(d) for d in range(basis.M)] if basis.K >= 1 else []
