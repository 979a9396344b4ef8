import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from .galerkin import (
    RandomSystemSpec,
    assemble_Q,
    assemble_system,
    check_hyperbolicity,
    diagonalize,
    galerkin_matrix,
    source_matrix,
    transform_boundary,
)
from .gpc import IndexSetKind, PolynomialFamily, build_basis, realizations, triple_product_tensor


def random_speeds(basis, grid, rng, mean=2.0, amplitude=0.3):
    """Degree-one random speed field that stays positive at every quadrature node"""
    modes = np.zeros((len(grid), basis.size))
    modes[:, 0] = mean + 0.1 * grid
    for d in range(basis.M):
        modes[:, basis.index_set.unit(d)] = amplitude * rng.uniform(-1, 1) * np.cos((d + 1) * np.pi * grid)
    return modes


def make_spec(basis, cells=8, speed_plus=None, speed_minus=None, source=None, boundary=None):
    grid = (np.arange(cells) + 0.5) / cells
    if speed_plus is None:
        speed_plus = np.zeros((cells, basis.size))
        speed_plus[:, 0] = 1.5
    if speed_minus is None:
        speed_minus = np.zeros((cells, basis.size))
        speed_minus[:, 0] = -2.5
    if source is None:
        source = np.zeros((cells, 2, 2, basis.size))
    if boundary is None:
        boundary = np.array([[0.0, 0.5], [0.5, 0.0]])
    return RandomSystemSpec(
        length=1.0,
        grid=grid,
        basis=basis,
        speed_plus=speed_plus,
        speed_minus=speed_minus,
        source=source,
        boundary=boundary,
    )


class GalerkinMatrixTest(SimpleTestCase):
    def setUp(self):
        self.basis = build_basis(PolynomialFamily.HERMITE, 2, 2, IndexSetKind.SPARSE)
        self.tensor = triple_product_tensor(self.basis)

    def test_constant_field_is_scaled_identity(self):
        modes = np.zeros((3, self.basis.size))
        modes[:, 0] = 4.0
        matrices = galerkin_matrix(modes, self.tensor)
        for matrix in matrices:
            np.testing.assert_allclose(matrix, 4.0 * np.eye(self.basis.size), atol=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        modes = rng.normal(size=(4, self.basis.size))
        matrices = galerkin_matrix(modes, self.tensor, share=False)
        np.testing.assert_allclose(matrices, np.transpose(matrices, (0, 2, 1)), atol=1e-12)

    def test_shared_matches_per_cell(self):
        modes = np.tile(np.linspace(1, 2, self.basis.size), (5, 1))
        np.testing.assert_allclose(galerkin_matrix(modes, self.tensor, share=True), galerkin_matrix(modes, self.tensor, share=False))

    def test_source_blocks(self):
        source = np.zeros((2, 2, 2, self.basis.size))
        source[:, 0, 1, 0] = 3.0
        matrix = source_matrix(source, self.tensor)
        P = self.basis.size
        np.testing.assert_allclose(matrix[:, :P, P:], np.broadcast_to(3.0 * np.eye(P), (2, P, P)), atol=1e-12)
        np.testing.assert_allclose(matrix[:, P:, :P], 0.0)


class DiagonalizeTest(SimpleTestCase):
    def test_already_diagonal_gives_permutation(self):
        blocks = np.array([np.diag([3.0, 1.0, 2.0])] * 2)
        T, D = diagonalize(blocks)
        np.testing.assert_array_equal(D[0], [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(T[0], np.eye(3)[:, [1, 2, 0]])

    def test_reconstruction_and_sign_convention(self):
        rng = np.random.default_rng(7)
        raw = rng.normal(size=(3, 4, 4))
        blocks = raw + np.transpose(raw, (0, 2, 1))
        T, D = diagonalize(blocks, share=False)
        for block, vectors, values in zip(blocks, T, D):
            np.testing.assert_allclose(vectors @ np.diag(values) @ vectors.T, block, atol=1e-12)
            np.testing.assert_allclose(vectors.T @ vectors, np.eye(4), atol=1e-12)
            self.assertTrue(np.all(np.diff(values) >= 0))
            largest = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(4)]
            self.assertTrue(np.all(largest > 0))

    def test_repeated_eigenvalues_follow_previous_cell(self):
        """A double eigenvalue keeps the same eigenspace basis from cell to cell"""
        rng = np.random.default_rng(13)
        U, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        grid = np.linspace(0.0, 1.0, 12)
        blocks = np.array([U @ np.diag([1.0, 1.0, 3.0 + x, 5.0 + 2 * x]) @ U.T for x in grid])
        T, D = diagonalize(blocks, share=False)
        for block, vectors, values in zip(blocks, T, D):
            np.testing.assert_allclose(vectors @ np.diag(values) @ vectors.T, block, atol=1e-12)
            np.testing.assert_allclose(values[:2], 1.0, atol=1e-12)
        for previous, current in zip(T[:-1], T[1:]):
            np.testing.assert_allclose(previous[:, :2].T @ current[:, :2], np.eye(2), atol=1e-10)
        # no jump in the eigenvectors, so no spurious dT/dx
        derivative = np.gradient(T, grid, axis=0)
        self.assertLess(np.abs(derivative[:, :, :2]).max(), 1e-8)


class HyperbolicityTest(SimpleTestCase):
    def test_random_fields_stay_in_node_range(self):
        """Galerkin eigenvalues lie within the extremes of the node evaluations"""
        basis = build_basis(PolynomialFamily.HERMITE, 2, 2, IndexSetKind.SPARSE)
        tensor = triple_product_tensor(basis)
        grid = np.linspace(0.05, 0.95, 6)
        rng = np.random.default_rng(2024)
        for _ in range(50):
            modes = random_speeds(basis, grid, rng)
            nodes = realizations(modes, basis)
            self.assertTrue(np.all(nodes > 0))
            _, D = diagonalize(galerkin_matrix(modes, tensor, share=False), share=False)
            self.assertTrue(np.all(D > 0))
            self.assertTrue(np.all(D >= nodes.min(axis=1, keepdims=True) - 1e-10))
            self.assertTrue(np.all(D <= nodes.max(axis=1, keepdims=True) + 1e-10))

    def test_report(self):
        basis = build_basis(PolynomialFamily.HERMITE, 1, 1)
        plus = np.array([[2.0, 0.1]])
        minus = np.array([[-3.0, 0.2]])
        report = check_hyperbolicity(plus, minus, basis)
        self.assertTrue(report.passed)
        # three nodes: 0 and +-sqrt(3)
        self.assertAlmostEqual(report.plus_min, 2.0 - 0.1 * np.sqrt(3), places=12)
        self.assertAlmostEqual(report.minus_max, -3.0 + 0.2 * np.sqrt(3), places=12)
        self.assertAlmostEqual(report.lambda_min, 2.0 - 0.1 * np.sqrt(3), places=12)
        self.assertIn('hyperbolicity = PASS', report.as_text())

    def test_violating_field_rejected_before_assembly(self):
        basis = build_basis(PolynomialFamily.HERMITE, 1, 2)
        speed_plus = np.zeros((8, basis.size))
        speed_plus[:, 0] = 0.5
        speed_plus[:, 1] = 1.0
        with self.assertRaises(ValidationError):
            make_spec(basis, speed_plus=speed_plus)

    def test_shape_mismatch(self):
        basis = build_basis(PolynomialFamily.HERMITE, 1, 2)
        with self.assertRaises(ValidationError):
            make_spec(basis, boundary=np.eye(3))


class AssemblyTest(SimpleTestCase):
    def setUp(self):
        self.basis = build_basis(PolynomialFamily.HERMITE, 2, 2, IndexSetKind.SPARSE)

    def test_deterministic_speeds(self):
        system = assemble_system(make_spec(self.basis))
        P = self.basis.size
        self.assertTrue(system.shared)
        np.testing.assert_allclose(system.D_plus, 1.5)
        np.testing.assert_allclose(system.D_minus, -2.5)
        self.assertAlmostEqual(system.lambda_min, 1.5)
        self.assertAlmostEqual(system.lambda_max, 2.5)
        np.testing.assert_allclose(system.T[0], np.eye(2 * P))
        np.testing.assert_allclose(system.B_hat, np.kron([[0.0, 0.5], [0.5, 0.0]], np.eye(P)), atol=1e-14)
        np.testing.assert_allclose(system.Q, 0.0)
        self.assertEqual(system.speeds.shape, (8, 2 * P))
        self.assertIn('modes = 6', system.summary())

    def test_source_with_constant_transform(self):
        P = self.basis.size
        source = np.zeros((8, 2, 2, P))
        source[:, :, :, 0] = -0.7
        system = assemble_system(make_spec(self.basis, source=source))
        expected = -0.7 * np.kron(np.ones((2, 2)), np.eye(P))
        np.testing.assert_allclose(system.Q, np.broadcast_to(expected, system.Q.shape), atol=1e-12)

    def test_random_speeds(self):
        rng = np.random.default_rng(11)
        grid = (np.arange(8) + 0.5) / 8
        speed_plus = random_speeds(self.basis, grid, rng)
        system = assemble_system(make_spec(self.basis, speed_plus=speed_plus))
        self.assertFalse(system.shared)
        for cell in range(8):
            np.testing.assert_allclose(
                system.T_plus[cell] @ np.diag(system.D_plus[cell]) @ system.T_plus[cell].T, system.A_plus[cell], atol=1e-12
            )
        self.assertTrue(np.all(system.D_plus > 0))
        self.assertAlmostEqual(system.lambda_min, min(system.D_plus.min(), 2.5), places=12)

    def test_q_includes_transform_derivative(self):
        """A rotating transform contributes D T^T dT/dx"""
        x = np.linspace(0, 1, 41)
        angle = 0.3 * x
        T = np.zeros((41, 2, 2))
        T[:, 0, 0] = np.cos(angle)
        T[:, 0, 1] = -np.sin(angle)
        T[:, 1, 0] = np.sin(angle)
        T[:, 1, 1] = np.cos(angle)
        D = np.tile([1.0, 2.0], (41, 1))
        Q = assemble_Q(T, np.zeros((41, 2, 2)), D, x)
        # T^T dT/dx = 0.3 [[0, -1], [1, 0]]
        expected = np.array([[0.0, -0.3], [0.6, 0.0]])
        np.testing.assert_allclose(Q[20], expected, atol=1e-4)

    def test_transform_boundary_identity(self):
        P = 3
        B = np.array([[0.1, 0.2], [0.3, 0.4]])
        identity = np.eye(P)
        np.testing.assert_allclose(transform_boundary(B, identity, identity, identity, identity), np.kron(B, identity))

    def test_transform_boundary_blocks(self):
        rng = np.random.default_rng(5)
        blocks = [np.linalg.qr(rng.normal(size=(2, 2)))[0] for _ in range(4)]
        Tp0, TpL, Tm0, TmL = blocks
        B = np.array([[0.0, 0.9], [0.9, 0.0]])
        B_hat = transform_boundary(B, Tp0, TpL, Tm0, TmL)
        # plus enters at 0 from the minus outflow at 0
        np.testing.assert_allclose(B_hat[:2, 2:], 0.9 * Tp0.T @ Tm0, atol=1e-14)
        np.testing.assert_allclose(B_hat[2:, :2], 0.9 * TmL.T @ TpL, atol=1e-14)
