"""Kernel evaluation, Gram matrices, and the empirical Mercer decomposition."""

import math

import numpy as np
import pytest

from kernelcurves.errors import DataError, NumericalError
from kernelcurves.kernels import (
    DegenerateProjectionError,
    EigenSystem,
    KernelDescriptor,
    cross_gram,
    gram_eigendecompose,
    gram_matrix,
    kernel_eval,
    multiclass_eg,
    nngp_dot_profile,
    ntk_dot_profile,
    project_one_hot,
    project_target,
)


def ntk_recursion_oracle(depth, t, w2=1.0, b2=0.0):
    """Independent scalar transcription of the rectifier NTK recursion."""
    sig = w2 * t + b2
    q = w2 + b2
    theta = sig
    for _ in range(2, depth + 1):
        c = min(1.0, max(-1.0, sig / q))
        ang = math.acos(c)
        sig_next = w2 * q * (math.sin(ang) + (math.pi - ang) * c) / (2 * math.pi) + b2
        sig_dot = w2 * (math.pi - ang) / (2 * math.pi)
        q = w2 * q / 2 + b2
        theta = sig_next + sig_dot * theta
        sig = sig_next
    return theta


class TestDescriptor:
    def test_validation(self):
        with pytest.raises(ValueError):
            KernelDescriptor("laplace")
        with pytest.raises(ValueError):
            KernelDescriptor("rbf")  # missing width
        with pytest.raises(ValueError):
            KernelDescriptor("ntk")  # missing depth
        with pytest.raises(ValueError):
            KernelDescriptor("ntk", depth=2, weight_var=0.0)
        with pytest.raises(ValueError):
            KernelDescriptor("dot_product_poly")


class TestKernelEval:
    def test_rbf_self_similarity(self):
        desc = KernelDescriptor("rbf", width=0.3)
        x = np.array([0.2, -0.4, 0.9])
        assert kernel_eval(desc, x, x) == 1.0

    def test_rbf_symmetry_and_formula(self):
        desc = KernelDescriptor("rbf", width=0.5)
        x = np.array([1.0, 0.0])
        y = np.array([0.0, 1.0])
        want = math.exp(-2.0 / (2 * 2 * 0.25))
        assert kernel_eval(desc, x, y) == pytest.approx(want, rel=1e-15)
        assert kernel_eval(desc, y, x) == kernel_eval(desc, x, y)

    def test_dimension_mismatch(self):
        desc = KernelDescriptor("rbf", width=0.5)
        with pytest.raises(ValueError):
            kernel_eval(desc, np.ones(2), np.ones(3))

    def test_ntk_depth1_is_linear(self):
        desc = KernelDescriptor("ntk", depth=1)
        x = np.array([0.6, 0.8])
        y = np.array([1.0, 0.0])
        assert kernel_eval(desc, x, y) == pytest.approx(0.6, abs=1e-15)


class TestNtkProfile:
    def test_depth1_identity(self):
        t = np.linspace(-1, 1, 21)
        assert np.array_equal(ntk_dot_profile(1, t), t)

    def test_matches_independent_recursion(self):
        for depth in (2, 3, 5):
            for t in (-1.0, -0.3, 0.0, 0.5, 1.0):
                want = ntk_recursion_oracle(depth, t)
                assert ntk_dot_profile(depth, t) == pytest.approx(want, rel=1e-14)
        # with bias
        want = ntk_recursion_oracle(3, 0.4, w2=1.5, b2=0.2)
        assert ntk_dot_profile(3, 0.4, 1.5, 0.2) == pytest.approx(want, rel=1e-14)

    def test_diagonal_closed_form(self):
        # unit-variance bias-free rectifier NTK at t=1 is depth * 2^(1-depth)
        for depth in (1, 2, 3, 4, 6):
            assert ntk_dot_profile(depth, 1.0) == pytest.approx(
                depth * 2.0 ** (1 - depth), rel=1e-14
            )

    def test_monotone_in_t_without_bias(self):
        # the tangent-kernel profile genuinely dips near t = -1 (its derivative
        # factor vanishes at the antipode), so monotonicity only holds away
        # from that corner; the pure arc-cosine profile is monotone throughout
        t = np.linspace(-0.75, 1, 500)
        full = np.linspace(-1, 1, 500)
        for depth in (2, 3, 4):
            assert np.all(np.diff(ntk_dot_profile(depth, t)) > 0)
            assert np.all(np.diff(nngp_dot_profile(depth, full)) > 0)

    def test_nngp_depth1_affine(self):
        assert nngp_dot_profile(1, 0.5, 1.0, 0.25) == pytest.approx(0.75, abs=1e-15)

    def test_invalid_depth(self):
        with pytest.raises(ValueError):
            ntk_dot_profile(0, 0.5)


class TestGramMatrix:
    def test_single_point(self):
        desc = KernelDescriptor("rbf", width=0.2)
        g = gram_matrix(desc, np.array([[0.1, 0.2]]))
        assert g.shape == (1, 1)
        assert g[0, 0] == 1.0

    def test_wide_rbf_all_ones(self):
        desc = KernelDescriptor("rbf", width=1e8)
        rng = np.random.default_rng(0)
        g = gram_matrix(desc, rng.standard_normal((6, 4)))
        assert np.allclose(g, 1.0, atol=1e-12)

    def test_matches_pairwise_eval(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((5, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        for desc in (
            KernelDescriptor("rbf", width=0.7),
            KernelDescriptor("ntk", depth=3),
            KernelDescriptor("dot_product_poly", coefficients=(0.5, 0.2, 0.3)),
        ):
            g = gram_matrix(desc, pts)
            for i in range(5):
                for j in range(5):
                    assert g[i, j] == pytest.approx(
                        kernel_eval(desc, pts[i], pts[j]), abs=1e-12
                    )
            assert np.array_equal(g, g.T)

    def test_cross_gram_consistency(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((6, 3))
        desc = KernelDescriptor("rbf", width=0.9)
        c = cross_gram(desc, a, b)
        assert c.shape == (4, 6)
        for i in range(4):
            for j in range(6):
                assert c[i, j] == pytest.approx(kernel_eval(desc, a[i], b[j]), abs=1e-12)


class TestEigendecompose:
    def test_identity_gram(self):
        eig = gram_eigendecompose(np.eye(4))
        assert np.allclose(eig.eigenvalues, 0.25, atol=0)
        assert np.allclose(eig.eigenvectors.T @ eig.eigenvectors / 4, np.eye(4), atol=1e-12)

    def test_rank_one(self):
        v = np.array([1.0, 2.0, 2.0])
        eig = gram_eigendecompose(np.outer(v, v))
        assert eig.eigenvalues[0] == pytest.approx(9.0 / 3.0, rel=1e-14)
        assert np.allclose(eig.eigenvalues[1:], 0.0, atol=1e-12)

    def test_hand_solved_2x2(self):
        eig = gram_eigendecompose(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert np.allclose(eig.eigenvalues, [1.5, 0.5], atol=1e-14)

    def test_invariants_on_random_gram(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((40, 6))
        g = gram_matrix(KernelDescriptor("rbf", width=0.8), pts)
        eig = gram_eigendecompose(g)
        m = 40
        assert np.allclose(eig.eigenvectors.T @ eig.eigenvectors / m, np.eye(m), atol=1e-8)
        recon = eig.eigenvectors @ np.diag(eig.eigenvalues) @ eig.eigenvectors.T
        assert np.linalg.norm(recon - g, 2) < 1e-6 * np.linalg.norm(g, 2)
        assert np.all(eig.eigenvalues >= 0)
        assert np.all(np.diff(eig.eigenvalues) <= 0)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            gram_eigendecompose(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_indefinite_rejected(self):
        with pytest.raises(NumericalError):
            gram_eigendecompose(np.array([[1.0, 0.0], [0.0, -1.0]]))


class TestProjection:
    def make_eigsys(self, m=50, seed=4):
        rng = np.random.default_rng(seed)
        pts = rng.standard_normal((m, 5))
        g = gram_matrix(KernelDescriptor("rbf", width=0.8), pts)
        return gram_eigendecompose(g), rng

    def test_pure_mode_recovers_unit_weight(self):
        eigsys, _ = self.make_eigsys()
        k = 3
        y = np.sqrt(eigsys.eigenvalues[k]) * eigsys.eigenvectors[:, k]
        t = project_target(eigsys, y)
        want = np.zeros(50)
        want[k] = 1.0
        assert np.allclose(t.weights_sq, want, atol=1e-10)

    def test_parseval_random_labels(self):
        eigsys, rng = self.make_eigsys()
        y = rng.standard_normal(50)
        t = project_target(eigsys, y)
        learned = float(eigsys.eigenvalues @ t.weights_sq) + t.unlearnable_power
        assert learned == pytest.approx(float(y @ y) / 50, abs=1e-8)

    def test_one_hot_total_power_is_one(self):
        eigsys, rng = self.make_eigsys()
        labels = rng.integers(0, 3, size=50)
        onehot = (labels[:, None] == np.arange(3)[None, :]).astype(float)
        t = project_one_hot(eigsys, onehot)
        total = float(eigsys.eigenvalues @ t.weights_sq) + t.unlearnable_power
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_null_modes_route_to_unlearnable(self):
        # rank-1 gram: anything orthogonal to the range is unlearnable power
        v = np.array([1.0, -1.0, 0.0])
        eigsys = gram_eigendecompose(np.outer(v, v))
        y = np.array([1.0, 1.0, 1.0])  # orthogonal to v
        t = project_target(eigsys, y)
        assert np.allclose(t.weights_sq, 0.0, atol=1e-12)
        assert t.unlearnable_power == pytest.approx(1.0, abs=1e-12)

    def test_all_null_rejected(self):
        eigsys = EigenSystem(
            eigenvalues=np.zeros(2), eigenvectors=np.eye(2) * np.sqrt(2), sample_count=2
        )
        with pytest.raises(DegenerateProjectionError):
            project_target(eigsys, np.ones(2))

    def test_wrong_length_rejected(self):
        eigsys, _ = self.make_eigsys()
        with pytest.raises(ValueError):
            project_target(eigsys, np.ones(49))


class TestMulticlass:
    def test_single_channel_matches_projection(self):
        rng = np.random.default_rng(6)
        pts = rng.standard_normal((30, 4))
        eigsys = gram_eigendecompose(gram_matrix(KernelDescriptor("rbf", width=0.8), pts))
        y = rng.standard_normal(30)
        from kernelcurves.theory import generalization_error

        t = project_target(eigsys, y)
        p_grid = [5, 10, 20]
        single = np.array(
            [
                generalization_error(eigsys.spectrum(), t, 0.01, float(p)).eg
                for p in p_grid
            ]
        )
        curve = multiclass_eg(eigsys, y[:, None], 0.01, p_grid)
        assert np.allclose(curve, single, rtol=1e-12)

    def test_duplicated_channel_doubles_curve(self):
        rng = np.random.default_rng(7)
        pts = rng.standard_normal((30, 4))
        eigsys = gram_eigendecompose(gram_matrix(KernelDescriptor("rbf", width=0.8), pts))
        y = rng.standard_normal(30)
        one = multiclass_eg(eigsys, y[:, None], 0.05, [4, 12])
        two = multiclass_eg(eigsys, np.column_stack([y, y]), 0.05, [4, 12])
        assert np.allclose(two, 2 * one, rtol=1e-12)


class TestGramErrors:
    def test_nonfinite_kernel_value(self):
        desc = KernelDescriptor("dot_product_poly", coefficients=(0.0, 1e308, 1e308))
        pts = np.full((2, 2), 1e4)
        with np.errstate(over="ignore"), pytest.raises(DataError):
            gram_matrix(desc, pts)
