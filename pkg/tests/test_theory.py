"""Self-consistent solver and full learning-curve formula."""

import numpy as np
import pytest

from kernelcurves.errors import SolverError
from kernelcurves.spectra import (
    Spectrum,
    TargetDecomposition,
    cumulative_power,
    sample_target,
    total_power,
)
from kernelcurves.theory import (
    average_estimator_coeffs,
    generalization_error,
    learning_curve,
    mode_error_ordering_check,
    solve_kappa,
    theory_bias_variance,
)


def bisect_oracle(eta, deg, ridge, p, lo=1e-300, hi=None, iters=200):
    """Independent plain-bisection solve of the fixed-point residual."""
    eta = np.asarray(eta, float)
    deg = np.asarray(deg, float)
    if hi is None:
        hi = ridge + float(deg @ eta)

    def res(k):
        return k - ridge - float(np.sum(deg * k * eta / (k + p * eta)))

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if res(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def random_spectrum_target(rng, max_modes=15):
    n = int(rng.integers(2, max_modes))
    eta = np.sort(rng.random(n) + 1e-4)[::-1]
    w2 = rng.random(n)
    w2[int(rng.integers(0, n))] += 0.5  # keep power clearly positive
    return Spectrum(eta), TargetDecomposition(w2, noise_var=float(rng.random()))


class TestSolveKappa:
    def test_p_zero_closed_form(self):
        s = Spectrum(np.array([0.5, 0.5]))
        kappa, gamma = solve_kappa(s, 0.1, 0.0)
        assert kappa == pytest.approx(1.1, abs=1e-15)
        assert gamma == 0.0

    def test_single_mode_ridgeless_beyond_capacity(self):
        # one mode, P=2: the nonzero root eta*(1-P) is negative, so kappa=0
        s = Spectrum(np.array([0.7]))
        kappa, gamma = solve_kappa(s, 0.0, 2.0)
        assert kappa == 0.0
        assert gamma == pytest.approx(0.5, abs=0)

    def test_matches_independent_bisection(self):
        s = Spectrum(np.array([0.6, 0.3, 0.1]))
        kappa, _ = solve_kappa(s, 0.01, 10.0)
        want = bisect_oracle(s.eigenvalues, s.degeneracies, 0.01, 10.0)
        assert kappa == pytest.approx(want, abs=1e-12)

    def test_residual_bound_on_random_spectra(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            s, _ = random_spectrum_target(rng)
            ridge = float(rng.random() * 0.5)
            p = float(rng.random() * 50)
            kappa, gamma = solve_kappa(s, ridge, p)
            scale = ridge + s.trace()
            res = kappa - ridge - float(
                np.sum(kappa * s.eigenvalues / (kappa + p * s.eigenvalues))
            )
            assert abs(res) < 1e-10 * max(scale, kappa)
            if ridge > 0:
                assert gamma < 1.0

    def test_kappa_decreases_with_p(self):
        s = Spectrum(np.array([0.6, 0.3, 0.1]))
        kappas = [solve_kappa(s, 0.05, p)[0] for p in np.linspace(0, 60, 25)]
        assert np.all(np.diff(kappas) < 0)

    def test_gamma_increases_as_ridge_vanishes(self):
        s = Spectrum(np.full(20, 1.0 / 20))
        gammas = [solve_kappa(s, lam, 10.0)[1] for lam in (0.5, 0.1, 0.01, 0.001)]
        assert np.all(np.diff(gammas) > 0)

    def test_domain_errors(self):
        s = Spectrum(np.array([0.5]))
        with pytest.raises(ValueError):
            solve_kappa(s, -0.1, 1.0)
        with pytest.raises(ValueError):
            solve_kappa(s, 0.1, -1.0)


class TestGeneralizationError:
    def test_p_zero_gives_total_power(self):
        s = Spectrum(np.array([0.6, 0.3, 0.1]))
        t = TargetDecomposition(np.array([1.0, 2.0, 3.0]))
        sol = generalization_error(s, t, 0.2, 0.0)
        assert sol.eg == pytest.approx(total_power(s, t), rel=1e-14)
        assert sol.bias == pytest.approx(sol.eg, rel=1e-14)
        assert sol.variance == pytest.approx(0.0, abs=1e-14)

    def test_flat_spectrum_linear_decay(self):
        n = 64
        s = Spectrum(np.full(n, 1.0 / n))
        t = TargetDecomposition(np.ones(n))
        e0 = generalization_error(s, t, 0.0, 0.0).eg
        for alpha in (0.25, 0.5, 0.75):
            sol = generalization_error(s, t, 0.0, alpha * n)
            assert sol.eg / e0 == pytest.approx(1 - alpha, abs=1e-10)

    def test_divergence_flagged_at_threshold(self):
        n = 32
        s = Spectrum(np.full(n, 1.0 / n))
        t = TargetDecomposition(np.ones(n), noise_var=0.5)
        sol = generalization_error(s, t, 0.0, float(n))
        assert sol.diverged
        assert sol.eg == np.inf
        assert sol.variance == np.inf

    def test_affine_in_noise(self):
        s = Spectrum(np.array([0.6, 0.3, 0.1]))
        p, lam = 7.0, 0.05
        egs = []
        for s2 in (0.0, 0.5, 1.0):
            t = TargetDecomposition(np.array([1.0, 1.0, 1.0]), noise_var=s2)
            egs.append(generalization_error(s, t, lam, p).eg)
        # three-point collinearity
        assert egs[2] - egs[1] == pytest.approx(egs[1] - egs[0], rel=1e-10)
        # the slope is gamma / (1 - gamma)
        _, gamma = solve_kappa(s, lam, p)
        assert (egs[1] - egs[0]) / 0.5 == pytest.approx(gamma / (1 - gamma), rel=1e-10)

    def test_unlearnable_power_acts_as_noise(self):
        s = Spectrum(np.array([0.6, 0.3, 0.1]))
        noisy = TargetDecomposition(np.ones(3), noise_var=0.4)
        tail = TargetDecomposition(np.ones(3), noise_var=0.1, unlearnable_power=0.3)
        a = generalization_error(s, noisy, 0.02, 9.0).eg
        b = generalization_error(s, tail, 0.02, 9.0).eg
        assert a == pytest.approx(b, rel=1e-14)

    def test_bias_variance_identity_random(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            s, t = random_spectrum_target(rng)
            p = float(rng.random() * 40)
            lam = float(rng.random() * 0.5 + 1e-6)
            sol = generalization_error(s, t, lam, p)
            assert sol.eg == pytest.approx(sol.bias + sol.variance, rel=1e-10)
            assert sol.variance >= -1e-12 * sol.eg

    def test_block_form_equals_expanded_form(self):
        s = Spectrum(np.array([0.5, 0.2]), np.array([2, 3]))
        per_mode = TargetDecomposition(np.array([1.0, 0.5, 0.3, 0.2, 0.1]))
        per_block = TargetDecomposition(np.array([1.5, 0.6]))
        for p in (0.0, 3.0, 12.0):
            a = generalization_error(s, per_mode, 0.03, p)
            b = generalization_error(s, per_block, 0.03, p)
            assert a.eg == pytest.approx(b.eg, rel=1e-14)
            assert a.bias == pytest.approx(b.bias, rel=1e-14)

    def test_alignment_lowers_normalized_error(self):
        # same total power; target 1 concentrates power on top modes, so its
        # cumulative power dominates and its normalized error is lower
        s = Spectrum(np.array([0.4, 0.3, 0.2, 0.1]))
        t1 = TargetDecomposition(np.array([2.0, 1.0, 0.5, 0.25]))
        t2 = TargetDecomposition(np.array([0.25, 0.5, 1.0, 2.95]))
        c1, c2 = cumulative_power(s, t1), cumulative_power(s, t2)
        assert np.all(c1 >= c2) and np.any(c1 > c2)
        e1_0 = generalization_error(s, t1, 0.01, 0.0).eg
        e2_0 = generalization_error(s, t2, 0.01, 0.0).eg
        for p in np.linspace(0.5, 30, 20):
            r1 = generalization_error(s, t1, 0.01, p).eg / e1_0
            r2 = generalization_error(s, t2, 0.01, p).eg / e2_0
            assert r1 <= r2 + 1e-12


class TestModeErrors:
    def test_reverse_ordering_on_distinct_spectra(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = int(rng.integers(3, 10))
            eta = np.sort(rng.random(n) + 1e-3)[::-1]
            s = Spectrum(eta)
            assert mode_error_ordering_check(s, 0.05, np.linspace(1, 40, 20))

    def test_equal_eigenvalues_share_errors(self):
        s = Spectrum(np.array([0.5, 0.25]), np.array([3, 2]))
        sol = generalization_error(
            s, TargetDecomposition(np.ones(5)), 0.1, 6.0
        )
        # one error per distinct eigenvalue: blocks are exactly degenerate
        assert sol.mode_errors.shape == (2,)
        assert sol.mode_errors[0] < sol.mode_errors[1]

    def test_p_zero_normalized_to_one(self):
        s = Spectrum(np.array([0.6, 0.4]))
        sol = generalization_error(s, TargetDecomposition(np.ones(2)), 0.1, 0.0)
        assert np.allclose(sol.mode_errors, 1.0, atol=1e-14)


class TestAverageEstimator:
    def test_p_zero_all_zero(self):
        s = Spectrum(np.array([0.6, 0.4]))
        t = TargetDecomposition(np.array([1.0, 4.0]))
        assert np.all(average_estimator_coeffs(s, t, 0.1, 0.0) == 0.0)

    def test_band_limited_ratio_is_alpha(self):
        n = 50
        s = Spectrum(np.full(n, 1.0 / n))
        t = TargetDecomposition(np.ones(n))
        for alpha in (0.2, 0.6):
            coeffs = average_estimator_coeffs(s, t, 0.0, alpha * n)
            assert np.allclose(coeffs, alpha, atol=1e-10)

    def test_monotone_approach_to_target(self):
        s = Spectrum(np.array([0.6, 0.3, 0.1]))
        t = TargetDecomposition(np.array([1.0, 1.0, 1.0]))
        grids = [average_estimator_coeffs(s, t, 0.05, p) for p in (1, 5, 25, 125, 3000)]
        arr = np.array(grids)
        assert np.all(np.diff(arr, axis=0) > 0)
        assert np.all(arr < 1.0)
        assert np.allclose(arr[-1], 1.0, atol=0.01)


class TestTheoryBiasVariance:
    def test_band_limited_closed_forms(self):
        n = 2000
        s = Spectrum(np.full(n, 1.0 / n))
        t = TargetDecomposition(np.ones(n))
        for alpha in (0.25, 0.5, 0.75):
            b, v = theory_bias_variance(s, t, 0.0, alpha * n)
            assert b == pytest.approx((1 - alpha) ** 2, rel=1e-10)
            assert v == pytest.approx(alpha * (1 - alpha), rel=1e-10)

    def test_variance_dominates_near_threshold_with_noise(self):
        n = 500
        s = Spectrum(np.full(n, 1.0 / n))
        t = TargetDecomposition(np.ones(n), noise_var=0.2)
        b, v = theory_bias_variance(s, t, 0.0, 0.9 * n)
        assert v > 10 * b
        b2, v2 = theory_bias_variance(s, t, 0.0, 0.99 * n)
        assert v2 > v  # grows towards the divergence


class TestLearningCurve:
    def test_matches_pointwise_evaluation(self):
        s = Spectrum(np.array([0.6, 0.3, 0.1]))
        t = TargetDecomposition(np.ones(3), noise_var=0.1)
        sols = learning_curve(s, t, 0.05, [0, 2, 8])
        for p, sol in zip([0, 2, 8], sols):
            assert sol.eg == generalization_error(s, t, 0.05, float(p)).eg

    def test_sampled_target_power_consistency(self):
        s = Spectrum(np.array([0.5, 0.3, 0.2]), np.array([2, 2, 2]))
        t = sample_target(s, 3)
        sol = generalization_error(s, t, 0.1, 0.0)
        assert sol.eg == pytest.approx(total_power(s, t), rel=1e-12)
