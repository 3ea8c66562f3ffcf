"""Monte Carlo kernel ridge regression experiments and theory alignment.

A plan fixes the kernel, data source, target, ridge, noise level, sample-size
grid, trial count, and base seed. Running it produces per-P empirical
generalization error (mean and std over trials), a bias/variance split from
pointwise trial statistics on a shared test set, and optionally an aligned
table against the analytic learning curve.

Error is always measured against the noise-free target. For continuous
sources the test measure is a fixed held-out sample (shared across trials so
the trial-mean estimator can be evaluated pointwise); for dataset sources it
is the full empirical measure over the pool, training points included.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import eval_gegenbauer

from .errors import DataError, NumericalError
from .kernels import (
    KernelDescriptor,
    cross_gram,
    eigensystem_from_data,
    dot_product_spectrum,
    gram_matrix,
    project_target,
    sphere_profile,
)
from .spectra import Spectrum, TargetDecomposition, degeneracy
from .theory import generalization_error

PSEUDOINVERSE_RTOL = 1e-10
JITTER_START = 1e-12
JITTER_STOP = 1e-8
FAILURE_CAP = 0.10

# entropy tags appended to the base seed so the test set, the target, and the
# trials draw from disjoint deterministic streams
_TEST_STREAM = 1
_TARGET_STREAM = 2
_TRIAL_STREAM = 3


@dataclass(frozen=True)
class DataSource:
    """Where training/test inputs come from.

    kind "sphere_uniform": uniform points on S^(dim-1).
    kind "gaussian_features": standard normal points in dim coordinates.
    kind "dataset_file": a fixed pool of points given as an array.
    """

    kind: str
    dim: int = 0
    pool: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("sphere_uniform", "gaussian_features", "dataset_file"):
            raise ValueError(f"unknown data source kind {self.kind!r}")
        if self.kind == "dataset_file":
            if self.pool is None:
                raise ValueError("dataset source needs a point pool")
            pool = np.asarray(self.pool, dtype=float)
            if pool.ndim != 2 or pool.shape[0] < 2:
                raise ValueError("pool must be a 2-d array with at least 2 rows")
            object.__setattr__(self, "pool", pool)
            object.__setattr__(self, "dim", pool.shape[1])
        elif self.dim < 2:
            raise ValueError("continuous sources need dim >= 2")


@dataclass(frozen=True)
class TargetSource:
    """Noise-free target choice.

    kind "gegenbauer_mode": scale * Q_k(beta . x) with a seeded direction beta.
    kind "sampled_synthetic": seeded random target with a known decomposition
        (linear combination of coordinates for gaussian features, a mixture of
        Gegenbauer modes of the listed degrees for sphere sources).
    kind "projected_labels": labels supplied with a dataset pool.
    """

    kind: str
    degree: int = 0
    scale: float = 1.0
    direction_seed: int = 0
    degrees: tuple[int, ...] = (0, 1, 2, 3)
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("gegenbauer_mode", "sampled_synthetic", "projected_labels"):
            raise ValueError(f"unknown target source kind {self.kind!r}")
        if self.kind == "gegenbauer_mode" and self.degree < 0:
            raise ValueError("harmonic degree must be >= 0")
        if self.kind == "projected_labels":
            if self.labels is None:
                raise ValueError("projected_labels needs a label vector")
            labels = np.asarray(self.labels, dtype=float)
            if labels.ndim != 1:
                raise ValueError("labels must be 1-d")
            object.__setattr__(self, "labels", labels)
        degrees = tuple(int(d) for d in self.degrees)
        if len(set(degrees)) != len(degrees):
            # repeated degrees with independent directions would have nonzero
            # cross-correlation, breaking the analytic power bookkeeping
            raise ValueError("synthetic target degrees must be distinct")
        object.__setattr__(self, "degrees", degrees)


@dataclass(frozen=True)
class ExperimentPlan:
    kernel: KernelDescriptor
    data_source: DataSource
    target_source: TargetSource
    ridge: float
    noise_var: float
    p_grid: tuple[int, ...]
    trials: int
    base_seed: int
    test_size: int = 10_000

    def __post_init__(self):
        grid = tuple(int(p) for p in self.p_grid)
        if len(grid) == 0 or any(p < 1 for p in grid):
            raise ValueError("P grid must contain positive sample sizes")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("P grid must be strictly increasing")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.ridge < 0 or self.noise_var < 0:
            raise ValueError("ridge and noise variance must be nonnegative")
        if self.data_source.kind == "dataset_file":
            if grid[-1] > self.data_source.pool.shape[0]:
                raise ValueError("P grid exceeds the dataset pool size")
            if self.target_source.kind == "projected_labels":
                if self.target_source.labels.size != self.data_source.pool.shape[0]:
                    raise ValueError("labels must match the pool size")
        elif self.test_size < 2:
            raise ValueError("continuous sources need test_size >= 2")
        object.__setattr__(self, "p_grid", grid)


@dataclass(frozen=True)
class TrialReport:
    """Per-P Monte Carlo aggregates over successful trials."""

    p_grid: tuple[int, ...]
    eg_mean: np.ndarray
    eg_std: np.ndarray
    bias: np.ndarray
    variance: np.ndarray
    trial_counts: np.ndarray
    failures: np.ndarray
    base_seed: int
    wall_time: float


def sample_sphere(dim: int, count: int, seed) -> np.ndarray:
    """Uniform points on the unit sphere S^(dim-1), unit norm to 1e-12."""
    if dim < 2:
        raise ValueError("dimension must be >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = rng.standard_normal((count, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x


def gegenbauer_target(dim: int, degree: int, direction_seed: int, scale: float = 1.0):
    """Target handle x -> scale * Q_degree(beta . x), Q normalized to Q(1) = 1,
    with beta a seeded uniform direction on the sphere."""
    if dim < 3:
        raise ValueError("dimension must be >= 3")
    if degree < 0:
        raise ValueError("degree must be >= 0")
    beta = sample_sphere(dim, 1, direction_seed)[0]
    alpha = (dim - 2) / 2.0
    norm = eval_gegenbauer(degree, alpha, 1.0)

    def target(points):
        t = np.asarray(points, dtype=float) @ beta
        return scale * eval_gegenbauer(degree, alpha, t) / norm

    return target


def krr_fit_predict(kernel: KernelDescriptor, train_x, train_y, ridge: float, test_x):
    """Kernel ridge predictions k(x)^T (K + ridge I)^(-1) y on the test points.

    ridge = 0 uses an eigendecomposition pseudoinverse with relative cutoff
    1e-10 (interpolation limit); ridge > 0 uses a Cholesky solve with jitter
    escalation before giving up.
    """
    train_x = np.asarray(train_x, dtype=float)
    train_y = np.asarray(train_y, dtype=float)
    if train_x.ndim != 2 or train_x.shape[0] < 1:
        raise ValueError("need at least one training point")
    if train_y.shape[0] != train_x.shape[0]:
        raise ValueError("labels must match training points")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    gram = gram_matrix(kernel, train_x)
    coeff = _solve_regularized(gram, train_y, ridge)
    return cross_gram(kernel, np.asarray(test_x, dtype=float), train_x) @ coeff


def _solve_regularized(gram: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    n = gram.shape[0]
    if ridge == 0.0:
        vals, vecs = np.linalg.eigh(gram)
        cutoff = PSEUDOINVERSE_RTOL * max(vals[-1], 0.0)
        keep = vals > cutoff
        if not keep.any():
            raise NumericalError("gram is numerically zero; cannot interpolate")
        return vecs[:, keep] @ ((vecs[:, keep].T @ y) / vals[keep])
    scale = max(float(np.trace(gram)) / n, 1.0)
    jitter = 0.0
    while True:
        try:
            factor = cho_factor(gram + (ridge + jitter * scale) * np.eye(n), lower=True)
            return cho_solve(factor, y)
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 100.0
            if jitter > JITTER_STOP:
                raise NumericalError(
                    f"regularized solve failed at jitter budget {JITTER_STOP:g} "
                    f"(n={n}, ridge={ridge:g})"
                )


def _resolve_test_measure(plan: ExperimentPlan):
    """(test points, noise-free test targets, target handle or None)."""
    src, tgt = plan.data_source, plan.target_source
    if src.kind == "dataset_file":
        if tgt.kind != "projected_labels":
            raise ValueError("dataset sources use projected labels as the target")
        return src.pool, tgt.labels, None
    rng = np.random.default_rng(np.random.SeedSequence((plan.base_seed, _TEST_STREAM)))
    if src.kind == "sphere_uniform":
        test_x = sample_sphere(src.dim, plan.test_size, rng)
    else:
        test_x = rng.standard_normal((plan.test_size, src.dim))
        # whiten so the empirical test covariance is exactly the identity;
        # otherwise its O(1/sqrt(test_size)) deviation biases every trial the
        # same way and overwhelms the standard error of the trial mean
        if plan.test_size > src.dim:
            cov = test_x.T @ test_x / plan.test_size
            vals, vecs = np.linalg.eigh(cov)
            test_x = test_x @ (vecs / np.sqrt(vals)) @ vecs.T
    target = _resolve_target(plan)
    return test_x, target(test_x), target


def _resolve_target(plan: ExperimentPlan):
    src, tgt = plan.data_source, plan.target_source
    if tgt.kind == "gegenbauer_mode":
        if src.kind != "sphere_uniform":
            raise ValueError("gegenbauer targets need a sphere source")
        return gegenbauer_target(src.dim, tgt.degree, tgt.direction_seed, tgt.scale)
    if tgt.kind != "sampled_synthetic":
        raise ValueError(f"target kind {tgt.kind!r} has no function form")
    rng = np.random.default_rng(np.random.SeedSequence((plan.base_seed, _TARGET_STREAM)))
    if src.kind == "gaussian_features":
        # linear target sum_i a_i x_i with unit expected total power
        coeffs = rng.standard_normal(src.dim) / np.sqrt(src.dim)

        def target(points):
            return np.asarray(points, dtype=float) @ coeffs

        target.coefficients = coeffs
        return target
    # sphere source: seeded mixture of Gegenbauer modes of the listed degrees
    scales = rng.standard_normal(len(tgt.degrees))
    modes = [
        gegenbauer_target(src.dim, k, tgt.direction_seed + 1000 * j, float(c))
        for j, (k, c) in enumerate(zip(tgt.degrees, scales))
    ]

    def target(points):
        return sum(mode(points) for mode in modes)

    target.mode_scales = scales
    return target


def _draw_training(plan: ExperimentPlan, p: int, rng):
    src = plan.data_source
    if src.kind == "sphere_uniform":
        return sample_sphere(src.dim, p, rng), None
    if src.kind == "gaussian_features":
        return rng.standard_normal((p, src.dim)), None
    idx = rng.choice(src.pool.shape[0], size=p, replace=False)
    return src.pool[idx], idx


def _run_one_trial(plan, p, trial, test_x, test_f, target):
    rng = np.random.default_rng(
        np.random.SeedSequence((plan.base_seed, _TRIAL_STREAM, p, trial))
    )
    train_x, idx = _draw_training(plan, p, rng)
    train_f = test_f[idx] if idx is not None else target(train_x)
    train_y = train_f
    if plan.noise_var > 0:
        train_y = train_f + np.sqrt(plan.noise_var) * rng.standard_normal(p)
    pred = krr_fit_predict(plan.kernel, train_x, train_y, plan.ridge, test_x)
    return pred


def run_trials(plan: ExperimentPlan, threads: int = 1) -> TrialReport:
    """Execute the plan. Deterministic given base_seed regardless of threads;
    per-trial numerical failures are excluded and counted, and more than 10%
    failures abort the run."""
    start = time.perf_counter()
    test_x, test_f, target = _resolve_test_measure(plan)
    n_p = len(plan.p_grid)
    eg_mean = np.empty(n_p)
    eg_std = np.empty(n_p)
    bias = np.empty(n_p)
    variance = np.empty(n_p)
    counts = np.zeros(n_p, dtype=np.int64)
    failures = np.zeros(n_p, dtype=np.int64)

    def job(args):
        p, t = args
        try:
            return _run_one_trial(plan, p, t, test_x, test_f, target)
        except NumericalError:
            return None

    for i, p in enumerate(plan.p_grid):
        work = [(p, t) for t in range(plan.trials)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                preds = list(pool.map(job, work))
        else:
            preds = [job(w) for w in work]
        # fold in trial order for reproducible floating-point sums
        egs = []
        pred_sum = np.zeros(test_f.size)
        pred_sq_sum = np.zeros(test_f.size)
        for pred in preds:
            if pred is None:
                failures[i] += 1
                continue
            egs.append(float(np.mean((pred - test_f) ** 2)))
            pred_sum += pred
            pred_sq_sum += pred**2
        n_ok = len(egs)
        counts[i] = n_ok
        if n_ok == 0:
            eg_mean[i] = eg_std[i] = bias[i] = variance[i] = np.nan
            continue
        egs = np.array(egs)
        eg_mean[i] = egs.mean()
        eg_std[i] = egs.std(ddof=1) if n_ok > 1 else 0.0
        mean_pred = pred_sum / n_ok
        bias[i] = float(np.mean((mean_pred - test_f) ** 2))
        if n_ok > 1:
            # unbiased per-point variance over trials, averaged over the test measure
            var_point = (pred_sq_sum - n_ok * mean_pred**2) / (n_ok - 1)
            variance[i] = float(np.mean(np.maximum(var_point, 0.0)))
        else:
            variance[i] = 0.0

    total = plan.trials * n_p
    if failures.sum() > FAILURE_CAP * total:
        raise NumericalError(
            f"{int(failures.sum())} of {total} trials failed, above the "
            f"{FAILURE_CAP:.0%} cap"
        )
    return TrialReport(
        p_grid=plan.p_grid,
        eg_mean=eg_mean,
        eg_std=eg_std,
        bias=bias,
        variance=variance,
        trial_counts=counts,
        failures=failures,
        base_seed=plan.base_seed,
        wall_time=time.perf_counter() - start,
    )


def empirical_bias_variance(plan: ExperimentPlan, threads: int = 1):
    """Per-P (bias, variance) estimates from pointwise trial statistics."""
    if plan.trials < 2:
        raise ValueError("bias/variance estimation needs at least 2 trials")
    report = run_trials(plan, threads=threads)
    return report.bias, report.variance


def resolve_theory(plan: ExperimentPlan, k_max: int = 40):
    """(Spectrum, TargetDecomposition) matching the plan's kernel and target.

    gaussian_features: flat spectrum 1/dim over dim modes, linear target.
    sphere sources: quadrature spectrum of the kernel's dot-product profile,
    with per-degree target power scale^2 / N(dim, k).
    dataset sources: empirical Mercer decomposition of the pool Gram with the
    labels projected onto it.
    """
    src, tgt = plan.data_source, plan.target_source
    if src.kind == "dataset_file":
        eigsys = eigensystem_from_data(plan.kernel, src.pool)
        target = project_target(eigsys, tgt.labels)
        target = TargetDecomposition(
            target.weights_sq, noise_var=plan.noise_var,
            unlearnable_power=target.unlearnable_power,
        )
        return eigsys.spectrum(), target
    if src.kind == "gaussian_features":
        if tgt.kind != "sampled_synthetic":
            raise ValueError("gaussian features use sampled synthetic targets")
        spectrum = Spectrum(np.array([1.0 / src.dim]), np.array([src.dim]))
        coeffs = _resolve_target(plan).coefficients
        # block weight sum: power / eta = |a|^2 * dim
        weights = np.array([float(coeffs @ coeffs) * src.dim])
        return spectrum, TargetDecomposition(weights, noise_var=plan.noise_var)
    profile = sphere_profile(plan.kernel, src.dim)
    spectrum, order = dot_product_spectrum(profile, src.dim, k_max)
    if tgt.kind == "gegenbauer_mode":
        mode_power = {tgt.degree: tgt.scale**2}
    else:
        scales = _resolve_target(plan).mode_scales
        mode_power = {}
        for k, c in zip(tgt.degrees, scales):
            mode_power[k] = mode_power.get(k, 0.0) + float(c) ** 2
    if max(mode_power) > k_max:
        raise ValueError("target degree exceeds the computed spectrum cutoff")
    weights = np.zeros(spectrum.block_count)
    unlearnable = 0.0
    for k, power in mode_power.items():
        # E[Q_k(beta.x)^2] = 1 / N(dim, k), so the block power is power / N
        block_power = power / degeneracy(src.dim, k)
        j = int(np.where(order == k)[0][0])
        eta = spectrum.eigenvalues[j]
        if eta > 0:
            weights[j] += block_power / eta / spectrum.degeneracies[j]
        else:
            unlearnable += block_power
    # block-form target stores the summed weight of the whole block
    weights = weights * np.asarray(spectrum.degeneracies, dtype=float)
    return spectrum, TargetDecomposition(
        weights, noise_var=plan.noise_var, unlearnable_power=unlearnable
    )


@dataclass(frozen=True)
class AlignedReport:
    """Theory curve and Monte Carlo estimates on the same P grid."""

    p_grid: tuple[int, ...]
    eg_theory: np.ndarray
    eg_emp_mean: np.ndarray
    eg_emp_std: np.ndarray
    bias_emp: np.ndarray
    variance_emp: np.ndarray
    z_score: np.ndarray
    failures: np.ndarray
    trial_counts: np.ndarray


def theory_experiment_report(plan: ExperimentPlan, threads: int = 1, k_max: int = 40):
    """Run the plan and align it with the analytic learning curve.

    The z-score is (theory - empirical mean) / standard error of the mean.
    """
    spectrum, target = resolve_theory(plan, k_max=k_max)
    report = run_trials(plan, threads=threads)
    theory = np.array(
        [
            generalization_error(spectrum, target, plan.ridge, float(p)).eg
            for p in plan.p_grid
        ]
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        sem = report.eg_std / np.sqrt(np.maximum(report.trial_counts, 1))
        z = np.where(sem > 0, (theory - report.eg_mean) / sem, np.inf)
        z = np.where(theory == report.eg_mean, 0.0, z)
    return AlignedReport(
        p_grid=plan.p_grid,
        eg_theory=theory,
        eg_emp_mean=report.eg_mean,
        eg_emp_std=report.eg_std,
        bias_emp=report.bias,
        variance_emp=report.variance,
        z_score=z,
        failures=report.failures,
        trial_counts=report.trial_counts,
    )
