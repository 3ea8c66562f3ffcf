"""Self-consistent learning-curve theory for kernel regression.

Solves the fixed point

    kappa = ridge + sum_rho kappa * eta_rho / (kappa + P * eta_rho)

and evaluates the closed-form generalization error, its mode / bias / variance
decompositions, the band-limited (flat-spectrum) specialization, the
non-monotonicity phase boundary, and the per-stage approximation for spectra
with large degenerate blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .spectra import Spectrum, TargetDecomposition, block_weight_sums, check_paired

KAPPA_RTOL = 1e-10
GAMMA_DIVERGENCE_TOL = 1e-12
_MAX_ITER = 200

MONOTONE = "monotone"
SINGLE_PEAK = "single_peak"
DIP_THEN_PEAK = "dip_then_peak"


@dataclass(frozen=True)
class TheorySolution:
    """Solved self-consistent state at one sample size."""

    sample_size: float
    kappa: float
    gamma: float
    eg: float
    mode_errors: np.ndarray  # normalized, one per distinct eigenvalue
    bias: float
    variance: float
    diverged: bool = False


@dataclass(frozen=True)
class StageParameters:
    """Effective band-limited parameters for one learning stage."""

    stage: int
    eta_bar: float
    weight_bar_sq: float
    eff_noise_sq: float
    eff_ridge: float
    tail_power: float


def _gamma_at(kappa, p, eta, deg):
    if p == 0:
        return 0.0
    return float(np.sum(deg * p * eta**2 / (kappa + p * eta) ** 2))


def solve_kappa(spectrum: Spectrum, ridge: float, p: float) -> tuple[float, float]:
    """Solve the self-consistent equation for kappa; returns (kappa, gamma).

    For ridge = 0 the largest nonnegative root is returned: kappa = 0 once P
    reaches the number of nonzero modes. P may be any nonnegative real.
    """
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    if p < 0:
        raise ValueError("sample size must be nonnegative")
    pos = spectrum.eigenvalues > 0
    eta = spectrum.eigenvalues[pos]
    deg = spectrum.degeneracies[pos].astype(float)
    eta_total = float(deg @ eta)
    n_pos = float(deg.sum())

    if p == 0:
        return ridge + eta_total, 0.0

    if ridge == 0 and p >= n_pos:
        # interpolation regime: kappa = 0, gamma = N/P
        return 0.0, n_pos / p

    if ridge > 0:
        # residual r(kappa) = kappa - ridge - sum kappa eta / (kappa + P eta);
        # unique root in (0, ridge + sum eta]
        def res(k):
            return k - ridge - float(np.sum(deg * k * eta / (k + p * eta)))

        lo, hi = 0.0, ridge + eta_total
    else:
        # ridgeless, P < n_pos: solve sum eta/(kappa + P eta) = 1 on (0, sum eta]
        def res(k):
            return 1.0 - float(np.sum(deg * eta / (k + p * eta)))

        lo, hi = 0.0, eta_total

    kappa = _bisect_newton(res, lo, hi, p, eta, deg, ridge)
    return kappa, _gamma_at(kappa, p, eta, deg)


def _bisect_newton(res, lo, hi, p, eta, deg, ridge):
    scale = max(hi, 1e-300)
    f_hi = res(hi)
    if f_hi < 0:  # cannot happen analytically; guard against roundoff
        hi *= 2
    for _ in range(_MAX_ITER):
        mid = 0.5 * (lo + hi)
        f_mid = res(mid)
        if f_mid >= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-16 * scale:
            break
    kappa = 0.5 * (lo + hi)
    # Newton polish on the fixed-point residual in its original form
    for _ in range(8):
        r = kappa - ridge - float(np.sum(deg * kappa * eta / (kappa + p * eta)))
        dr = 1.0 - float(np.sum(deg * p * eta**2 / (kappa + p * eta) ** 2))
        if dr <= 0:
            break
        step = r / dr
        nxt = kappa - step
        if nxt <= 0:
            break
        kappa = nxt
        if abs(step) <= 1e-17 * scale:
            break
    residual = abs(kappa - ridge - float(np.sum(deg * kappa * eta / (kappa + p * eta))))
    if residual > KAPPA_RTOL * max(scale, kappa):
        raise SolverError(
            f"kappa fixed point did not converge (residual {residual:.3e})",
            residual=residual,
        )
    return kappa


def generalization_error(
    spectrum: Spectrum, target: TargetDecomposition, ridge: float, p: float
) -> TheorySolution:
    """Evaluate the full learning-curve formula at sample size p.

    Unlearnable target power is folded into the effective noise variance.
    When gamma reaches 1 the error diverges; this is reported as an explicit
    flagged state with eg = inf rather than a floating overflow.
    """
    check_paired(spectrum, target)
    kappa, gamma = solve_kappa(spectrum, ridge, p)
    eta = spectrum.eigenvalues
    deg = spectrum.degeneracies.astype(float)
    w2 = block_weight_sums(spectrum, target)  # per-block sum of squared weights
    noise_eff = target.noise_var + target.unlearnable_power

    denom = (kappa + p * eta) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio_sq = np.where(eta > 0, kappa**2 / np.where(denom > 0, denom, 1.0), 1.0)
    if kappa == 0 and p > 0:
        ratio_sq = np.where(eta > 0, 0.0, 1.0)

    bias = float(np.sum(eta * w2 * ratio_sq))

    if gamma >= 1.0 - GAMMA_DIVERGENCE_TOL:
        mode_errors = np.where(eta > 0, np.inf, 1.0)
        return TheorySolution(
            sample_size=p,
            kappa=kappa,
            gamma=gamma,
            eg=math.inf,
            mode_errors=mode_errors,
            bias=bias,
            variance=math.inf,
            diverged=True,
        )

    inv = 1.0 / (1.0 - gamma)
    signal = float(np.sum(eta * w2 * ratio_sq)) * inv
    with np.errstate(divide="ignore", invalid="ignore"):
        noise_frac = np.where(denom > 0, p * eta**2 / denom, 0.0)
    # sum_rho eta * sigma~^2 * P * eta / (kappa + P eta)^2 == sigma~^2 * gamma,
    # so eg is affine in the noise variance with slope gamma / (1 - gamma)
    noise = noise_eff * inv * float(np.sum(deg * noise_frac))
    eg = signal + noise
    mode_errors = ratio_sq * inv
    return TheorySolution(
        sample_size=p,
        kappa=kappa,
        gamma=gamma,
        eg=eg,
        mode_errors=mode_errors,
        bias=bias,
        variance=eg - bias,
        diverged=False,
    )


def learning_curve(
    spectrum: Spectrum,
    target: TargetDecomposition,
    ridge: float,
    p_grid,
) -> list[TheorySolution]:
    return [generalization_error(spectrum, target, ridge, float(p)) for p in p_grid]


def mode_error_ordering_check(spectrum: Spectrum, ridge: float, p_grid) -> bool:
    """True iff larger eigenvalues have strictly smaller normalized mode errors
    at every grid point (equal eigenvalues are merged by construction)."""
    eta = spectrum.eigenvalues
    for p in p_grid:
        kappa, gamma = solve_kappa(spectrum, ridge, float(p))
        if gamma >= 1.0 - GAMMA_DIVERGENCE_TOL:
            return False
        errs = kappa**2 / ((1.0 - gamma) * (kappa + float(p) * eta) ** 2)
        pairs = zip(zip(eta[:-1], errs[:-1]), zip(eta[1:], errs[1:]))
        for (e_hi, err_hi), (e_lo, err_lo) in pairs:
            if e_hi > e_lo and p > 0 and kappa > 0 and not err_hi < err_lo:
                return False
    return True


def average_estimator_coeffs(
    spectrum: Spectrum, target: TargetDecomposition, ridge: float, p: float
) -> np.ndarray:
    """Mean learned coefficient per expanded mode: P*eta/(P*eta+kappa) * |w|.

    Only squared teacher weights are stored, so the nonnegative root is used;
    the shrinkage ratio is the meaningful part and lies in [0, 1).
    """
    check_paired(spectrum, target)
    kappa, _ = solve_kappa(spectrum, ridge, p)
    eta = spectrum.expanded()
    denom = p * eta + kappa
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(denom > 0, p * eta / np.where(denom > 0, denom, 1.0), 0.0)
    return ratio * np.sqrt(target.weights_sq)


def estimator_shrinkage(spectrum: Spectrum, ridge: float, p: float) -> np.ndarray:
    """Per-expanded-mode ratio P*eta/(P*eta + kappa) in [0, 1)."""
    kappa, _ = solve_kappa(spectrum, ridge, p)
    eta = spectrum.expanded()
    denom = p * eta + kappa
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, p * eta / np.where(denom > 0, denom, 1.0), 0.0)


def theory_bias_variance(
    spectrum: Spectrum, target: TargetDecomposition, ridge: float, p: float
) -> tuple[float, float]:
    sol = generalization_error(spectrum, target, ridge, p)
    return sol.bias, sol.variance


def band_limited_kappa(alpha: float, ridge: float) -> float:
    """Resolvent scale for a flat spectrum, closed form."""
    a = 1.0 + ridge - alpha
    return 0.5 * (a + math.sqrt(a * a + 4.0 * ridge * alpha))


def band_limited_eg(alpha: float, ridge: float, noise_sq: float) -> float:
    """Flat-spectrum generalization error at load alpha = P/N.

    Teacher-independent; target power normalized to 1. Returns inf at the
    ridgeless interpolation threshold alpha = 1.
    """
    if alpha < 0 or ridge < 0 or noise_sq < 0:
        raise ValueError("alpha, ridge and noise_sq must all be nonnegative")
    kappa = band_limited_kappa(alpha, ridge)
    denom = (kappa + alpha) ** 2 - alpha
    if denom <= 0:
        return math.inf
    return (kappa**2 + noise_sq * alpha) / denom


def band_limited_curve(alphas, ridge: float, noise_sq: float) -> np.ndarray:
    """Vectorized band_limited_eg over an alpha grid."""
    a = np.asarray(alphas, dtype=float)
    t = 1.0 + ridge - a
    kappa = 0.5 * (t + np.sqrt(t * t + 4.0 * ridge * a))
    denom = (kappa + a) ** 2 - a
    with np.errstate(divide="ignore", invalid="ignore"):
        eg = np.where(denom > 0, (kappa**2 + noise_sq * a) / np.where(denom > 0, denom, 1.0), np.inf)
    return eg


def phase_boundary(ridge: float) -> float:
    """Noise threshold above which the flat-spectrum curve is non-monotone."""
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    if ridge >= 1:
        return 2.0 * ridge + 1.0
    if ridge == 0:
        return 0.0
    theta = (math.pi + math.atan2(8.0 * math.sqrt(ridge), 9.0 * ridge * (3.0 * ridge + 2.0) - 1.0)) / 3.0
    return 3.0 * ridge * (
        3.0 * ridge + 2.0
        - 2.0 * math.sqrt(1.0 + ridge) * math.sqrt(9.0 * ridge + 1.0) * math.cos(theta)
    )


def classify_band_limited(ridge: float, noise_sq: float, points_per_decade: int = 250) -> str:
    """Classify the flat-spectrum learning curve by its stationary points."""
    hi = max(100.0, 100.0 * (1.0 + ridge))
    n = int(points_per_decade * (math.log10(hi) + 3))
    alphas = np.logspace(-3, math.log10(hi), n)
    eg = band_limited_curve(alphas, ridge, noise_sq)
    return classify_values(eg)


def classify_curve(
    spectrum: Spectrum, target: TargetDecomposition, ridge: float, p_grid
) -> str:
    """Classify a full-theory learning curve over a dense sample-size grid."""
    p_grid = np.asarray(p_grid, dtype=float)
    if p_grid.size < 16:
        raise ValueError("classification grid needs at least 16 points")
    if np.any(np.diff(p_grid) <= 0):
        raise ValueError("classification grid must be strictly increasing")
    eg = np.array(
        [generalization_error(spectrum, target, ridge, p).eg for p in p_grid]
    )
    return classify_values(eg)


def classify_values(eg: np.ndarray, rel_tol: float = 1e-9) -> str:
    """Count genuine stationary points of a sampled curve.

    Monotone segments whose total amplitude is below rel_tol of the curve's
    range are merged into their neighbors so floating noise near the phase
    boundary does not create spurious extrema.
    """
    y = np.asarray(eg, dtype=float)
    finite = np.isfinite(y)
    if not finite.all():
        cap = (np.max(y[finite]) if finite.any() else 1.0) * 1e6 + 1e6
        y = np.where(finite, y, cap)
    scale = float(np.max(y) - np.min(y))
    if scale <= 0:
        return MONOTONE
    tol = rel_tol * scale

    # split into maximal monotone segments: list of (sign, amplitude)
    d = np.diff(y)
    segments: list[list[float]] = []  # [sign, rise]
    for step in d:
        s = 1.0 if step > 0 else (-1.0 if step < 0 else 0.0)
        if s == 0.0:
            continue
        if segments and segments[-1][0] == s:
            segments[-1][1] += abs(step)
        else:
            segments.append([s, abs(step)])
    # absorb sub-tolerance wiggles into the surrounding trend
    changed = True
    while changed and len(segments) > 1:
        changed = False
        for i, (sign, amp) in enumerate(segments):
            if amp < tol:
                segments.pop(i)
                if 0 < i < len(segments) and segments[i - 1][0] == segments[i][0]:
                    segments[i - 1][1] += segments.pop(i)[1]
                changed = True
                break
    signs = [s for s, _ in segments]
    maxima = sum(1 for a, b in zip(signs[:-1], signs[1:]) if a > 0 and b < 0)
    if maxima == 0:
        return MONOTONE
    first_rise = signs.index(1.0) if 1.0 in signs else len(signs)
    had_dip_first = any(s < 0 for s in signs[:first_rise])
    return DIP_THEN_PEAK if had_dip_first else SINGLE_PEAK


def optimal_ridge(noise_sq: float) -> float:
    """Ridge minimizing the flat-spectrum error at every load: lambda* = sigma^2."""
    if noise_sq < 0:
        raise ValueError("noise variance must be nonnegative")
    return noise_sq


def hurwitz_zeta(s: float, a: float) -> float:
    """Hurwitz zeta sum_{n>=0} (n+a)^(-s) via Euler-Maclaurin tail acceleration."""
    if s <= 1:
        raise ValueError(f"exponent must be > 1, got {s}")
    if a <= 0:
        raise ValueError(f"offset must be positive, got {a}")
    s = float(s)
    a = float(a)
    m = 200
    n = np.arange(m, dtype=float)
    head = float(np.sum((a + n) ** (-s)))
    x = a + m
    tail = x ** (1.0 - s) / (s - 1.0) + 0.5 * x ** (-s) + s / 12.0 * x ** (-s - 1.0)
    tail -= s * (s + 1.0) * (s + 2.0) / 720.0 * x ** (-s - 3.0)
    return head + tail


def stage_parameters(
    spectrum: Spectrum, target: TargetDecomposition, ridge: float, stage: int
) -> StageParameters:
    """Effective band-limited parameters for degenerate block `stage` (1-based)."""
    check_paired(spectrum, target)
    if not 1 <= stage <= spectrum.block_count:
        raise ValueError(f"stage {stage} outside 1..{spectrum.block_count}")
    i = stage - 1
    eta = spectrum.eigenvalues
    deg = spectrum.degeneracies.astype(float)
    if eta[i] <= 0:
        raise ValueError(f"stage {stage} has zero eigenvalue")
    w2 = block_weight_sums(spectrum, target)
    eta_bar = deg * eta
    wbar_sq = w2 / deg
    if wbar_sq[i] == 0:
        raise DegenerateStageError(stage)
    tail_power = float(np.sum(eta_bar[i + 1 :] * wbar_sq[i + 1 :]))
    eff_ridge = (ridge + float(np.sum(eta_bar[i + 1 :]))) / eta_bar[i]
    eff_noise_sq = (target.noise_var + target.unlearnable_power + tail_power) / (
        eta_bar[i] * wbar_sq[i]
    )
    return StageParameters(
        stage=stage,
        eta_bar=float(eta_bar[i]),
        weight_bar_sq=float(wbar_sq[i]),
        eff_noise_sq=float(eff_noise_sq),
        eff_ridge=float(eff_ridge),
        tail_power=tail_power,
    )


class DegenerateStageError(ValueError):
    """Stage has zero target weight: the effective noise is undefined."""

    def __init__(self, stage):
        super().__init__(f"stage {stage} carries zero target weight")
        self.stage = stage


def staged_eg(params: StageParameters, alpha: float) -> float:
    """Stage-L generalization error at load alpha = P / N(D, L)."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    lam = params.eff_ridge
    kap = 0.5 * (1.0 + lam - alpha) + 0.5 * math.sqrt((alpha + 1.0 + lam) ** 2 - 4.0 * alpha)
    denom = (kap + alpha) ** 2 - alpha
    if denom <= 0:
        return math.inf
    head = params.eta_bar * params.weight_bar_sq
    return head * (kap**2 + params.eff_noise_sq * alpha) / denom + params.tail_power


def staged_curve(params: StageParameters, alphas) -> np.ndarray:
    return np.array([staged_eg(params, float(a)) for a in np.asarray(alphas, float)])


def power_law_stage_ridge(s: float, stage: int, ridge: float = 0.0) -> float:
    """Stage-L effective ridge for the infinite power-law spectrum K^(-s).

    Closed form L^s * (zeta(s, L) + ridge) - 1, where zeta is the Hurwitz
    zeta function; truncated spectra converge to this value slowly, so it is
    the right reference for long tails.
    """
    if stage < 1:
        raise ValueError("stage must be >= 1")
    return float(stage) ** s * (hurwitz_zeta(s, stage) + ridge) - 1.0
