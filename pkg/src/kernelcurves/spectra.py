"""Kernel spectra, target decompositions, and spherical-harmonic degeneracy arithmetic.

A spectrum is stored in compact form: one entry per distinct eigenvalue with an
integer multiplicity. Target weights are stored per expanded mode (one entry per
eigenfunction), since weights within a degenerate block generally differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError


def degeneracy(dim: int, k: int) -> int:
    """Dimension of the space of degree-k spherical harmonics on S^(dim-1).

    Computed exactly as C(dim+k-1, k) - C(dim+k-3, k-2), which satisfies
    degeneracy(dim, k) ~ dim^k / k! for large dim.
    """
    if dim < 2:
        raise ValueError(f"ambient dimension must be >= 2, got {dim}")
    if k < 0:
        raise ValueError(f"harmonic degree must be >= 0, got {k}")
    if k == 0:
        return 1
    first = math.comb(dim + k - 1, k)
    second = math.comb(dim + k - 3, k - 2) if k >= 2 else 0
    return first - second


@dataclass(frozen=True)
class Spectrum:
    """Distinct kernel eigenvalues (descending, >= 0) with integer multiplicities."""

    eigenvalues: np.ndarray
    degeneracies: np.ndarray

    def __init__(self, eigenvalues, degeneracies=None):
        eig = np.atleast_1d(np.asarray(eigenvalues, dtype=float))
        if degeneracies is None:
            deg = np.ones(eig.shape, dtype=np.int64)
        else:
            try:
                deg = np.atleast_1d(np.asarray(degeneracies, dtype=np.int64))
            except OverflowError:
                # counts beyond int64 (huge harmonic degeneracies): keep float64
                deg = np.atleast_1d(np.asarray(degeneracies, dtype=np.float64))
            if not np.issubdtype(deg.dtype, np.integer):
                raw = np.atleast_1d(np.asarray(degeneracies, dtype=np.float64))
                if not np.array_equal(np.rint(raw), raw):
                    raise ValueError("degeneracies must be integers")
                deg = raw
        if eig.ndim != 1 or eig.shape != deg.shape:
            raise ValueError("eigenvalues and degeneracies must be 1-d and aligned")
        if eig.size == 0:
            raise ValueError("spectrum must contain at least one eigenvalue")
        if np.any(eig < 0):
            raise ValueError("eigenvalues must be nonnegative")
        if np.any(np.diff(eig) > 0):
            raise ValueError("eigenvalues must be sorted in descending order")
        if not np.any(eig > 0):
            raise ValueError("at least one eigenvalue must be positive")
        if np.any(deg < 1):
            raise ValueError("degeneracies must be >= 1")
        eig = eig.copy()
        deg = deg.copy()
        eig.flags.writeable = False
        deg.flags.writeable = False
        object.__setattr__(self, "eigenvalues", eig)
        object.__setattr__(self, "degeneracies", deg)

    @property
    def mode_count(self) -> int:
        return int(self.degeneracies.sum())

    @property
    def block_count(self) -> int:
        return self.eigenvalues.size

    def expanded(self) -> np.ndarray:
        """Per-mode eigenvalue list with degeneracies unrolled."""
        return np.repeat(self.eigenvalues, self.degeneracies)

    def block_offsets(self) -> np.ndarray:
        """Start index of each degenerate block in the expanded mode list."""
        return np.concatenate(([0], np.cumsum(self.degeneracies)))

    def trace(self) -> float:
        """Sum of all eigenvalues including multiplicity."""
        return float(self.degeneracies @ self.eigenvalues)

    @classmethod
    def from_modes(cls, values) -> "Spectrum":
        """Compact a per-mode eigenvalue list, grouping equal adjacent entries."""
        vals = np.sort(np.asarray(values, dtype=float))[::-1]
        distinct, counts = [], []
        for v in vals:
            if distinct and v == distinct[-1]:
                counts[-1] += 1
            else:
                distinct.append(v)
                counts.append(1)
        return cls(np.array(distinct), np.array(counts))


@dataclass(frozen=True)
class TargetDecomposition:
    """Squared teacher coefficients per expanded mode, plus noise and unlearnable power.

    `unlearnable_power` holds target power carried by modes outside the kernel's
    range (zero or numerically null eigenvalues); the theory treats it as
    additive effective noise.

    For spectra with very large degenerate blocks the per-mode list may be
    impractical; `weights_sq` may then have one entry per distinct eigenvalue
    instead, interpreted as the summed squared weight of the whole block
    (see `block_weight_sums`).
    """

    weights_sq: np.ndarray
    noise_var: float = 0.0
    unlearnable_power: float = 0.0

    def __init__(self, weights_sq, noise_var=0.0, unlearnable_power=0.0):
        w2 = np.atleast_1d(np.asarray(weights_sq, dtype=float)).copy()
        if w2.ndim != 1 or w2.size == 0:
            raise ValueError("weights_sq must be a nonempty 1-d array")
        if np.any(w2 < 0):
            raise ValueError("squared weights must be nonnegative")
        if noise_var < 0:
            raise ValueError("noise variance must be nonnegative")
        if unlearnable_power < 0:
            raise ValueError("unlearnable power must be nonnegative")
        w2.flags.writeable = False
        object.__setattr__(self, "weights_sq", w2)
        object.__setattr__(self, "noise_var", float(noise_var))
        object.__setattr__(self, "unlearnable_power", float(unlearnable_power))


def is_block_form(spectrum: Spectrum, target: TargetDecomposition) -> bool:
    """True when the target stores one summed weight per distinct eigenvalue."""
    n = target.weights_sq.size
    if n == spectrum.mode_count:
        return False  # per-mode form; coincides with block form when all deg == 1
    if n == spectrum.block_count:
        return True
    raise ValueError(
        f"target has {n} entries; spectrum needs {spectrum.mode_count} per-mode "
        f"or {spectrum.block_count} per-block"
    )


def check_paired(spectrum: Spectrum, target: TargetDecomposition) -> None:
    is_block_form(spectrum, target)


def block_weight_sums(spectrum: Spectrum, target: TargetDecomposition) -> np.ndarray:
    """Sum of squared weights within each degenerate block."""
    if is_block_form(spectrum, target):
        return target.weights_sq
    return np.add.reduceat(target.weights_sq, spectrum.block_offsets()[:-1])


def block_powers(spectrum: Spectrum, target: TargetDecomposition) -> np.ndarray:
    """Per-distinct-eigenvalue target power: eta_K * sum of block weights_sq."""
    return spectrum.eigenvalues * block_weight_sums(spectrum, target)


def total_power(spectrum: Spectrum, target: TargetDecomposition) -> float:
    """Total learnable target power, sum over modes of eta * weight^2."""
    return float(block_powers(spectrum, target).sum())


def cumulative_power(spectrum: Spectrum, target: TargetDecomposition) -> np.ndarray:
    """Fraction of target power carried by the top-rho modes, per expanded mode.

    Block-form targets yield one entry per distinct eigenvalue instead.
    """
    if is_block_form(spectrum, target):
        per_mode = block_powers(spectrum, target)
    else:
        per_mode = spectrum.expanded() * target.weights_sq
    total = per_mode.sum()
    if total <= 0:
        raise DegenerateInputError("target has zero total power over the spectrum")
    return np.cumsum(per_mode) / total


def power_law_spectrum(s: float, k_max: int, dim: int) -> Spectrum:
    """Spectrum with stage eigenvalue K^(-s) split uniformly over degeneracy N(dim, K).

    Stages run K = 1 .. k_max; the per-mode eigenvalue at stage K is
    K^(-s) / N(dim, K).
    """
    if s < 1:
        raise ValueError(f"decay exponent must be >= 1 (divergent tail), got {s}")
    if k_max < 1:
        raise ValueError(f"stage count must be >= 1, got {k_max}")
    degs = [degeneracy(dim, k) for k in range(1, k_max + 1)]
    per_mode = [float(k) ** (-s) / d for k, d in zip(range(1, k_max + 1), degs)]
    return Spectrum(np.array(per_mode), degs)


def sample_target(spectrum: Spectrum, rng_seed: int) -> TargetDecomposition:
    """Draw zero-mean Gaussian teacher weights with variance matched to the spectrum.

    Each mode's weight has variance eta_rho, so the expected power per mode is
    eta_rho^2. Deterministic for a fixed seed; zero-eigenvalue modes get weight
    exactly zero.
    """
    rng = np.random.default_rng(rng_seed)
    eta = spectrum.expanded()
    draws = rng.standard_normal(eta.size) * np.sqrt(eta)
    return TargetDecomposition(draws**2, noise_var=0.0)
