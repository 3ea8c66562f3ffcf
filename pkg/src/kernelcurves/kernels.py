"""Kernel evaluation, Gram matrices, empirical Mercer decomposition, and
dot-product-kernel spectra on the sphere.

Dot-product families (ntk, nngp, dot_product_poly) expect inputs on or near
the unit sphere; the inner product is clamped to [-1, 1] before the profile
is applied. The fully-connected NTK/NNGP recursions are transcribed for the
rectifier activation only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import eval_gegenbauer, roots_jacobi

from .errors import DataError, NumericalError
from .spectra import Spectrum, TargetDecomposition, degeneracy
from .theory import generalization_error

_FAMILIES = ("rbf", "dot_product_poly", "ntk", "nngp")

EIGENVALUE_KEEP_RTOL = 1e-12  # modes below this fraction of eta_max are not inverted
NEGATIVE_EIG_TRACE_TOL = 1e-8


@dataclass(frozen=True)
class KernelDescriptor:
    """Declarative kernel choice.

    family "rbf": K(x, x') = exp(-||x - x'||^2 / (2 D width^2)).
    family "ntk"/"nngp": fully-connected rectifier network kernel of the given
    depth with weight variance `weight_var` and bias variance `bias_var`.
    family "dot_product_poly": K(t) = sum_i coefficients[i] * t^i.
    """

    family: str
    width: float | None = None
    depth: int | None = None
    weight_var: float = 1.0
    bias_var: float = 0.0
    coefficients: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "rbf":
            if self.width is None or self.width <= 0:
                raise ValueError("rbf kernel needs width > 0")
        elif self.family in ("ntk", "nngp"):
            if self.depth is None or self.depth < 1:
                raise ValueError(f"{self.family} kernel needs depth >= 1")
            if self.weight_var <= 0:
                raise ValueError("weight variance must be positive")
            if self.bias_var < 0:
                raise ValueError("bias variance must be nonnegative")
        elif self.family == "dot_product_poly":
            if not self.coefficients:
                raise ValueError("polynomial kernel needs coefficients")
            object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @property
    def is_dot_product(self) -> bool:
        return self.family != "rbf"


def _relu_cov(q: np.ndarray | float, cov: np.ndarray | float):
    """E[relu(u) relu(v)] for (u, v) centered Gaussian with variance q and
    covariance cov (arc-cosine kernel of degree 1)."""
    c = np.clip(np.asarray(cov, dtype=float) / q, -1.0, 1.0)
    theta = np.arccos(c)
    return q / (2.0 * np.pi) * (np.sin(theta) + (np.pi - theta) * c)


def _relu_deriv_cov(q, cov):
    """E[step(u) step(v)], the derivative arc-cosine factor."""
    c = np.clip(np.asarray(cov, dtype=float) / q, -1.0, 1.0)
    return (np.pi - np.arccos(c)) / (2.0 * np.pi)


def _ntk_nngp_profiles(depth, t, weight_var, bias_var):
    """Return (ntk, nngp) profile values for unit-norm inputs with x.x' = t."""
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    w2, b2 = float(weight_var), float(bias_var)
    sig = np.asarray(w2 * t + b2, dtype=float)  # layer-1 GP kernel
    q = w2 + b2  # its diagonal
    theta = sig.copy()
    for _ in range(2, int(depth) + 1):
        sig_dot = w2 * _relu_deriv_cov(q, sig)
        sig_next = w2 * _relu_cov(q, sig) + b2
        q = w2 * q / 2.0 + b2
        theta = sig_next + sig_dot * theta
        sig = sig_next
    return theta, sig


def ntk_dot_profile(depth: int, inner, weight_var: float = 1.0, bias_var: float = 0.0):
    """Depth-L rectifier NTK as a scalar function of the inner product.

    depth counts layers: depth 1 is the linear network whose tangent kernel is
    weight_var * t + bias_var. Inputs outside [-1, 1] are clamped.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    theta, _ = _ntk_nngp_profiles(depth, inner, weight_var, bias_var)
    return theta if np.ndim(inner) else float(theta)


def nngp_dot_profile(depth: int, inner, weight_var: float = 1.0, bias_var: float = 0.0):
    """Depth-L rectifier NNGP kernel as a scalar function of the inner product."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    _, sig = _ntk_nngp_profiles(depth, inner, weight_var, bias_var)
    return sig if np.ndim(inner) else float(sig)


def dot_profile(desc: KernelDescriptor, t):
    """Scalar profile K(t) for a dot-product kernel descriptor."""
    if desc.family == "ntk":
        return ntk_dot_profile(desc.depth, t, desc.weight_var, desc.bias_var)
    if desc.family == "nngp":
        return nngp_dot_profile(desc.depth, t, desc.weight_var, desc.bias_var)
    if desc.family == "dot_product_poly":
        # no clamping: polynomial profiles are valid off the sphere too
        out = np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), desc.coefficients)
        return out if np.ndim(t) else float(out)
    raise ValueError(f"{desc.family} is not a dot-product kernel")


def rbf_profile_on_sphere(width: float, dim: int):
    """RBF restricted to the unit sphere as a dot-product profile,
    exp(-(2 - 2t) / (2 dim width^2))."""

    def profile(t):
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        out = np.exp(-(2.0 - 2.0 * t) / (2.0 * dim * width**2))
        return out if out.ndim else float(out)

    return profile


def sphere_profile(desc: KernelDescriptor, dim: int):
    """Dot-product profile of any supported kernel on the unit sphere S^(dim-1)."""
    if desc.family == "rbf":
        return rbf_profile_on_sphere(desc.width, dim)
    return lambda t: dot_profile(desc, t)


def kernel_eval(desc: KernelDescriptor, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("points must be 1-d and of equal dimension")
    if desc.family == "rbf":
        d2 = float(np.sum((x - y) ** 2))
        return float(np.exp(-d2 / (2.0 * x.size * desc.width**2)))
    return float(dot_profile(desc, float(x @ y)))


def gram_matrix(desc: KernelDescriptor, data) -> np.ndarray:
    """Symmetric PSD Gram matrix of the kernel over the rows of `data`."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("data must be a nonempty 2-d array of row points")
    if desc.family == "rbf":
        sq = np.sum(x * x, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.maximum(d2, 0.0, out=d2)  # expanded-norm roundoff guard
        gram = np.exp(-d2 / (2.0 * x.shape[1] * desc.width**2))
    else:
        gram = np.asarray(dot_profile(desc, x @ x.T))
    gram = 0.5 * (gram + gram.T)
    if not np.all(np.isfinite(gram)):
        raise DataError("kernel evaluation produced non-finite values")
    return gram


def cross_gram(desc: KernelDescriptor, left, right) -> np.ndarray:
    """Kernel values between the rows of `left` and the rows of `right`."""
    a = np.asarray(left, dtype=float)
    b = np.asarray(right, dtype=float)
    if desc.family == "rbf":
        d2 = (
            np.sum(a * a, axis=1)[:, None]
            + np.sum(b * b, axis=1)[None, :]
            - 2.0 * (a @ b.T)
        )
        np.maximum(d2, 0.0, out=d2)
        out = np.exp(-d2 / (2.0 * a.shape[1] * desc.width**2))
    else:
        out = np.asarray(dot_profile(desc, a @ b.T))
    if not np.all(np.isfinite(out)):
        raise DataError("kernel evaluation produced non-finite values")
    return out


@dataclass(frozen=True)
class EigenSystem:
    """Empirical Mercer decomposition over a finite dataset.

    eigenvalues are those of Gram / M, descending. Column k of `eigenvectors`
    holds the eigenfunction sampled on the data, scaled so that
    (1/M) Phi^T Phi = I; consequently Gram = Phi diag(eigenvalues) Phi^T.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sample_count: int

    def spectrum(self) -> Spectrum:
        return Spectrum(self.eigenvalues)


def gram_eigendecompose(gram: np.ndarray, sample_count: int | None = None) -> EigenSystem:
    gram = np.asarray(gram, dtype=float)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise ValueError("gram must be square")
    if not np.allclose(gram, gram.T, atol=1e-10 * max(1.0, float(np.abs(gram).max()))):
        raise ValueError("gram must be symmetric")
    m = gram.shape[0] if sample_count is None else int(sample_count)
    try:
        vals, vecs = np.linalg.eigh(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    eta = vals[::-1] / m
    vecs = vecs[:, ::-1]
    trace = float(np.trace(gram)) / m
    floor = -NEGATIVE_EIG_TRACE_TOL * max(trace, np.abs(eta).max())
    if eta.min() < floor:
        raise NumericalError(
            f"gram has negative eigenvalue {eta.min():.3e} beyond clip tolerance "
            f"{floor:.3e}; kernel is not positive semidefinite"
        )
    eta = np.maximum(eta, 0.0)
    phi = np.sqrt(m) * vecs
    return EigenSystem(eigenvalues=eta, eigenvectors=phi, sample_count=m)


def eigensystem_from_data(desc: KernelDescriptor, data) -> EigenSystem:
    return gram_eigendecompose(gram_matrix(desc, data))


def project_target(eigsys: EigenSystem, labels) -> TargetDecomposition:
    """Teacher weights of a label vector in the empirical eigenbasis.

    Modes with eigenvalues below EIGENVALUE_KEEP_RTOL * eta_max are not
    inverted; their label power is routed to the unlearnable tail. The result
    satisfies sum_k eta_k w_k^2 + unlearnable = ||y||^2 / M.
    """
    y = np.asarray(labels, dtype=float)
    if y.shape != (eigsys.sample_count,):
        raise ValueError("labels must be one value per data point")
    eta = eigsys.eigenvalues
    keep = eta > EIGENVALUE_KEEP_RTOL * eta.max()
    if not keep.any():
        raise DegenerateProjectionError("all eigenvalues below inversion threshold")
    coords = (eigsys.eigenvectors.T @ y) / eigsys.sample_count
    power = coords**2  # eta_k * w_k^2 per mode
    weights_sq = np.zeros_like(eta)
    weights_sq[keep] = power[keep] / eta[keep]
    unlearnable = float(power[~keep].sum())
    return TargetDecomposition(weights_sq, noise_var=0.0, unlearnable_power=unlearnable)


class DegenerateProjectionError(ValueError):
    pass


def project_one_hot(eigsys: EigenSystem, labels_onehot) -> TargetDecomposition:
    """Summed multi-channel target: one-hot channels share kappa and gamma, and
    the error formula is linear in squared weights, so channels add."""
    y = np.asarray(labels_onehot, dtype=float)
    if y.ndim != 2 or y.shape[0] != eigsys.sample_count:
        raise ValueError("labels must be an M x C one-hot matrix")
    weights_sq = np.zeros_like(eigsys.eigenvalues)
    unlearnable = 0.0
    for c in range(y.shape[1]):
        t = project_target(eigsys, y[:, c])
        weights_sq = weights_sq + t.weights_sq
        unlearnable += t.unlearnable_power
    return TargetDecomposition(weights_sq, noise_var=0.0, unlearnable_power=unlearnable)


def multiclass_eg(eigsys: EigenSystem, labels_onehot, ridge: float, p_grid) -> np.ndarray:
    """Theory learning curve summed over one-hot output channels."""
    target = project_one_hot(eigsys, labels_onehot)
    spectrum = eigsys.spectrum()
    return np.array(
        [generalization_error(spectrum, target, ridge, float(p)).eg for p in p_grid]
    )


def _gegenbauer_ratio(k, alpha, t):
    """Gegenbauer polynomial normalized to 1 at t = 1."""
    return eval_gegenbauer(k, alpha, t) / eval_gegenbauer(k, alpha, 1.0)


def dot_product_eigenvalues(
    profile,
    dim: int,
    k_max: int,
    tol: float = 1e-8,
    initial_order: int = 256,
    max_order: int = 16384,
) -> np.ndarray:
    """Per-degree Mercer eigenvalues of a dot-product kernel on S^(dim-1).

    Projects the profile onto Gegenbauer polynomials under the sphere's
    inner-product measure (1-t^2)^((dim-3)/2), using Gauss-Jacobi quadrature
    with the order doubled until successive results agree. Normalization is
    fixed by the addition theorem so that
    sum_k N(dim, k) * eta_k = profile(1).
    """
    if dim < 3:
        raise ValueError("dimension must be >= 3")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    alpha = (dim - 2) / 2.0
    a = (dim - 3) / 2.0
    scale = max(1.0, abs(float(profile(1.0))))

    prev = None
    order = max(initial_order, 2 * (k_max + 2))
    while order <= max_order:
        nodes, w = roots_jacobi(order, a, a)
        w = w / w.sum()
        fvals = np.asarray(profile(nodes), dtype=float) * w
        eta = np.array(
            [float(_gegenbauer_ratio(k, alpha, nodes) @ fvals) for k in range(k_max + 1)]
        )
        # degeneracy-weighted projection: eta_k = E[K(t) Q_k(t)] with Q_k(1) = 1
        if prev is not None and np.max(np.abs(eta - prev)) <= tol * scale:
            break
        prev = eta
        order *= 2
    else:
        raise NumericalError(
            "quadrature did not converge: successive orders disagree by "
            f"{np.max(np.abs(eta - prev)):.3e}"
        )
    if eta.min() < -1e-10 * scale:
        raise NumericalError(f"projected eigenvalue {eta.min():.3e} is negative")
    return np.maximum(eta, 0.0)


def dot_product_spectrum(profile, dim: int, k_max: int, **kw):
    """Compact Spectrum with harmonic degeneracies, sorted by eigenvalue.

    Returns (spectrum, degree_order) where degree_order[j] is the harmonic
    degree occupying sorted block j, so targets can be aligned with blocks.
    """
    eta = dot_product_eigenvalues(profile, dim, k_max, **kw)
    degs = [degeneracy(dim, k) for k in range(k_max + 1)]
    order = np.argsort(eta, kind="stable")[::-1]
    spectrum = Spectrum(eta[order], [degs[j] for j in order])
    return spectrum, order


def effective_regularization_table(
    profile, dim: int, l_max: int, ridge: float = 0.0, k_margin: int = 15
) -> np.ndarray:
    """Effective per-degree ridge lambda~_l = (ridge + sum_{k>l} etabar_k) / etabar_l.

    etabar_k = N(dim, k) * eta_k. The tail beyond the computed degrees is
    estimated from the trace-identity remainder profile(1) - sum etabar_k.
    """
    k_max = l_max + k_margin
    eta = dot_product_eigenvalues(profile, dim, k_max)
    degs = np.array([float(degeneracy(dim, k)) for k in range(k_max + 1)])
    eta_bar = degs * eta
    trace = float(profile(1.0))
    remainder = trace - float(eta_bar.sum())
    if remainder < -1e-6 * max(1.0, abs(trace)):
        raise NumericalError(
            f"trace-identity remainder {remainder:.3e} is negative: quadrature "
            "or degree cutoff is inconsistent"
        )
    remainder = max(remainder, 0.0)
    out = np.empty(l_max + 1)
    for l in range(l_max + 1):
        if eta_bar[l] <= 0:
            out[l] = np.inf
            continue
        tail = float(eta_bar[l + 1 :].sum()) + remainder
        out[l] = (ridge + tail) / eta_bar[l]
    return out
