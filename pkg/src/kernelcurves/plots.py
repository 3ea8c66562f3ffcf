"""Optional figure rendering for CLI outputs.

All figures go straight to files through the Agg backend; nothing here opens
a display. Each function takes already-computed results, so plotting stays a
presentation layer on top of the delimited outputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .theory import DIP_THEN_PEAK, MONOTONE, SINGLE_PEAK, phase_boundary

_PHASE_COLORS = {MONOTONE: 0, SINGLE_PEAK: 1, DIP_THEN_PEAK: 2}


def save_learning_curve(path, solutions, title="Predicted learning curve"):
    """Log-log theory curve with bias/variance split; divergences marked."""
    p = np.array([s.sample_size for s in solutions], dtype=float)
    eg = np.array([s.eg for s in solutions])
    bias = np.array([s.bias for s in solutions])
    var = np.array([s.variance for s in solutions])
    diverged = np.array([s.diverged for s in solutions])

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ok = ~diverged & (p > 0)
    ax.plot(p[ok], eg[ok], "k-", lw=2, label="$E_g$")
    ax.plot(p[ok], bias[ok], "C0--", label="bias")
    ax.plot(p[ok], var[ok], "C1--", label="variance")
    for pd in p[diverged]:
        ax.axvline(pd, color="r", ls=":", alpha=0.7)
    if diverged.any():
        ax.plot([], [], "r:", label="divergence")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("$P$")
    ax.set_ylabel("generalization error")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_report_figure(path, report, title="Theory vs experiment"):
    """Theory curve over empirical mean +/- std error bars."""
    p = np.asarray(report.p_grid, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(p, report.eg_theory, "k-", lw=2, label="theory")
    ax.errorbar(
        p,
        report.eg_emp_mean,
        yerr=report.eg_emp_std,
        fmt="o",
        color="C0",
        ms=4,
        capsize=3,
        label="experiment",
    )
    ax.plot(p, report.bias_emp, "C2^", ms=4, alpha=0.7, label="empirical bias")
    ax.plot(p, report.variance_emp, "C3v", ms=4, alpha=0.7, label="empirical variance")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("$P$")
    ax.set_ylabel("generalization error")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_phase_diagram(path, ridges, noise_vars, classifications):
    """Raster of curve shapes over the (ridge, noise) plane with the analytic
    boundary and the optimal-ridge line overlaid."""
    lam = np.asarray(ridges, dtype=float)
    sig = np.asarray(noise_vars, dtype=float)
    grid = np.empty((sig.size, lam.size))
    labels = np.asarray(classifications).reshape(sig.size, lam.size)
    for i in range(sig.size):
        for j in range(lam.size):
            grid[i, j] = _PHASE_COLORS[labels[i, j]]

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.pcolormesh(lam, sig, grid, cmap="viridis", vmin=0, vmax=2, shading="nearest")
    dense = np.linspace(lam.min(), lam.max(), 400)
    ax.plot(dense, [phase_boundary(v) for v in dense], "r-", lw=2, label="peak onset")
    ax.plot(dense, dense, "w--", lw=1.5, label="optimal ridge")
    ax.set_xlabel(r"ridge $\lambda$")
    ax.set_ylabel(r"noise $\sigma^2$")
    ax.set_ylim(sig.min(), sig.max())
    ax.set_title("Learning-curve phase diagram")
    handles = [
        plt.Rectangle((0, 0), 1, 1, color=plt.get_cmap("viridis")(v / 2.0))
        for v in range(3)
    ]
    ax.legend(
        handles + ax.get_lines(),
        [MONOTONE, SINGLE_PEAK, DIP_THEN_PEAK, "peak onset", "optimal ridge"],
        loc="upper left",
        fontsize=8,
    )
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_stage_curves(path, stages, alphas, curves, boundaries=None):
    """Per-stage error curves vs in-stage load alpha, with stage-size marks."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for params, curve in zip(stages, curves):
        ax.plot(alphas, curve, label=f"stage {params.stage}")
        peak = 1.0 + params.eff_ridge
        if alphas[0] <= peak <= alphas[-1]:
            ax.axvline(peak, ls=":", color="gray", alpha=0.5)
    if boundaries:
        for p in boundaries:
            ax.axvline(p, color="k", ls="--", alpha=0.4)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"stage load $\alpha$")
    ax.set_ylabel("generalization error")
    ax.set_title("Learning stages")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_spectrum_figure(path, spectrum, target=None):
    """Eigenvalue decay (per distinct block) and, if given, target power."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    idx = np.arange(1, spectrum.block_count + 1)
    pos = spectrum.eigenvalues > 0
    ax.plot(idx[pos], spectrum.eigenvalues[pos], "ko-", ms=3, label="eigenvalue")
    if target is not None:
        from .spectra import block_powers

        power = block_powers(spectrum, target)
        keep = power > 0
        ax.plot(idx[keep], power[keep], "C1s-", ms=3, label="target power")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("block index")
    ax.set_ylabel("value")
    ax.set_title("Kernel spectrum")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
