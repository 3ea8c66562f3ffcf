"""Command-line interface.

Commands: spectrum (extract a kernel spectrum), predict (theory learning
curve), verify (theory vs Monte Carlo experiment), phase (curve-shape
diagram), stages (per-degree learning stages), ntk-table (effective
regularization across depths).

Exit codes: 0 success, 1 numerical failure, 2 I/O or validation failure.
All outputs are written atomically; a failing command leaves no partial file.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import serialization as ser
from .errors import DataError, NumericalError, SolverError
from .experiments import ExperimentPlan
from .kernels import (
    KernelDescriptor,
    dot_product_spectrum,
    effective_regularization_table,
    eigensystem_from_data,
    ntk_dot_profile,
    project_one_hot,
    project_target,
    sphere_profile,
)
from .spectra import Spectrum, TargetDecomposition, total_power
from .theory import (
    DegenerateStageError,
    classify_band_limited,
    learning_curve,
    stage_parameters,
    staged_curve,
)

DEFAULT_RBF_WIDTH = 0.1  # image-data default
DEFAULT_THREADS_ENV = "KERNELCURVES_THREADS"

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_INPUT = 2


def _kernel_from_args(args) -> KernelDescriptor:
    family = args.kernel
    if family == "rbf":
        return KernelDescriptor("rbf", width=args.width)
    if family in ("ntk", "nngp"):
        if args.depth is None:
            raise DataError(f"--depth is required for {family}")
        return KernelDescriptor(
            family, depth=args.depth, weight_var=args.weight_var, bias_var=args.bias_var
        )
    if family == "dot_product_poly":
        if not args.coefficients:
            raise DataError("--coefficients is required for dot_product_poly")
        coeffs = tuple(float(c) for c in args.coefficients.split(","))
        return KernelDescriptor("dot_product_poly", coefficients=coeffs)
    raise DataError(f"unknown kernel family {family!r}")


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise DataError(f"cannot parse numeric list {text!r}: {exc}") from exc


def _log(args, message):
    if not getattr(args, "quiet", False):
        print(message, file=sys.stderr)


def cmd_spectrum(args) -> int:
    kernel = _kernel_from_args(args)
    if args.analytic_sphere:
        if args.dim is None:
            raise DataError("--analytic-sphere requires --dim")
        profile = sphere_profile(kernel, args.dim)
        spectrum, order = dot_product_spectrum(profile, args.dim, args.kmax)
        target = TargetDecomposition(np.zeros(spectrum.block_count))
        _log(args, f"analytic spectrum: {spectrum.block_count} degrees, "
                   f"trace {spectrum.trace():.6g} vs K(1) {profile(1.0):.6g}")
        ser.write_spectrum(args.out, spectrum, target)
        if args.plot:
            from .plots import save_spectrum_figure

            save_spectrum_figure(args.plot, spectrum)
        return EXIT_OK
    if args.data is None:
        raise DataError("need either --data FILE or --analytic-sphere")
    points, labels = ser.read_dataset(args.data, args.labels_col)
    if args.normalize_sphere:
        norms = np.linalg.norm(points, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise DataError("cannot project zero points onto the sphere")
        points = points / norms
    eigsys = eigensystem_from_data(kernel, points)
    spectrum = eigsys.spectrum()
    if labels is None:
        target = TargetDecomposition(np.zeros(spectrum.block_count))
    else:
        if args.one_hot:
            classes = np.unique(labels)
            onehot = (labels[:, None] == classes[None, :]).astype(float)
            target = project_one_hot(eigsys, onehot)
            # each row of the one-hot matrix has unit norm, so power sums to 1
            label_power = 1.0
        else:
            target = project_target(eigsys, labels)
            label_power = float(np.mean(labels**2))
        learned = total_power(spectrum, target) + target.unlearnable_power
        _log(args, f"Parseval residual: {abs(learned - label_power):.3e}")
    ser.write_spectrum(args.out, spectrum, target)
    if args.eigenvectors:
        ser.write_matrix(args.eigenvectors, eigsys.eigenvectors)
    if args.plot:
        from .plots import save_spectrum_figure

        save_spectrum_figure(args.plot, spectrum, target if labels is not None else None)
    return EXIT_OK


def cmd_predict(args) -> int:
    spectrum, target = ser.read_spectrum(args.spectrum)
    if args.sigma2 is not None:
        target = TargetDecomposition(
            target.weights_sq, noise_var=args.sigma2,
            unlearnable_power=target.unlearnable_power,
        )
    if args.p is not None:
        p_grid = _parse_grid(args.p)
    else:
        p_grid = np.unique(
            np.rint(np.geomspace(args.p_min, args.p_max, args.p_count))
        ).tolist()
    solutions = learning_curve(spectrum, target, args.ridge, p_grid)
    n_div = sum(s.diverged for s in solutions)
    if n_div:
        _log(args, f"{n_div} grid point(s) flagged as divergent")
    ser.atomic_write_text(args.out, ser.curve_table(solutions))
    if args.plot:
        from .plots import save_learning_curve

        save_learning_curve(args.plot, solutions)
    return EXIT_OK


def cmd_verify(args) -> int:
    plan = ser.read_plan(args.plan, dataset_path=args.data, labels_col=args.labels_col)
    from .experiments import theory_experiment_report

    report = theory_experiment_report(plan, threads=args.threads)
    ser.atomic_write_text(args.out, ser.report_table(report))
    if args.plot:
        from .plots import save_report_figure

        save_report_figure(args.plot, report)
    finite = np.isfinite(report.z_score)
    ok = np.abs(report.z_score[finite]) <= 3.0
    frac = ok.mean() if ok.size else 0.0
    _log(args, f"|z| <= 3 at {frac:.1%} of grid points "
               f"({int(ok.sum())}/{ok.size}); failures: {int(report.failures.sum())}")
    if args.strict and frac < 0.95:
        _log(args, "strict acceptance failed")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_phase(args) -> int:
    lam = np.linspace(args.ridge_min, args.ridge_max, args.ridge_count)
    sig = np.linspace(args.sigma2_min, args.sigma2_max, args.sigma2_count)
    rows_l, rows_s, labels = [], [], []
    for s2 in sig:
        for lv in lam:
            rows_l.append(lv)
            rows_s.append(s2)
            labels.append(classify_band_limited(float(lv), float(s2)))
    ser.atomic_write_text(args.out, ser.phase_table(rows_l, rows_s, labels))
    if args.plot:
        from .plots import save_phase_diagram

        save_phase_diagram(args.plot, lam, sig, labels)
    return EXIT_OK


def cmd_stages(args) -> int:
    spectrum, target = ser.read_spectrum(args.spectrum)
    if args.sigma2 is not None:
        target = TargetDecomposition(
            target.weights_sq, noise_var=args.sigma2,
            unlearnable_power=target.unlearnable_power,
        )
    count = args.stages if args.stages is not None else spectrum.block_count
    count = min(count, spectrum.block_count)
    alphas = np.geomspace(args.alpha_min, args.alpha_max, args.alpha_count)
    header = "stage,block_size,eta_bar,weight_bar_sq,eff_noise_sq,eff_ridge,peak_location"
    rows = [header]
    stages, curves = [], []
    fmt = ser.FLOAT_FMT
    for stage in range(1, count + 1):
        try:
            params = stage_parameters(spectrum, target, args.ridge, stage)
        except DegenerateStageError:
            rows.append(f"{stage},{int(spectrum.degeneracies[stage - 1])},,,,,degenerate")
            continue
        rows.append(
            ",".join(
                [
                    str(stage),
                    str(int(spectrum.degeneracies[stage - 1])),
                    fmt % params.eta_bar,
                    fmt % params.weight_bar_sq,
                    fmt % params.eff_noise_sq,
                    fmt % params.eff_ridge,
                    fmt % (1.0 + params.eff_ridge),
                ]
            )
        )
        stages.append(params)
        curves.append(staged_curve(params, alphas))
    ser.atomic_write_text(args.out, "\n".join(rows) + "\n")
    if args.curves_out:
        head = "alpha," + ",".join(f"stage_{p.stage}" for p in stages)
        lines = [head]
        for i, a in enumerate(alphas):
            lines.append(",".join([fmt % a] + [fmt % c[i] for c in curves]))
        ser.atomic_write_text(args.curves_out, "\n".join(lines) + "\n")
    if args.plot:
        from .plots import save_stage_curves

        save_stage_curves(args.plot, stages, alphas, curves)
    return EXIT_OK


def cmd_ntk_table(args) -> int:
    depths = [int(d) for d in args.depths.split(",")]
    if any(d < 1 for d in depths):
        raise DataError("depths must be >= 1")
    fmt = ser.FLOAT_FMT
    rows = ["depth," + ",".join(f"eff_ridge_{l}" for l in range(args.lmax + 1))]
    for depth in depths:
        profile = lambda t, d=depth: ntk_dot_profile(d, t, args.weight_var, args.bias_var)
        table = effective_regularization_table(profile, args.dim, args.lmax, ridge=args.ridge)
        rows.append(",".join([str(depth)] + [fmt % v for v in table]))
    ser.atomic_write_text(args.out, "\n".join(rows) + "\n")
    return EXIT_OK


def _add_kernel_flags(parser):
    parser.add_argument(
        "--kernel",
        required=True,
        choices=["rbf", "ntk", "nngp", "dot_product_poly"],
        help="kernel family",
    )
    parser.add_argument(
        "--width", type=float, default=DEFAULT_RBF_WIDTH,
        help=f"rbf width (default {DEFAULT_RBF_WIDTH})",
    )
    parser.add_argument("--depth", type=int, help="network depth for ntk/nngp")
    parser.add_argument(
        "--weight-var", dest="weight_var", type=float, default=1.0,
        help="weight variance for ntk/nngp (default 1)",
    )
    parser.add_argument(
        "--bias-var", dest="bias_var", type=float, default=0.0,
        help="bias variance for ntk/nngp (default 0)",
    )
    parser.add_argument(
        "--coefficients", help="comma-separated polynomial coefficients, constant first"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelcurves",
        description="Predict and verify kernel regression learning curves from spectra.",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress messages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="extract a kernel spectrum (empirical or analytic)")
    _add_kernel_flags(p)
    p.add_argument("--data", help="dataset file (delimited text or binary matrix)")
    p.add_argument("--labels-col", dest="labels_col",
                   help="label column: 'last' or zero-based index")
    p.add_argument("--one-hot", dest="one_hot", action="store_true",
                   help="project labels as one-hot channels (multiclass)")
    p.add_argument("--normalize-sphere", dest="normalize_sphere", action="store_true",
                   help="scale data rows to unit norm before the kernel")
    p.add_argument("--analytic-sphere", dest="analytic_sphere", action="store_true",
                   help="compute the quadrature spectrum on the unit sphere")
    p.add_argument("--dim", type=int, help="ambient dimension for --analytic-sphere")
    p.add_argument("--kmax", type=int, default=20,
                   help="highest harmonic degree for --analytic-sphere (default 20)")
    p.add_argument("--eigenvectors", help="optional binary sidecar for eigenvectors")
    p.add_argument("--plot", help="optional spectrum figure path (png)")
    p.add_argument("--out", required=True, help="spectrum document output path")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("predict", help="theory learning curve from a spectrum document")
    p.add_argument("--spectrum", required=True, help="spectrum document path")
    p.add_argument("--ridge", "--lambda", dest="ridge", type=float, default=0.0,
                   help="ridge parameter (default 0)")
    p.add_argument("--sigma2", type=float, help="override label-noise variance")
    p.add_argument("--p", help="comma-separated sample sizes")
    p.add_argument("--p-min", dest="p_min", type=float, default=1.0,
                   help="geometric grid start (default 1)")
    p.add_argument("--p-max", dest="p_max", type=float, default=1000.0,
                   help="geometric grid end (default 1000)")
    p.add_argument("--p-count", dest="p_count", type=int, default=40,
                   help="geometric grid size (default 40)")
    p.add_argument("--plot", help="optional learning-curve figure path (png)")
    p.add_argument("--out", required=True, help="curve table output path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("verify", help="run a Monte Carlo plan and align with theory")
    p.add_argument("--plan", required=True, help="plan document path")
    p.add_argument("--data", help="dataset file for dataset_file sources")
    p.add_argument("--labels-col", dest="labels_col",
                   help="label column for --data: 'last' or zero-based index")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get(DEFAULT_THREADS_ENV, "1")),
                   help="trial parallelism (default $" + DEFAULT_THREADS_ENV + " or 1)")
    p.add_argument("--strict", action="store_true",
                   help="exit 1 unless >= 95%% of grid points have |z| <= 3")
    p.add_argument("--plot", help="optional comparison figure path (png)")
    p.add_argument("--out", required=True, help="report table output path")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("phase", help="classify band-limited curve shapes on a grid")
    p.add_argument("--ridge-min", dest="ridge_min", type=float, default=0.0)
    p.add_argument("--ridge-max", dest="ridge_max", type=float, default=2.0)
    p.add_argument("--ridge-count", dest="ridge_count", type=int, default=40)
    p.add_argument("--sigma2-min", dest="sigma2_min", type=float, default=0.0)
    p.add_argument("--sigma2-max", dest="sigma2_max", type=float, default=5.0)
    p.add_argument("--sigma2-count", dest="sigma2_count", type=int, default=40)
    p.add_argument("--plot", help="optional phase-diagram figure path (png)")
    p.add_argument("--out", required=True, help="phase table output path")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("stages", help="per-degree learning-stage analysis")
    p.add_argument("--spectrum", required=True, help="spectrum document path")
    p.add_argument("--ridge", "--lambda", dest="ridge", type=float, default=0.0)
    p.add_argument("--sigma2", type=float, help="override label-noise variance")
    p.add_argument("--stages", type=int, help="number of leading stages (default all)")
    p.add_argument("--alpha-min", dest="alpha_min", type=float, default=0.01)
    p.add_argument("--alpha-max", dest="alpha_max", type=float, default=100.0)
    p.add_argument("--alpha-count", dest="alpha_count", type=int, default=200)
    p.add_argument("--curves-out", dest="curves_out", help="optional staged-curve table path")
    p.add_argument("--plot", help="optional stage-curve figure path (png)")
    p.add_argument("--out", required=True, help="stage table output path")
    p.set_defaults(func=cmd_stages)

    p = sub.add_parser("ntk-table", help="effective regularization per degree across depths")
    p.add_argument("--dim", type=int, required=True, help="ambient dimension")
    p.add_argument("--depths", default="2,3,4", help="comma-separated depths (default 2,3,4)")
    p.add_argument("--lmax", type=int, default=3, help="highest degree (default 3)")
    p.add_argument("--ridge", type=float, default=0.0, help="explicit ridge (default 0)")
    p.add_argument("--weight-var", dest="weight_var", type=float, default=1.0)
    p.add_argument("--bias-var", dest="bias_var", type=float, default=0.0)
    p.add_argument("--out", required=True, help="table output path")
    p.set_defaults(func=cmd_ntk_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SolverError, NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
