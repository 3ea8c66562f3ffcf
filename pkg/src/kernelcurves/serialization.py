"""File formats: spectrum/plan documents, delimited tables, binary matrices.

All writers go through an atomic temp-file-and-rename step so a failure never
leaves partial output behind. Floating-point array entries are written with 17
significant digits, which round-trips IEEE double precision exactly.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import DataError
from .spectra import Spectrum, TargetDecomposition

FLOAT_FMT = "%.17g"
MATRIX_MAGIC = b"KCMAT01\x00"  # 8 bytes; header is magic + uint32 rows + uint32 cols


def atomic_write_text(path: str, text: str) -> None:
    """Write text to path via a temp file in the same directory and rename."""
    _atomic_write(path, text.encode("utf-8"))


def atomic_write_bytes(path: str, payload: bytes) -> None:
    _atomic_write(path, payload)


def _atomic_write(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _fmt(value: float) -> str:
    return FLOAT_FMT % float(value)


def _fmt_array(values) -> str:
    return "[" + ", ".join(_fmt(v) for v in np.asarray(values, dtype=float)) + "]"


def _fmt_int_array(values) -> str:
    arr = np.asarray(values)
    if np.issubdtype(arr.dtype, np.integer):
        return "[" + ", ".join(str(int(v)) for v in arr) + "]"
    return _fmt_array(arr)


def spectrum_document(spectrum: Spectrum, target: TargetDecomposition | None = None) -> str:
    """JSON document with keys eigenvalues, degeneracies, weights_sq, noise_var,
    unlearnable_power. Written by hand so array entries keep 17 significant digits."""
    lines = ["{"]
    lines.append(f'  "eigenvalues": {_fmt_array(spectrum.eigenvalues)},')
    lines.append(f'  "degeneracies": {_fmt_int_array(spectrum.degeneracies)},')
    if target is None:
        target = TargetDecomposition(np.zeros(spectrum.block_count))
    lines.append(f'  "weights_sq": {_fmt_array(target.weights_sq)},')
    lines.append(f'  "noise_var": {_fmt(target.noise_var)},')
    lines.append(f'  "unlearnable_power": {_fmt(target.unlearnable_power)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_spectrum(path: str, spectrum: Spectrum, target: TargetDecomposition | None = None):
    atomic_write_text(path, spectrum_document(spectrum, target))


def read_spectrum(path: str):
    """Parse a spectrum document. Returns (Spectrum, TargetDecomposition)."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read spectrum document {path!r}: {exc}") from exc
    try:
        eig = np.asarray(doc["eigenvalues"], dtype=float)
        deg = doc.get("degeneracies")
        spectrum = Spectrum(eig, None if deg is None else np.asarray(deg))
        target = TargetDecomposition(
            np.asarray(doc["weights_sq"], dtype=float),
            noise_var=float(doc.get("noise_var", 0.0)),
            unlearnable_power=float(doc.get("unlearnable_power", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid spectrum document {path!r}: {exc}") from exc
    return spectrum, target


CURVE_COLUMNS = ("P", "kappa", "gamma", "eg", "bias", "variance", "diverged")
REPORT_COLUMNS = (
    "P",
    "eg_theory",
    "eg_emp_mean",
    "eg_emp_std",
    "bias_emp",
    "variance_emp",
    "z_score",
    "failures",
)
PHASE_COLUMNS = ("ridge", "noise_var", "classification")


def curve_table(solutions) -> str:
    """Delimited learning-curve table, one row per sample size."""
    rows = [",".join(CURVE_COLUMNS)]
    for sol in solutions:
        rows.append(
            ",".join(
                [
                    _fmt(sol.sample_size),
                    _fmt(sol.kappa),
                    _fmt(sol.gamma),
                    _fmt(sol.eg),
                    _fmt(sol.bias),
                    _fmt(sol.variance),
                    "1" if sol.diverged else "0",
                ]
            )
        )
    return "\n".join(rows) + "\n"


def report_table(report) -> str:
    """Delimited theory-vs-experiment table from an AlignedReport."""
    rows = [",".join(REPORT_COLUMNS)]
    for i, p in enumerate(report.p_grid):
        rows.append(
            ",".join(
                [
                    str(int(p)),
                    _fmt(report.eg_theory[i]),
                    _fmt(report.eg_emp_mean[i]),
                    _fmt(report.eg_emp_std[i]),
                    _fmt(report.bias_emp[i]),
                    _fmt(report.variance_emp[i]),
                    _fmt(report.z_score[i]),
                    str(int(report.failures[i])),
                ]
            )
        )
    return "\n".join(rows) + "\n"


def phase_table(ridges, noise_vars, classifications) -> str:
    """Delimited phase-diagram table, one row per (ridge, noise variance) cell."""
    rows = [",".join(PHASE_COLUMNS)]
    for lam, sig2, label in zip(ridges, noise_vars, classifications):
        rows.append(f"{_fmt(lam)},{_fmt(sig2)},{label}")
    return "\n".join(rows) + "\n"


def read_table(path: str):
    """Read a delimited table written by this module. Returns (columns, rows of str)."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = [ln.strip() for ln in handle if ln.strip()]
    except OSError as exc:
        raise DataError(f"cannot read table {path!r}: {exc}") from exc
    if not lines:
        raise DataError(f"table {path!r} is empty")
    header = tuple(lines[0].split(","))
    return header, [ln.split(",") for ln in lines[1:]]


def write_matrix(path: str, matrix) -> None:
    """Raw little-endian float32 matrix with a 16-byte header (magic, rows, cols)."""
    arr = np.ascontiguousarray(np.asarray(matrix, dtype="<f4"))
    if arr.ndim != 2:
        raise ValueError("matrix must be 2-d")
    header = MATRIX_MAGIC + struct.pack("<II", arr.shape[0], arr.shape[1])
    atomic_write_bytes(path, header + arr.tobytes(order="C"))


def read_matrix(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as exc:
        raise DataError(f"cannot read matrix {path!r}: {exc}") from exc
    if len(blob) < 16 or blob[:8] != MATRIX_MAGIC:
        raise DataError(f"{path!r} is not a matrix file (bad magic)")
    rows, cols = struct.unpack("<II", blob[8:16])
    expected = 16 + 4 * rows * cols
    if len(blob) != expected:
        raise DataError(
            f"{path!r} truncated: header says {rows}x{cols} "
            f"({expected} bytes), file has {len(blob)}"
        )
    return np.frombuffer(blob[16:], dtype="<f4").reshape(rows, cols).astype(np.float64)


def read_dataset(path: str, labels_col: str | int | None = None):
    """Read a dataset as (points, labels or None).

    Binary matrix files (magic header) and delimited numeric text are both
    accepted; text may be comma- or whitespace-separated. labels_col is
    'last', a zero-based column index, or None for unlabeled data.
    """
    try:
        with open(path, "rb") as handle:
            head = handle.read(8)
    except OSError as exc:
        raise DataError(f"cannot read dataset {path!r}: {exc}") from exc
    if head == MATRIX_MAGIC:
        data = read_matrix(path)
    else:
        try:
            data = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError:
            try:
                data = np.loadtxt(path, ndmin=2)
            except ValueError as exc:
                raise DataError(f"cannot parse dataset {path!r}: {exc}") from exc
        except OSError as exc:
            raise DataError(f"cannot read dataset {path!r}: {exc}") from exc
    if not np.all(np.isfinite(data)):
        raise DataError(f"dataset {path!r} contains non-finite values")
    if labels_col is None:
        return data, None
    col = data.shape[1] - 1 if labels_col == "last" else int(labels_col)
    if not 0 <= col < data.shape[1]:
        raise DataError(f"labels column {labels_col!r} out of range for {data.shape[1]} columns")
    labels = data[:, col]
    points = np.delete(data, col, axis=1)
    if points.shape[1] == 0:
        raise DataError("dataset has no feature columns after removing labels")
    return points, labels


def plan_document(plan) -> str:
    """JSON document mirroring ExperimentPlan fields."""
    src, tgt = plan.data_source, plan.target_source
    doc = {
        "kernel": {
            "family": plan.kernel.family,
            "width": plan.kernel.width,
            "depth": plan.kernel.depth,
            "weight_var": plan.kernel.weight_var,
            "bias_var": plan.kernel.bias_var,
            "coefficients": (
                None if plan.kernel.coefficients is None else list(plan.kernel.coefficients)
            ),
        },
        "data_source": {"kind": src.kind, "dim": src.dim},
        "target_source": {
            "kind": tgt.kind,
            "degree": tgt.degree,
            "scale": tgt.scale,
            "direction_seed": tgt.direction_seed,
            "degrees": list(tgt.degrees),
        },
        "ridge": plan.ridge,
        "noise_var": plan.noise_var,
        "p_grid": list(plan.p_grid),
        "trials": plan.trials,
        "base_seed": plan.base_seed,
        "test_size": plan.test_size,
    }
    return json.dumps(doc, indent=2) + "\n"


def read_plan(path: str, dataset_path: str | None = None, labels_col=None):
    """Parse a plan document into an ExperimentPlan.

    dataset_file sources load their pool (and labels) from dataset_path,
    which may also be given inside the document as data_source.path.
    """
    from .experiments import DataSource, ExperimentPlan, TargetSource
    from .kernels import KernelDescriptor

    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read plan document {path!r}: {exc}") from exc
    try:
        kdoc = doc["kernel"]
        coeffs = kdoc.get("coefficients")
        kernel = KernelDescriptor(
            family=kdoc["family"],
            width=kdoc.get("width"),
            depth=kdoc.get("depth"),
            weight_var=kdoc.get("weight_var", 1.0),
            bias_var=kdoc.get("bias_var", 0.0),
            coefficients=None if coeffs is None else tuple(coeffs),
        )
        sdoc = doc["data_source"]
        tdoc = doc.get("target_source", {})
        labels = None
        if sdoc["kind"] == "dataset_file":
            pool_path = dataset_path or sdoc.get("path")
            if pool_path is None:
                raise DataError("dataset_file source needs a dataset path")
            pool, labels = read_dataset(
                pool_path, labels_col if labels_col is not None else sdoc.get("labels_col")
            )
            source = DataSource("dataset_file", pool=pool)
        else:
            source = DataSource(sdoc["kind"], dim=int(sdoc["dim"]))
        tkind = tdoc.get("kind", "projected_labels" if labels is not None else "sampled_synthetic")
        target = TargetSource(
            kind=tkind,
            degree=int(tdoc.get("degree", 0)),
            scale=float(tdoc.get("scale", 1.0)),
            direction_seed=int(tdoc.get("direction_seed", 0)),
            degrees=tuple(tdoc.get("degrees", (0, 1, 2, 3))),
            labels=labels if tkind == "projected_labels" else None,
        )
        plan = ExperimentPlan(
            kernel=kernel,
            data_source=source,
            target_source=target,
            ridge=float(doc["ridge"]),
            noise_var=float(doc.get("noise_var", 0.0)),
            p_grid=tuple(int(p) for p in doc["p_grid"]),
            trials=int(doc["trials"]),
            base_seed=int(doc["base_seed"]),
            test_size=int(doc.get("test_size", 10_000)),
        )
    except DataError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid plan document {path!r}: {exc}") from exc
    return plan
