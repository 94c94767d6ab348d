"""Result files: versioned CSV tables, text reports and the run manifest."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

CSV_HEADER = "# porestab-csv v1"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    lines = [CSV_HEADER, ",".join(columns)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != CSV_HEADER:
            raise ValueError(f"{path}: missing header line {CSV_HEADER!r}")
        columns = fh.readline().rstrip("\n").split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    return columns, rows


def write_eigenvalues(path, values, residuals) -> Path:
    rows = [(float(v.real), float(v.imag), float(r)) for v, r in zip(values, residuals)]
    return write_csv(path, ("re", "im", "residual"), rows)


def write_stability_report(path, report, header: dict | None = None) -> Path:
    """Key/value lines followed by the eigenvalue table."""
    lines = ["# porestab stability report v1"]
    items = dict(header or {})
    items.update({
        "verdict": report.verdict,
        "criterion_lhs": report.criterion_lhs,
        "criterion_rhs": report.criterion_rhs,
        "criterion_satisfied": report.criterion_satisfied,
        "poincare_constant": report.c_p,
        "poincare_mu1": report.mu_1,
        "poincare_subspace": report.poincare_subspace,
        "inflow_present": report.has_inflow,
        "spectral_gap": report.spectral_gap,
        "spectral_gap_scope": f"min Re over the {report.n_computed} computed eigenvalues",
        "zero_tolerance": report.zero_tol,
        "eigensolver": report.method,
        "max_eigen_residual": float(np.max(report.residuals)),
        "energy_identity_residual": report.energy_residual,
        "conjugate_closed": report.conjugate_closed,
        "discretization_anomaly": report.anomaly,
        "probe_hits": len(report.probe_hits),
        "probe_inconsistent": sum(not r.consistent for r in report.probe),
        "decay_norm": "volume/area-weighted discrete 2-norm",
    })
    for key, value in items.items():
        lines.append(f"{key} = {fmt(value)}")
    for note in report.notes:
        lines.append(f"note = {note}")
    lines.append("")
    lines.append("[eigenvalues]")
    lines.append("index re im residual")
    for m, (v, r) in enumerate(zip(report.eigenvalues, report.residuals)):
        lines.append(f"{m} {fmt(float(v.real))} {fmt(float(v.imag))} {fmt(float(r))}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_report(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("["):
                break
            if " = " in line:
                key, value = line.rstrip("\n").split(" = ", 1)
                out[key] = value
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json_atomic(path, data) -> Path:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def file_inventory(out_dir, files) -> list[dict]:
    out_dir = Path(out_dir)
    return [{"path": str(Path(f).relative_to(out_dir)), "sha256": sha256_file(f),
             "bytes": Path(f).stat().st_size} for f in sorted(map(Path, files))]
