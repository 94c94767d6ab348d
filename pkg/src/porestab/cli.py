"""Command line entry point: ``porestab {analyze,simulate,poincare,sweep}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .compat import check_compatibility
from .config import RunConfig, build_species, load_config, parse_config
from .errors import (
    AssemblyError,
    ConfigurationError,
    DomainError,
    InsufficientDecayError,
    NumericalError,
    PorestabError,
    PreconditionError,
    UnsupportedConstructionError,
)
from .io import (
    file_inventory,
    fmt,
    write_csv,
    write_eigenvalues,
    write_json_atomic,
    write_stability_report,
)
from .mesh import CylinderMesh, CylinderSpec, build_mesh, poincare_constant_surface, poincare_oracle
from .model import (
    SpeciesSystem,
    equilibrium_chemical_balance,
    linearize_reaction,
    reaction_rate,
)
from .operators import VelocityField, build_velocity, export_triplets, matched_inflow
from .spectral import energy_identity_residuals, stability_verdict
from .timestep import StateField, decay_rate, simulate, smooth_perturbation

log = logging.getLogger("porestab")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
VALIDATION_ERRORS = (ConfigurationError, PreconditionError, UnsupportedConstructionError,
                     DomainError, AssemblyError)


@dataclass
class Problem:
    sys: SpeciesSystem
    mesh: CylinderMesh
    velocity: VelocityField
    psi: np.ndarray
    xi: np.ndarray
    g_in: np.ndarray


def build_problem(cfg: RunConfig) -> Problem:
    g = cfg.geometry
    sys_ = build_species(cfg.species)
    mesh = build_mesh(CylinderSpec(g.radius, g.height), g.n_r, g.n_theta, g.n_z)
    velocity = build_velocity(mesh, cfg.velocity.w_max, cfg.velocity.profile)
    if cfg.equilibrium.mode == "balance":
        psi, xi = equilibrium_chemical_balance(sys_)
    else:
        xi = np.asarray(cfg.equilibrium.xi, dtype=float)
        r = reaction_rate(sys_, xi)
        scale = sys_.kappa_f + sys_.kappa_b
        if np.max(np.abs(r)) > 1e-10 * scale * max(1.0, float(np.max(xi))) ** max(sys_.order_forward, sys_.order_backward):
            raise ConfigurationError(f"equilibrium.xi is not a reaction equilibrium (rate {r.tolist()})")
        psi = sys_.k_de * xi / sys_.k_ad
    g_in = matched_inflow(sys_, (psi, xi), velocity)
    return Problem(sys_, mesh, velocity, psi, xi, g_in)


def _rows_probe(report):
    return [(r.index, r.eigenvalue.real, r.eigenvalue.imag, r.lhs, r.rhs,
             r.satisfied, r.degenerate, r.consistent) for r in report.probe]


def cmd_analyze(cfg: RunConfig, out: Path, info: dict) -> list[Path]:
    p = build_problem(cfg)
    info["mesh"] = p.mesh.summary()
    a = cfg.analyze
    lin = linearize_reaction(p.sys, p.xi)
    if a.b_scale != 1.0:
        lin = lin.scaled(a.b_scale)
    report, op, pairs = stability_verdict(p.sys, p.mesh, (p.psi, p.xi), p.velocity, k=a.k,
                                          lin=lin, method=a.method, seed=cfg.seed,
                                          return_operator=True)
    info["operator"] = op.block_offsets
    info["verdicts"] = {"analyze": report.verdict, "anomaly": report.anomaly}
    header = {"b_scale": a.b_scale, "mesh_checksum": p.mesh.checksum(), "k_requested": a.k}
    files = [
        write_stability_report(out / "report.txt", report, header),
        write_eigenvalues(out / "eigenvalues.csv", report.eigenvalues, report.residuals),
        write_csv(out / "energy_identity.csv", ("index", "re", "im", "relative_mismatch"),
                  [(m, v.real, v.imag, r) for m, (v, r) in
                   enumerate(zip(pairs.values, energy_identity_residuals(op, pairs)))]),
        write_csv(out / "probe.csv",
                  ("index", "re", "im", "lhs", "rhs", "satisfied", "degenerate", "consistent"),
                  _rows_probe(report)),
    ]
    if a.export_operator:
        export_triplets(op, out / "operator.coo")
        files.append(out / "operator.coo")
    log.info("verdict %s, gap %.6g, criterion %.4g <= %.4g", report.verdict,
             report.spectral_gap, report.criterion_lhs, report.criterion_rhs)
    return files


def cmd_simulate(cfg: RunConfig, out: Path, info: dict) -> list[Path]:
    p = build_problem(cfg)
    s = cfg.simulate
    info["mesh"] = p.mesh.summary()
    ref = StateField.constant(p.mesh, p.psi, p.xi)
    pb, ps = smooth_perturbation(p.mesh, p.sys.n_species, s.delta, seed=cfg.seed)
    state0 = StateField(ref.c + pb, ref.c_surf + ps)
    compat = check_compatibility(p.sys, state0, p.mesh, p.velocity, p.g_in)
    predicted = None
    if s.predict:
        report = stability_verdict(p.sys, p.mesh, (p.psi, p.xi), p.velocity, k=s.k, seed=cfg.seed)
        predicted = report.spectral_gap
        info["verdicts"] = {"analyze": report.verdict}
    tr = simulate(p.sys, p.mesh, p.velocity, p.g_in, state0, s.t_end, s.dt,
                  sample_every=s.sample_every, reference=ref)
    n = p.sys.n_species
    traj_cols = (["t"] + [f"bulk_mass_{i}" for i in range(n)]
                 + [f"surface_mass_{i}" for i in range(n)] + ["deviation"])
    traj_rows = [[t, *mb, *ms, d] for t, mb, ms, d in
                 zip(tr.times, tr.bulk_mass, tr.surface_mass, tr.deviations)]
    led_cols = ["step", "t"]
    for name in ("delta", "inflow", "outflow", "reaction", "relative_residual"):
        led_cols += [f"{name}_{i}" for i in range(n)]
    led_rows = [[rec.step, rec.time, *rec.delta, *rec.inflow, *rec.outflow, *rec.reaction,
                 *rec.relative] for rec in tr.ledger]
    summary = {
        "t_end": s.t_end, "dt": s.dt, "delta": s.delta, "steps": len(tr.ledger),
        "max_ledger_residual": tr.max_ledger_residual,
        "initial_deviation": tr.deviations[0], "final_deviation": tr.deviations[-1],
        "predicted_rate": predicted if predicted is not None else "none",
        "decay_norm": "volume/area-weighted discrete 2-norm",
    }
    try:
        fit = decay_rate(tr.times, tr.deviations, predicted, s.dt)
        summary.update({
            "fit_status": "ok", "fitted_rate": fit.fitted_rate,
            "corrected_rate": fit.corrected_rate, "confidence_width": fit.confidence_width,
            "tail_samples": fit.n_tail,
            "ratio": fit.ratio if fit.ratio is not None else "none",
        })
    except InsufficientDecayError as exc:
        summary.update({"fit_status": "insufficient-decay", "fit_message": str(exc)})
    summary.update({f"compat_{k}": v for k, v in compat.residuals.items()})
    summary["compat_advisory"] = compat.advisory
    info["verdicts"] = dict(info.get("verdicts", {}), decay_fit=summary["fit_status"])
    text = ["# porestab simulation summary v1"] + [f"{k} = {fmt(v)}" for k, v in summary.items()]
    (out / "decay_fit.txt").write_text("\n".join(text) + "\n")
    log.info("simulated %d steps, fit %s", len(tr.ledger), summary["fit_status"])
    return [
        write_csv(out / "trajectory.csv", traj_cols, traj_rows),
        write_csv(out / "ledger.csv", led_cols, led_rows),
        out / "decay_fit.txt",
    ]


def cmd_poincare(cfg: RunConfig, out: Path, info: dict) -> list[Path]:
    g = cfg.geometry
    spec = CylinderSpec(g.radius, g.height)
    oracle = poincare_oracle(g.radius, g.height)
    rows = []
    for n in cfg.poincare.resolutions:
        mesh = build_mesh(spec, g.n_r, n, n)
        c_p, mu = poincare_constant_surface(mesh)
        rows.append((n, n, mu, c_p, oracle, abs(mu - oracle) / oracle))
        log.info("poincare %dx%d: mu_1 = %.8g (oracle %.8g)", n, n, mu, oracle)
    info["verdicts"] = {"poincare_rel_error": rows[-1][-1]}
    return [write_csv(out / "poincare.csv",
                      ("n_theta", "n_z", "mu_1", "c_p", "oracle_mu_1", "rel_error"), rows)]


def sweep_point(cfg: RunConfig, point: dict) -> dict:
    """Stability summary for one sweep point; failures become error rows."""
    row = dict(point)
    try:
        p = build_problem(cfg.with_overrides(point))
        k = min(cfg.sweep.k, p.sys.n_species * (p.mesh.n_bulk + p.mesh.n_surf))
        rep = stability_verdict(p.sys, p.mesh, (p.psi, p.xi), p.velocity, k=k,
                                method=cfg.analyze.method, seed=cfg.seed)
        row.update(criterion_lhs=rep.criterion_lhs, criterion_rhs=rep.criterion_rhs,
                   spectral_gap=rep.spectral_gap, verdict=rep.verdict, n_eigs=rep.n_computed,
                   error="")
    except PorestabError as exc:
        row.update(criterion_lhs="", criterion_rhs="", spectral_gap="", verdict="error",
                   n_eigs=0, error=f"{type(exc).__name__}: {exc}".replace(",", ";"))
    return row


def cmd_sweep(cfg: RunConfig, out: Path, info: dict, jobs: int = 1) -> list[Path]:
    points = cfg.sweep_points()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(sweep_point, [cfg] * len(points), points))
    else:
        rows = [sweep_point(cfg, pt) for pt in points]
    axes = list(cfg.sweep.axes)
    cols = axes + ["criterion_lhs", "criterion_rhs", "spectral_gap", "verdict", "n_eigs", "error"]
    info["verdicts"] = {"points": len(rows),
                        "errors": sum(r["verdict"] == "error" for r in rows)}
    return [write_csv(out / "sweep.csv", cols, [[r[c] for c in cols] for r in rows])]


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate,
            "poincare": cmd_poincare, "sweep": cmd_sweep}


def run(command: str, cfg: RunConfig, out_dir=None, jobs: int = 1) -> tuple[int, dict]:
    """Run one command, always leaving a manifest behind."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    info = {}
    manifest = {
        "tool": "porestab", "version": __version__, "command": command,
        "config": cfg.to_dict(), "complete": False, "error": None,
    }
    t0 = time.perf_counter()
    code = EXIT_OK
    files = []
    try:
        fn = COMMANDS[command]
        files = fn(cfg, out, info, jobs) if command == "sweep" else fn(cfg, out, info)
        manifest["complete"] = True
    except VALIDATION_ERRORS as exc:
        code = EXIT_VALIDATION
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
    except NumericalError as exc:
        code = EXIT_NUMERICAL
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc),
                             "diagnostics": exc.diagnostics}
    if not manifest["complete"]:
        # list whatever was written before the failure
        files = [f for f in out.iterdir() if f.is_file() and f.name != "manifest.json"
                 and not f.name.startswith(".tmp-")]
    manifest.update(info)
    manifest["timings"] = {"total_seconds": time.perf_counter() - t0}
    manifest["files"] = file_inventory(out, files)
    write_json_atomic(out / "manifest.json", manifest)
    if manifest["error"]:
        log.error("%s: %s", manifest["error"]["type"], manifest["error"]["message"])
    return code, manifest


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="porestab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"porestab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="YAML run configuration")
        sp.add_argument("--output", type=Path, help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="seed for perturbations and iterative solvers")
        sp.add_argument("--jobs", type=int, default=1, help="parallel sweep points")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else parse_config({})
        changes = {"scenario": args.command}
        if args.seed is not None:
            changes["seed"] = args.seed
        cfg = dataclasses.replace(cfg, **changes)
        if args.command == "sweep":
            cfg = parse_config(cfg.to_dict())  # re-validate the sweep-specific fields
        if args.jobs < 1:
            raise ConfigurationError(f"--jobs must be >= 1, got {args.jobs}")
    except (ConfigurationError, OSError) as exc:
        print(f"porestab: configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    code, manifest = run(args.command, cfg, args.output, args.jobs)
    if code:
        print(f"porestab: {manifest['error']['type']}: {manifest['error']['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
