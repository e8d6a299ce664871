"""Command-line entry point.

Subcommands wire the library together through a JSON config file with the
``lamhb/v1`` schema:

* ``lamhb lut-gen    --config cfg.json``  build and save a skin-depth table
* ``lamhb run-transient --config cfg.json``  fine-mesh reference solve
* ``lamhb run-hb     --config cfg.json``  one harmonic-balance solve
* ``lamhb scenario   --config cfg.json``  full comparison protocol
* ``lamhb selftest``                      quick analytic-identity suite

Exit codes: 0 ok, 1 numerical failure (non-convergence), 2 config error,
3 I/O error.  Errors are reported on stderr as a single JSON line
``{"code", "message", "context"}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bench, fe1d, hbsolver, lut as lut_mod, material
from .analytic import skin_depth
from .fe1d import NonConvergenceError
from .homog import HomogenizationParams

logger = logging.getLogger("lamhb")

SCHEMA = "lamhb/v1"


class ConfigError(ValueError):
    """Invalid run configuration; carries the offending key path."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


def _expect_keys(block: dict, allowed: set[str], required: set[str],
                 path: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}",
                          f"{path}.{sorted(unknown)[0]}")
    missing = required - set(block)
    if missing:
        raise ConfigError(f"missing required key(s) {sorted(missing)}",
                          f"{path}.{sorted(missing)[0]}")


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}", str(path))
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object", str(path))
    if cfg.get("schema") != SCHEMA:
        raise ConfigError(f"schema must be {SCHEMA!r}", "schema")
    _expect_keys(cfg, {"schema", "material", "geometry", "drive", "solver",
                       "lut", "transient", "scenario", "output"},
                 {"schema", "material"}, "")
    return cfg


def _build_curve(cfg: dict):
    try:
        return material.curve_from_config(cfg["material"])
    except material.MaterialError as exc:
        raise ConfigError(str(exc), "material")


def _build_geometry(cfg: dict) -> tuple[fe1d.StackGeometry, float, float]:
    block = cfg.get("geometry")
    if block is None:
        raise ConfigError("geometry block required for this command", "geometry")
    _expect_keys(block, {"n_laminations", "d", "d_ins", "gamma", "padding",
                         "sigma", "nu_ins"},
                 {"n_laminations", "d", "sigma"}, "geometry")
    d = float(block["d"])
    if "gamma" in block and "d_ins" in block:
        raise ConfigError("give either d_ins or gamma, not both",
                          "geometry.gamma")
    if "gamma" in block:
        gamma = float(block["gamma"])
        if not 0 < gamma <= 1:
            raise ConfigError("stacking factor must be in (0, 1]",
                              "geometry.gamma")
        d_ins = d * (1.0 / gamma - 1.0)
    else:
        d_ins = float(block.get("d_ins", 0.0))
    try:
        geom = fe1d.StackGeometry(
            n_laminations=int(block["n_laminations"]), d=d, d_ins=d_ins,
            padding=float(block.get("padding", 0.0)))
    except fe1d.MeshError as exc:
        raise ConfigError(str(exc), "geometry")
    return geom, float(block["sigma"]), float(block.get("nu_ins",
                                                        material.NU_VAC))


def _build_drive(cfg: dict) -> fe1d.Drive:
    block = cfg.get("drive")
    if block is None:
        raise ConfigError("drive block required for this command", "drive")
    _expect_keys(block, {"h_dc", "h_ac", "f_f", "boundary"},
                 {"h_dc", "h_ac", "f_f"}, "drive")
    try:
        return fe1d.Drive(h_dc=float(block["h_dc"]), h_ac=float(block["h_ac"]),
                          f_f=float(block["f_f"]),
                          boundary=block.get("boundary", "symmetric_neumann"))
    except fe1d.MeshError as exc:
        raise ConfigError(str(exc), "drive")


def _solver_options(cfg: dict, lut=None) -> tuple[hbsolver.HarmonicSet,
                                                  hbsolver.SolverOptions]:
    block = cfg.get("solver", {})
    _expect_keys(block, {"mode", "m", "parity", "tol_energy", "max_iter",
                         "relaxation", "n_time_samples",
                         "insulation_corrections", "local_profile_points"},
                 {"mode"}, "solver")
    try:
        hset = hbsolver.HarmonicSet(m=int(block.get("m", 5)),
                                    parity=block.get("parity", "all"))
        options = hbsolver.SolverOptions(
            mode=block["mode"],
            tol_energy=float(block.get("tol_energy", 1e-4)),
            max_iter=int(block.get("max_iter", 200)),
            relaxation=float(block.get("relaxation", 1.0)),
            n_time_samples=int(block.get("n_time_samples", 64)),
            insulation_corrections=bool(
                block.get("insulation_corrections", True)),
            local_profile_points=int(block.get("local_profile_points", 64)),
            lut=lut)
    except hbsolver.HBError as exc:
        raise ConfigError(str(exc), "solver")
    return hset, options


def _out_dir(cfg: dict, args) -> Path:
    if args.out is not None:
        return Path(args.out)
    out = cfg.get("output", {}).get("dir")
    if out is None:
        raise ConfigError("no output directory (config output.dir or --out)",
                          "output.dir")
    return Path(out)


def cmd_lut_gen(cfg: dict, args) -> int:
    geom, sigma, _ = _build_geometry(cfg)
    curve = _build_curve(cfg)
    block = cfg.get("lut")
    if block is None:
        raise ConfigError("lut block required", "lut")
    _expect_keys(block, {"path", "freqs", "drive_levels", "dc_bias",
                         "dc_ratio", "boundary", "b_span", "n_levels",
                         "steps_per_period"},
                 {"path", "freqs"}, "lut")
    table = lut_mod.generate_lut(
        curve, sigma, geom.d, [float(f) for f in block["freqs"]],
        drive_levels=block.get("drive_levels"),
        dc_bias=float(block.get("dc_bias", 0.0)),
        dc_ratio=float(block.get("dc_ratio", 0.0)),
        boundary=block.get("boundary", "symmetric_neumann"),
        b_span=tuple(block.get("b_span", (0.1, 1.9))),
        n_levels=int(block.get("n_levels", 12)),
        steps_per_period=int(block.get("steps_per_period", 200)),
        threads=args.threads)
    lut_mod.save_lut(table, block["path"])
    print(f"wrote {block['path']} "
          f"({sum(b.size for b, _ in table.entries.values())} entries, "
          f"{len(table.frequencies)} frequencies)")
    return 0


def cmd_run_transient(cfg: dict, args) -> int:
    geom, sigma, nu_ins = _build_geometry(cfg)
    curve = _build_curve(cfg)
    drive = _build_drive(cfg)
    block = cfg.get("transient", {})
    _expect_keys(block, {"steps_per_period", "n_periods", "newton", "lam_h"},
                 set(), "transient")
    lam_h = block.get("lam_h")
    if lam_h is None:
        delta_in = skin_depth(curve.nu_initial, sigma,
                              2 * math.pi * drive.f_f)
        lam_h = min(delta_in / 2, geom.d / 4)
    mesh = fe1d.build_stack_mesh(geom, sigma, lam_h=float(lam_h),
                                 nu_ins=nu_ins)
    result = fe1d.transient_solve(
        mesh, curve, drive,
        steps_per_period=int(block.get("steps_per_period", 200)),
        n_periods=int(block.get("n_periods", 3)),
        newton=bool(block.get("newton", False)))
    out = _out_dir(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    fe1d.save_transient_csv(result, out / "transient.csv")
    fe1d.save_mesh_text(mesh, out / "mesh.txt")
    loss = fe1d.compute_losses_transient(result)
    print(f"transient done: {mesh.n_nodes} DoFs, "
          f"loss {loss:.6g} W/m^2, B-bar_max "
          f"{fe1d.max_average_flux_density(result):.4f} T")
    return 0


def cmd_run_hb(cfg: dict, args) -> int:
    geom, sigma, nu_ins = _build_geometry(cfg)
    curve = _build_curve(cfg)
    drive = _build_drive(cfg)
    lut_block = cfg.get("lut") or {}
    table = None
    if lut_block.get("path") and Path(lut_block["path"]).exists():
        table = lut_mod.load_lut(lut_block["path"])
    hset, options = _solver_options(cfg, lut=table)
    if options.mode == "fine_hbfem":
        delta_in = skin_depth(curve.nu_initial, sigma,
                              2 * math.pi * drive.f_f)
        mesh = fe1d.build_stack_mesh(geom, sigma,
                                     lam_h=min(delta_in / 2, geom.d / 4),
                                     nu_ins=nu_ins)
    else:
        params = HomogenizationParams.from_stacking_factor(
            d=geom.d, gamma=geom.gamma, sigma=sigma, nu_ins=nu_ins)
        n_el = int(cfg.get("solver", {}).get("hom_elements", 4)) \
            if "hom_elements" in cfg.get("solver", {}) else 4
        mesh = fe1d.build_homogenized_mesh(geom, params, n_elements=n_el)
    solution = hbsolver.hb_solve(mesh, curve, drive, hset, options,
                                 geometry=geom)
    out = _out_dir(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    extra = "" if args.no_timestamp else _timestamp_suffix()
    hbsolver.save_solution_csv(solution, out / "solution.csv",
                               header_extra=extra)
    hbsolver.save_trace_csv(solution, out / "trace.csv", header_extra=extra)
    print(f"hb solve done in {solution.n_iterations} iterations, "
          f"loss {hbsolver.solution_loss(solution):.6g} W/m^2")
    return 0


def cmd_scenario(cfg: dict, args) -> int:
    geom, sigma, nu_ins = _build_geometry(cfg)
    curve = _build_curve(cfg)
    block = cfg.get("scenario")
    if block is None:
        raise ConfigError("scenario block required", "scenario")
    _expect_keys(block, {"name", "freqs", "modes", "target_b_max",
                         "ac_over_dc", "m", "hom_elements", "lut_path",
                         "lut_n_levels", "dof_study_freq"},
                 {"name", "freqs", "target_b_max", "ac_over_dc"}, "scenario")
    freqs = tuple(float(f) for f in block["freqs"])
    drive, record = bench.calibrate_flux_drive(
        geom, curve, sigma, float(block["target_b_max"]),
        float(block["ac_over_dc"]), nu_ins=nu_ins)
    lut_path = block.get("lut_path")
    if lut_path and Path(lut_path).exists():
        table = lut_mod.load_lut(lut_path)
    else:
        table = bench.generate_scenario_lut(
            geom, curve, sigma, freqs, 1.0 / float(block["ac_over_dc"]),
            n_levels=int(block.get("lut_n_levels", 25)),
            threads=args.threads)
        if lut_path:
            lut_mod.save_lut(table, lut_path)
    scenario = bench.Scenario(
        name=block["name"], geometry=geom, curve=curve, sigma=sigma,
        drive=drive, freqs=freqs,
        modes=tuple(block.get("modes", ("hom_naive_dc", "hom_refined_dc"))),
        hset=hbsolver.HarmonicSet(m=int(block.get("m", 5)), parity="all"),
        nu_ins=nu_ins, lut=table, calibration=record,
        hom_elements=int(block.get("hom_elements", 4)),
        output_dir=_out_dir(cfg, args))
    report = bench.run_scenario(scenario, threads=args.threads,
                                make_plots=not args.no_plots,
                                timestamp=not args.no_timestamp,
                                verbose=args.verbose)
    if "dof_study_freq" in block:
        bench.dof_convergence_study(scenario,
                                    float(block["dof_study_freq"]),
                                    timestamp=not args.no_timestamp)
        if not args.no_plots:
            from . import plots

            plots.render_scenario(scenario.output_dir)
    bad = [c for c in report.cells if not c.converged]
    for c in bad:
        logger.warning("cell f=%g mode=%s did not converge: %s", c.f, c.mode,
                       c.note)
    print(f"scenario {scenario.name}: {len(report.cells)} cells -> "
          f"{scenario.output_dir}")
    return 1 if bad else 0


def cmd_selftest(args) -> int:
    """Quick analytic-identity checks; exit 0 when every one passes."""
    import numpy.random as npr

    from . import analytic, homog

    rng = np.random.default_rng(2024)
    failures = []

    # tensor reduction and zero-frequency limits
    p = HomogenizationParams.from_stacking_factor(
        d=5e-4, gamma=0.985, sigma=10.4e6, nu_ins=material.NU_VAC)
    worst = 0.0
    for _ in range(100):
        nu = 10 ** rng.uniform(2, 4)
        omega = 10 ** rng.uniform(2, 6)
        w = homog.standard_wavenumbers(p, nu, omega)
        a = homog.original_reluctivity_xy(p, nu, omega)
        b = homog.modified_reluctivity_xy(p, nu, omega, w)
        worst = max(worst, abs(a - b) / abs(a))
    _check(failures, "tensor reduction (modified -> original)", worst, 1e-12)

    nu = 400.0
    nutld = homog.mixed_reluctivity_xy(p, nu)
    omega_low = 2 * nutld / (p.gamma * p.sigma * (p.d_tilde / 1e-4) ** 2)
    entry = homog.original_reluctivity_xy(p, nu, omega_low)
    _check(failures, "zero-frequency limit (original -> simple)",
           abs(entry - nutld) / nutld, 1e-6)

    # averaged-flux back-transformation preserves the average
    from scipy.integrate import simpson

    worst = 0.0
    for _ in range(100):
        d = 10 ** rng.uniform(-4, -2.5)
        d_over_delta = 10 ** rng.uniform(-2, 1)
        nu0 = 10 ** rng.uniform(2, 4)
        sigma = 10 ** rng.uniform(6, 7.5)
        omega = 2 * nu0 * d_over_delta ** 2 / (sigma * d * d)
        b_avg = complex(rng.normal(), rng.normal())
        z = np.linspace(-d / 2, d / 2, 4097)
        prof = analytic.local_flux_from_average(b_avg, z, nu0, sigma, omega, d)
        avg = simpson(prof, x=z) / d
        worst = max(worst, abs(avg - b_avg) / abs(b_avg))
    _check(failures, "local flux preserves thickness average", worst, 1e-10)

    # loss formula equals the |J|^2 quadrature
    from scipy.integrate import quad

    worst = 0.0
    for _ in range(50):
        nu = 10 ** rng.uniform(2, 4)
        sigma = 10 ** rng.uniform(6, 7.5)
        d = 10 ** rng.uniform(-4, -2.5)
        omega = 2 * math.pi * 10 ** rng.uniform(1, 4.5)
        h0 = 10 ** rng.uniform(1, 3.5)
        delta = skin_depth(nu, sigma, omega)
        k = (1 + 1j) / delta

        def j_sq(z):
            return abs(-k * h0 * np.sinh(k * z) / np.cosh(k * d / 2)) ** 2

        q, _ = quad(j_sq, -d / 2, d / 2, limit=400)
        ana = analytic.eddy_loss_density_linear(h0, sigma, d, delta)
        worst = max(worst, abs(q / (2 * sigma * d) - ana) / ana)
    _check(failures, "loss formula vs |J|^2 quadrature", worst, 1e-8)

    if failures:
        for name, value, tol in failures:
            print(f"FAIL {name}: {value:.3e} > {tol:g}")
        return 1
    print("selftest: all analytic identities hold")
    return 0


def _check(failures, name, value, tol):
    status = "ok  " if value <= tol else "FAIL"
    print(f"{status} {name}: {value:.3e} (tol {tol:g})")
    if value > tol:
        failures.append((name, value, tol))


def _timestamp_suffix() -> str:
    from datetime import datetime, timezone

    return f"; generated={datetime.now(timezone.utc).isoformat()}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lamhb",
        description="DC-biased homogenized harmonic-balance FE solver "
                    "for laminated cores (1-D slab scale)")
    parser.add_argument("--verbose", action="store_true",
                        help="chatty logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("lut-gen", "run-transient", "run-hb", "scenario"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="lamhb/v1 JSON config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes for parallel cells (0 = auto)")
        p.add_argument("--no-timestamp", action="store_true",
                       help="omit timestamps from output headers")
        p.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering")
    sub.add_parser("selftest")
    return parser


_COMMANDS = {
    "lut-gen": cmd_lut_gen,
    "run-transient": cmd_run_transient,
    "run-hb": cmd_run_hb,
    "scenario": cmd_scenario,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "selftest":
            return cmd_selftest(args)
        cfg = load_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        _emit_error(2, str(exc), exc.path)
        return 2
    except NonConvergenceError as exc:
        _emit_error(1, str(exc), "solver")
        return 1
    except (lut_mod.LUTError,) as exc:
        _emit_error(2, str(exc), "lut")
        return 2
    except OSError as exc:
        _emit_error(3, str(exc), getattr(exc, "filename", "") or "io")
        return 3


def _emit_error(code: int, message: str, context: str) -> None:
    print(json.dumps({"code": code, "message": message, "context": context}),
          file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
