"""Calibrated field-skin-depth look-up tables.

A table row stores, for one frequency, the peak sheet-averaged flux density
B-bar_max reached in a nonlinear single-sheet transient and the skin depth
delta_H at which the linear loss formula reproduces that transient's
time-averaged eddy loss density.  The refined dc-biased solver keys into the
table with each element's current B-bar_max to pick up the
saturation-corrected field decay length.

File format (UTF-8 CSV, 17 significant digits, sorted by frequency then
flux): one header line

    # lamhb-lut v1; sigma=<S/m>; d=<m>; material=<hash>

followed by ``f_hz,b_avg_max_T,delta_h_m`` rows.  Save/load round trips are
byte identical.
"""

from __future__ import annotations

import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy import optimize

from . import fe1d, material
from .analytic import eddy_loss_density_linear, skin_depth

logger = logging.getLogger(__name__)

_HEADER_RE = re.compile(
    r"# lamhb-lut v1; sigma=(?P<sigma>[^;]+); d=(?P<d>[^;]+); material=(?P<mat>\S+)"
)

# delta bracket for the loss-matching root solve, relative to the sheet
# thickness.
_DELTA_BRACKET = (1e-3, 1e3)


class LUTError(ValueError):
    """Malformed look-up table data or file."""


class LookupTable:
    """Per-frequency monotone map from B-bar_max to the calibrated delta_H."""

    def __init__(self, entries: dict[float, tuple[np.ndarray, np.ndarray]],
                 metadata: dict):
        self.entries: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        for f in sorted(entries):
            b, dh = entries[f]
            b = np.asarray(b, dtype=float)
            dh = np.asarray(dh, dtype=float)
            if b.size < 2:
                raise LUTError(f"frequency {f} Hz needs at least two table points")
            if np.any(np.diff(b) <= 0):
                raise LUTError(f"B-bar_max values at {f} Hz must strictly increase")
            if np.any(dh <= 0):
                raise LUTError(f"delta_H values at {f} Hz must be positive")
            self.entries[float(f)] = (b, dh)
        if not self.entries:
            raise LUTError("empty look-up table")
        self.metadata = dict(metadata)
        self.clamp_events = 0

    @property
    def frequencies(self) -> list[float]:
        return sorted(self.entries)

    def _match_frequency(self, f: float) -> float:
        for fk in self.entries:
            if math.isclose(fk, f, rel_tol=1e-12, abs_tol=0.0):
                return fk
        raise LUTError(
            f"frequency {f} Hz not tabulated (no interpolation across "
            f"frequencies); available: {self.frequencies}"
        )

    def lookup(self, f: float, b_avg_max: float) -> float:
        """delta_H at a tabulated frequency, linear in B-bar_max, clamped.

        Queries outside the tabulated flux range return the end value; each
        such clamp increments ``clamp_events`` for reporting.
        """
        b, dh = self.entries[self._match_frequency(f)]
        if b_avg_max < b[0] or b_avg_max > b[-1]:
            self.clamp_events += 1
        return float(np.interp(b_avg_max, b, dh))


def lookup_delta_h(lut: LookupTable, f: float, b_avg_max: float) -> float:
    return lut.lookup(f, b_avg_max)


def _cell_mesh(curve, sigma: float, d: float, d_ins: float, nu_ins: float,
               f: float) -> fe1d.Mesh1D:
    """Resolved mesh of one periodic cell: a sheet plus its insulation share.

    Finer than the benchmark oracle rule: the homogenized model is exact for
    linear sheets, so its loss-versus-delta curve peaks at the true value
    and a generation reference biased high would leave no root.
    """
    h = min(fe1d.skin_depth_mesh_size(curve.nu_initial, sigma, f) / 4.0,
            d / 8.0)
    n_lam = max(1, math.ceil(d / h - 1e-9))
    nodes = np.linspace(0.0, d, n_lam + 1)
    regions = [fe1d.Region("laminate", sigma=sigma, conductor_group=0)]
    region_ids = [0] * n_lam
    if d_ins > 0:
        nodes = np.concatenate([nodes, [d + d_ins]])
        regions.append(fe1d.Region("insulation", nu_const=nu_ins))
        region_ids.append(1)
    return fe1d.Mesh1D(nodes, np.array(region_ids), tuple(regions))


def _cell_hom_mesh(params) -> fe1d.Mesh1D:
    """One-element homogenized twin of the periodic cell."""
    length = params.d_tilde
    return fe1d.Mesh1D(np.array([0.0, length]), np.array([0]),
                       (fe1d.Region("homogenized", homog=params),))


def _sheet_run(curve, sigma, d, f, h_ac, dc_bias, steps_per_period, n_periods,
               newton, boundary="symmetric_neumann", d_ins=0.0,
               nu_ins=1.0 / (4e-7 * math.pi)):
    """Periodic-cell transient; returns (p_avg, b_max, nu0, b1_peak).

    nu0 is the period average of the reluctivity evaluated on the
    sheet-averaged flux signal and b1_peak the peak amplitude of that
    signal's fundamental - the same quantities the homogenized solver will
    form at its operating point, so the calibration below is consistent
    with how the table is consumed.
    """
    mesh = _cell_mesh(curve, sigma, d, d_ins, nu_ins, f)
    drive = fe1d.Drive(h_dc=dc_bias, h_ac=h_ac, f_f=f, boundary=boundary)
    result = fe1d.transient_solve(mesh, curve, drive,
                                  steps_per_period=steps_per_period,
                                  n_periods=n_periods, newton=newton)
    p_avg = result.average_loss_density()
    series, b_max = fe1d.average_flux_density(result, 0)
    idx = result.final_period()
    t = result.t[idx]
    omega = drive.omega_f
    b1_peak = 2.0 * abs(np.mean(series[idx] * np.exp(-1j * omega * t)))
    nu0 = float(np.mean(material.reluctivity(np.abs(series[idx]), curve)))
    return p_avg, b_max, nu0, b1_peak


class _FixedDeltaH:
    """Degenerate table returning one delta_H (used during calibration)."""

    def __init__(self, value: float):
        self.value = float(value)
        self.clamp_events = 0

    def lookup(self, f: float, b_avg_max: float) -> float:
        return self.value


def _lut_cell(args):
    """Calibrate delta_H for one (frequency, level): match the cell loss.

    The reference transient of one periodic cell (sheet plus insulation
    share) provides the loss density and B-bar_max; delta_H is then the
    root at which the refined homogenized solver itself, run on the
    collapsed cell with the same drive and the same insulation-corrected
    tensor chain, reproduces that loss density.  Equating the consumer's
    own loss expression (rather than a hand-identified surface amplitude,
    which the nonlinear case leaves ambiguous) keeps generation and use
    exactly consistent; in the linear limit the solver loss reduces to the
    analytical formula and the root is the ordinary skin depth.
    """
    from . import hbsolver
    from .homog import HomogenizationParams

    (curve, sigma, d, f, level, dc_bias, steps_per_period, n_periods,
     newton, boundary, m_cal, n_time_samples, d_ins, nu_ins) = args
    p_avg, b_max, nu0, b1_peak = _sheet_run(
        curve, sigma, d, f, level, dc_bias, steps_per_period, n_periods,
        newton, boundary, d_ins, nu_ins)
    lo, hi = _DELTA_BRACKET[0] * d, _DELTA_BRACKET[1] * d

    params = HomogenizationParams.from_thicknesses(d, d_ins, sigma, nu_ins)
    hmesh = _cell_hom_mesh(params)
    drive = fe1d.Drive(h_dc=dc_bias, h_ac=level, f_f=f, boundary=boundary)
    hset = hbsolver.HarmonicSet(m=m_cal, parity="all")

    def solver_loss(delta_h: float) -> float:
        opts = hbsolver.SolverOptions(
            mode="hom_refined_dc", lut=_FixedDeltaH(delta_h),
            tol_energy=1e-6, max_iter=300, n_time_samples=n_time_samples)
        sol = hbsolver.hb_solve(hmesh, curve, drive, hset, opts)
        return hbsolver.solution_loss(sol) / d

    def gap(delta_h: float) -> float:
        return solver_loss(delta_h) - p_avg

    def gap_or_nan(delta_h: float) -> float:
        try:
            return gap(delta_h)
        except fe1d.NonConvergenceError:
            return math.nan

    # Under a surface-field drive the solver loss is not monotone in
    # delta_H (a smaller decay length also raises the apparent reluctivity
    # and shrinks the flux), so scan a log grid for sign changes and refine
    # the bracket nearest the formula skin depth; extra points around that
    # anchor catch narrow crossing windows.  Grid points whose solve fails
    # are skipped.
    anchor_guess = skin_depth(nu0, sigma, 2.0 * math.pi * f)
    grid = np.unique(np.concatenate([
        np.geomspace(lo, hi, 15),
        np.geomspace(max(anchor_guess / 4, lo),
                     min(anchor_guess * 4, hi), 7),
    ]))
    gaps = np.array([gap_or_nan(x) for x in grid])
    ok = np.nonzero(np.isfinite(gaps))[0]
    brackets = [(grid[i], grid[j])
                for i, j in zip(ok[:-1], ok[1:])
                if gaps[i] == 0.0 or (gaps[i] > 0.0) != (gaps[j] > 0.0)]
    try:
        if brackets:
            a, b = min(brackets,
                       key=lambda br: abs(math.log(math.sqrt(br[0] * br[1])
                                                   / anchor_guess)))
            delta_h = optimize.brentq(gap, a, b, rtol=1e-12, maxiter=200)
        elif ok.size and np.min(np.abs(gaps[ok])) <= 0.05 * p_avg:
            # knife-edge cell: the reference sits within discretization
            # noise of the model's attainable extremum, so take the
            # least-deviation depth instead of discarding the level
            i_best = ok[np.argmin(np.abs(gaps[ok]))]
            local = np.geomspace(grid[i_best] / 2.0, grid[i_best] * 2.0, 17)
            local_gaps = np.array([abs(gap_or_nan(x)) for x in local])
            if not np.any(np.isfinite(local_gaps)):
                return f, None, None, (level, p_avg, b_max)
            delta_h = float(local[np.nanargmin(local_gaps)])
        else:
            return f, None, None, (level, p_avg, b_max)
    except fe1d.NonConvergenceError:
        return f, None, None, (level, p_avg, b_max)
    return f, b_max, float(delta_h), None


def _calibrate_levels(curve, sigma, d, f, b_span, n_levels, dc_bias, dc_ratio,
                      newton, boundary, d_ins, nu_ins) -> np.ndarray:
    """Coarse pre-scan: ac drive levels whose B-bar_max tile ``b_span``.

    Targets are spaced uniformly in B-bar_max (the table key), not in drive
    amplitude: the calibrated skin depth steepens sharply toward deep
    saturation and a level-uniform ladder would under-resolve exactly that
    knee.  The scan maps a coarse level grid to B-bar_max with cheap short
    runs, then inverts the monotone map; the stored keys come from the fine
    production runs, so scan coarseness only shifts node placement.
    """

    def b_of(level: float) -> float:
        return _sheet_run(curve, sigma, d, f, level,
                          dc_bias + dc_ratio * level,
                          steps_per_period=80, n_periods=2, newton=newton,
                          boundary=boundary, d_ins=d_ins, nu_ins=nu_ins)[1]

    scale = curve.nu_initial if boundary == "symmetric_neumann" else 1.0
    lo = b_span[0] * scale * 1e-2
    hi = b_span[1] * scale
    while b_of(hi) < b_span[1]:
        hi *= 3.0
        if hi > 1e9:
            raise LUTError("drive calibration diverged")
    while b_of(lo) > b_span[0]:
        lo /= 4.0
        if lo < 1e-12:
            raise LUTError("drive calibration diverged")
    scan_levels = np.geomspace(lo, hi, max(2 * n_levels // 3, 8))
    scan_b = np.array([b_of(level) for level in scan_levels])
    order = np.argsort(scan_b)
    targets = np.linspace(b_span[0], b_span[1], n_levels)
    return np.interp(targets, scan_b[order], scan_levels[order])


def generate_lut(curve, sigma: float, d: float, freqs, drive_levels=None, *,
                 dc_bias: float = 0.0, dc_ratio: float = 0.0,
                 boundary: str = "symmetric_neumann",
                 b_span: tuple[float, float] = (0.1, 1.9),
                 n_levels: int = 12, steps_per_period: int = 400,
                 n_periods: int = 3, newton: bool = True,
                 m_cal: int = 5, n_time_samples: int = 64,
                 d_ins: float = 0.0, nu_ins: float = 1.0 / (4e-7 * math.pi),
                 threads: int = 1) -> LookupTable:
    """Build the delta_H table from nonlinear single-sheet transients.

    For each (frequency, ac drive level) the sheet is simulated with a fine
    mesh, the time-averaged loss density and B-bar_max are extracted, and
    the linear loss formula is solved for delta with H0 equal to the known
    ac drive amplitude (bracketed bisection on [1e-3 d, 1e3 d] to 1e-12
    relative).  Levels default to a per-frequency ladder spanning
    ``b_span`` in B-bar_max, found by a coarse pre-scan.

    Generation is ac-only by default.  For dc-biased operation the drive can
    carry a bias: constant (``dc_bias``) or proportional to the ac level
    (``dc_bias + dc_ratio*level``), so a table can be built for a family of
    excitations with a fixed dc:ac ratio; both knobs are recorded in the
    metadata.  ``boundary`` selects the generation drive type (surface field
    by default; ``dirichlet_flux`` interprets levels as mean flux densities
    in T).  Entries whose loss cannot be bracketed are skipped with a
    warning.
    """
    freqs = [float(f) for f in freqs]
    if not freqs:
        raise LUTError("need at least one frequency")
    if drive_levels is not None:
        levels_by_f = {f: np.asarray(sorted(drive_levels), dtype=float)
                       for f in freqs}
        if np.any(levels_by_f[freqs[0]] <= 0):
            raise LUTError("drive levels must be positive")
    else:
        levels_by_f = {
            f: _calibrate_levels(curve, sigma, d, f, b_span, n_levels,
                                 dc_bias, dc_ratio, newton, boundary,
                                 d_ins, nu_ins)
            for f in freqs
        }

    jobs = [(curve, sigma, d, f, float(level),
             dc_bias + dc_ratio * float(level), steps_per_period,
             n_periods, newton, boundary, m_cal, n_time_samples, d_ins,
             nu_ins)
            for f in freqs for level in levels_by_f[f]]

    if threads == 0:
        threads = min(os.cpu_count() or 1, len(jobs))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(_lut_cell, jobs))
    else:
        raw = [_lut_cell(job) for job in jobs]

    table: dict[float, list[tuple[float, float]]] = {f: [] for f in freqs}
    for f, b_max, delta_h, failure in raw:
        if failure is not None:
            level, p_avg, bm = failure
            logger.warning(
                "LUT entry skipped at f=%g Hz, level=%g A/m: loss density "
                "%g W/m^3 not bracketed by the linear formula (B-bar_max %g T)",
                f, level, p_avg, bm)
            continue
        table[f].append((b_max, delta_h))

    entries = {}
    for f, points in table.items():
        points.sort()
        b_vals, dh_vals = [], []
        for b_max, delta_h in points:
            if b_vals and b_max <= b_vals[-1] * (1 + 1e-12):
                logger.warning(
                    "LUT at f=%g Hz: duplicate B-bar_max %g T dropped", f, b_max)
                continue
            b_vals.append(b_max)
            dh_vals.append(delta_h)
        if len(b_vals) >= 2:
            entries[f] = (np.array(b_vals), np.array(dh_vals))
        else:
            logger.warning("LUT at f=%g Hz discarded: fewer than two valid points", f)

    metadata = {
        "sigma": sigma,
        "d": d,
        "material": material.material_hash(curve),
        "dc_bias": dc_bias,
        "dc_ratio": dc_ratio,
        "boundary": boundary,
        "d_ins": d_ins,
        "steps_per_period": steps_per_period,
        "n_periods": n_periods,
        "m_cal": m_cal,
    }
    return LookupTable(entries, metadata)


def linear_reference_lut(nu: float, sigma: float, d: float,
                         freqs) -> dict[float, float]:
    """Analytic skin depths per frequency (degenerate-table oracle)."""
    return {float(f): skin_depth(nu, sigma, 2.0 * math.pi * float(f))
            for f in freqs}


def save_lut(lut: LookupTable, path) -> None:
    sigma = float(lut.metadata["sigma"])
    d = float(lut.metadata["d"])
    mat = lut.metadata.get("material", "unknown")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# lamhb-lut v1; sigma={sigma:.17g}; d={d:.17g}; material={mat}\n")
        for f in lut.frequencies:
            b, dh = lut.entries[f]
            for bi, di in zip(b, dh):
                fh.write(f"{f:.17g},{bi:.17g},{di:.17g}\n")


def load_lut(path, *, expect_sigma: float | None = None,
             expect_d: float | None = None,
             expect_material: str | None = None) -> LookupTable:
    """Parse a table file; enforces the header and the sortedness invariant."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise LUTError(f"{path}: empty file")
    m = _HEADER_RE.match(lines[0])
    if m is None:
        raise LUTError(f"{path}: missing or malformed lamhb-lut header")
    metadata = {
        "sigma": float(m.group("sigma")),
        "d": float(m.group("d")),
        "material": m.group("mat"),
    }
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise LUTError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
        rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
    if rows != sorted(rows):
        raise LUTError(f"{path}: rows must be sorted by (frequency, B-bar_max)")
    entries: dict[float, tuple[list, list]] = {}
    for f, b, dh in rows:
        entries.setdefault(f, ([], []))
        entries[f][0].append(b)
        entries[f][1].append(dh)
    lut = LookupTable({f: (np.array(b), np.array(dh))
                       for f, (b, dh) in entries.items()}, metadata)
    if expect_sigma is not None and not math.isclose(expect_sigma, metadata["sigma"],
                                                     rel_tol=1e-12):
        logger.warning("%s: sigma metadata %g differs from expected %g",
                       path, metadata["sigma"], expect_sigma)
    if expect_d is not None and not math.isclose(expect_d, metadata["d"],
                                                 rel_tol=1e-12):
        logger.warning("%s: d metadata %g differs from expected %g",
                       path, metadata["d"], expect_d)
    if expect_material is not None and expect_material != metadata["material"]:
        logger.warning("%s: material hash %s differs from expected %s",
                       path, metadata["material"], expect_material)
    return lut
