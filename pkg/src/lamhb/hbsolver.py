"""Multiharmonic harmonic-balance solvers (fine-mesh and homogenized).

The periodic solution is a truncated Fourier series with one-sided storage:
a real signal x(t) is kept as coefficients x_n for n = 0..m such that

    x(t) = x_0 + 2 Re sum_{n>=1} x_n exp(+j n omega_f t),

i.e. a lone coefficient 1+0j at n = 1 reconstructs 2 cos(omega_f t); peak
harmonic amplitudes are twice the stored coefficients.

Each fixed-point iteration linearizes the material law around the current
flux spectrum: the flux is transformed to the time domain, the reluctivity
time signal nu(t) = H(|B|)/|B| is sampled and FFT-analyzed, and every
retained harmonic order n is then solved independently (block Jacobi)

    (K_{nu_bar_0(n w_f)} + j n w_f M_sigma) a_n^{i+1}
        = j_n - sum_{k != 0} K_{nu_k} a_{n-k}^i ,

with conjugate completion for negative orders.  The diagonal stiffness
coefficient depends on the solver mode: the plain per-element nu_0 on fine
meshes, or one of the homogenized tensor variants (simple at dc plus either
the standard complex entry or the calibrated two-skin-depth entry for
n != 0) on bulk meshes.  Homogenized regions contribute no conductivity mass
term: their entire eddy response lives in the complex tensor, matching the
isolated-sheet physics the resolved reference enforces through its
per-lamination current constraints.

Convergence is declared on the relative change of the total magnetic energy
(and, ten times looser, of the loss); both are recorded per iteration.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import material
from .analytic import (
    local_flux_from_average,
    skin_depth,
    unit_average_cosh_profile,
)
from .fe1d import (
    Drive,
    Mesh1D,
    MeshError,
    NonConvergenceError,
    StackGeometry,
    _drive_pins_and_load,
    assemble_mass,
    assemble_stiffness,
)
from .homog import (
    ModifiedWavenumbers,
    mixed_reluctivity_xy,
    modified_reluctivity_xy,
    original_reluctivity_xy,
)
from .linsys import Tridiag, solve_constrained

MODES = ("fine_hbfem", "hom_original", "hom_naive_dc", "hom_refined_dc")


class HBError(ValueError):
    """Inconsistent harmonic-balance configuration."""


@dataclasses.dataclass(frozen=True)
class HarmonicSet:
    """Retained harmonic orders: 0..m, or the odd orders only.

    DC-biased drives couple even and odd orders, so they require parity
    "all"; pure ac drives may restrict to the odd orders.
    """

    m: int
    parity: str = "all"

    def __post_init__(self) -> None:
        if self.m < 1:
            raise HBError(f"maximum order must be >= 1, got {self.m}")
        if self.parity not in ("all", "odd_only"):
            raise HBError(f"unknown parity {self.parity!r}")

    @property
    def orders(self) -> tuple[int, ...]:
        if self.parity == "all":
            return tuple(range(self.m + 1))
        return tuple(range(1, self.m + 1, 2))


@dataclasses.dataclass
class SolverOptions:
    """Knobs of the block-Jacobi fixed point.

    ``relaxation`` blends each update (alpha = 1 replaces); it is halved
    automatically (floor 0.25) when the energy trace rises three iterations
    in a row.  ``n_time_samples`` is the periodic sampling grid of the
    reluctivity FFT and must be a power of two with at least 4*(2m+1)
    samples.  ``lut`` supplies the calibrated field skin depth for mode
    hom_refined_dc.  ``local_profile_points`` controls the through-thickness
    quadrature of the homogenized energy reconstruction.
    """

    mode: str
    tol_energy: float = 1e-4
    max_iter: int = 200
    relaxation: float = 1.0
    n_time_samples: int = 64
    lut: object | None = None
    insulation_corrections: bool = True
    local_profile_points: int = 64

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise HBError(f"unknown solver mode {self.mode!r}; pick from {MODES}")
        if not (0.0 < self.relaxation <= 1.0):
            raise HBError(f"relaxation must be in (0, 1], got {self.relaxation}")
        if self.tol_energy <= 0 or self.max_iter < 1:
            raise HBError("tolerance and iteration limit must be positive")
        n = self.n_time_samples
        if n < 4 or (n & (n - 1)) != 0:
            raise HBError(f"n_time_samples must be a power of two, got {n}")


@dataclasses.dataclass
class IterationRecord:
    energy: float
    loss: float
    max_block_residual: float
    relaxation: float


@dataclasses.dataclass
class HarmonicSolution:
    """Converged harmonic coefficients plus iteration metadata.

    ``a`` has shape (n_orders, n_nodes), ``b`` (n_orders, n_elements); rows
    follow ``orders``.  ``nu0`` is the final dc reluctivity per element and
    ``delta_h`` the calibrated skin depth per element (refined mode only).
    """

    mesh: Mesh1D
    curve: object
    drive: Drive
    options: SolverOptions
    orders: tuple[int, ...]
    f_f: float
    a: np.ndarray
    b: np.ndarray
    nu0: np.ndarray
    delta_h: np.ndarray | None
    trace: list[IterationRecord]
    lut_clamp_events: int = 0
    geometry: StackGeometry | None = None

    @property
    def omega_f(self) -> float:
        return 2.0 * math.pi * self.f_f

    @property
    def n_iterations(self) -> int:
        return len(self.trace)

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_nodes

    def order_index(self, n: int) -> int:
        try:
            return self.orders.index(n)
        except ValueError:
            raise HBError(f"order {n} not retained (orders {self.orders})")

    def coefficient(self, kind: str, n: int) -> np.ndarray:
        arr = {"a": self.a, "b": self.b}[kind]
        return arr[self.order_index(n)]


# ---------------------------------------------------------------------------
# Spectrum <-> time grid


def time_grid(f_f: float, n_samples: int) -> np.ndarray:
    return np.arange(n_samples) / (n_samples * f_f)


def spectrum_to_time(spectrum: np.ndarray, orders: tuple[int, ...],
                     n_samples: int) -> np.ndarray:
    """Sample the one-sided spectrum on the uniform period grid.

    ``spectrum`` is (n_orders, ...); the result is (n_samples, ...) real.
    """
    if max(orders) >= n_samples // 2:
        raise HBError("time grid too coarse for the retained orders")
    shape = (n_samples // 2 + 1,) + spectrum.shape[1:]
    x = np.zeros(shape, dtype=complex)
    for row, n in enumerate(orders):
        x[n] = spectrum[row] * n_samples
    return np.fft.irfft(x, n=n_samples, axis=0)


def reconstruct_time_signal(solution: HarmonicSolution, kind: str, index: int,
                            t):
    """Real time signal of one nodal ("a") or element ("b") quantity.

    x(t) = x_0 + 2 Re sum_{n>=1} x_n e^{j n omega_f t}; the factor 2 is the
    conjugate completion of the one-sided storage.
    """
    t_arr = np.asarray(t, dtype=float)
    coeffs = solution.a[:, index] if kind == "a" else solution.b[:, index]
    out = np.zeros(t_arr.shape)
    for row, n in enumerate(solution.orders):
        c = coeffs[row]
        if n == 0:
            out = out + c.real
        else:
            out = out + 2.0 * (c * np.exp(1j * n * solution.omega_f * t_arr)).real
    return float(out) if np.ndim(t) == 0 else out


def reluctivity_harmonics(b_spectrum: np.ndarray, curve,
                          hset: HarmonicSet, n_time_samples: int) -> np.ndarray:
    """Fourier coefficients of nu(t) = H(|B|)/|B| per element.

    ``b_spectrum`` is (n_orders, n_elements) in stored one-sided convention.
    Returns (n_elements, 2m+1) with row k holding nu_k (nu_0 real); negative
    orders follow by conjugation.  The sampling grid must satisfy the
    aliasing guard n_time_samples >= 4*(2m+1).
    """
    m = hset.m
    if n_time_samples < 4 * (2 * m + 1):
        raise HBError(
            f"n_time_samples={n_time_samples} violates the aliasing guard "
            f">= {4 * (2 * m + 1)} for m={m}"
        )
    b_t = spectrum_to_time(b_spectrum, hset.orders, n_time_samples)
    nu_t = material.reluctivity(np.abs(b_t), curve)
    coeffs = np.fft.rfft(nu_t, axis=0) / n_time_samples
    out = coeffs[: 2 * m + 1].T.copy()
    out[:, 0] = out[:, 0].real
    return out


# ---------------------------------------------------------------------------
# Per-mode tensor entries


def _delta_b_formula(region, nu0: float, omega: float,
                     insulation_corrections: bool) -> float:
    p = region.homog
    if insulation_corrections:
        return skin_depth(mixed_reluctivity_xy(p, nu0), p.gamma * p.sigma, omega)
    return skin_depth(nu0, p.sigma, omega)


def build_harmonic_tensors(mesh: Mesh1D, n: int, omega_f: float,
                           nu0: np.ndarray, options: SolverOptions,
                           delta_h: np.ndarray | None = None) -> np.ndarray:
    """Per-element stiffness coefficient of the order-n diagonal block.

    fine_hbfem uses the real nu_0 everywhere.  On homogenized elements the
    dc block always takes the real mixing rule; for n != 0 hom_original and
    hom_naive_dc evaluate the standard complex entry at n*omega_f, while
    hom_refined_dc evaluates the two-skin-depth entry with
    delta_B = sqrt(2 nu_0 / (sigma n omega_f)) (insulation-corrected) and the
    calibrated per-element delta_H.
    """
    coeff = np.asarray(nu0, dtype=complex).copy()
    if options.mode == "fine_hbfem":
        return coeff
    hom_mask = mesh.kind_mask("homogenized")
    omega = n * omega_f
    for e in np.nonzero(hom_mask)[0]:
        region = mesh.regions[mesh.element_region[e]]
        p = region.homog
        nu_e = float(nu0[e].real) if np.iscomplexobj(nu0) else float(nu0[e])
        if n == 0:
            if options.mode == "hom_original":
                raise HBError("ac-only homogenized mode has no dc block")
            coeff[e] = mixed_reluctivity_xy(p, nu_e)
        elif options.mode in ("hom_original", "hom_naive_dc"):
            coeff[e] = original_reluctivity_xy(
                p, nu_e, omega,
                insulation_corrections=options.insulation_corrections)
        else:  # hom_refined_dc
            if delta_h is None:
                raise HBError("refined mode needs per-element delta_H values")
            w = ModifiedWavenumbers(
                delta_b=_delta_b_formula(region, nu_e, omega,
                                         options.insulation_corrections),
                delta_h=float(delta_h[e]))
            coeff[e] = modified_reluctivity_xy(
                p, nu_e, omega, w,
                insulation_corrections=options.insulation_corrections)
    return coeff


# ---------------------------------------------------------------------------
# Energy and loss of a harmonic state


def _state_energy_series(mesh: Mesh1D, curve, orders, b_spec: np.ndarray,
                         omega_f: float, options: SolverOptions,
                         nu0: np.ndarray, times: np.ndarray,
                         delta_h: np.ndarray | None = None) -> np.ndarray:
    """Total magnetic energy per slab cross-section (J/m^2) on a time grid.

    Resolved elements integrate w(|B|) directly.  Homogenized elements
    reconstruct the sheet interior from the field-strength ansatz: the
    per-harmonic surface-field profile (decaying with the calibrated delta_H
    when available, the formula skin depth otherwise) is inverted through
    the material law around the dc working point, so deep saturation caps
    the local flux physically.  In the linear limit this reduces exactly to
    the flux back-transformation.  The insulation fraction adds its (tiny)
    linear share.
    """
    lengths = mesh.lengths
    energy = np.zeros(times.shape)
    orders_arr = np.asarray(orders)
    phases = np.exp(1j * omega_f * np.outer(orders_arr, times))  # (K, T)
    factor = np.where(orders_arr == 0, 1.0, 2.0)[:, None]

    hom_mask = mesh.kind_mask("homogenized")
    res_mask = ~hom_mask
    if np.any(res_mask):
        sig = np.einsum("ke,kt->te", b_spec[:, res_mask] * factor, phases).real
        w = np.zeros(sig.shape)
        nonlin_cols = mesh.nonlinear_mask()[res_mask]
        if np.any(nonlin_cols):
            w[:, nonlin_cols] = material.energy_density(
                np.abs(sig[:, nonlin_cols]), curve)
        lin_cols = ~nonlin_cols
        if np.any(lin_cols):
            nu_lin = mesh.linear_nu_per_element()[res_mask][lin_cols]
            w[:, lin_cols] = 0.5 * nu_lin * sig[:, lin_cols] ** 2
        energy += w @ lengths[res_mask]

    hom_elements = np.nonzero(hom_mask)[0]
    if not hom_elements.size:
        return energy

    # Surface-field harmonics per element: the sheet-average flux signal is
    # pushed through the material law and Fourier-analyzed, so the field
    # ansatz carries the differential (not chord) ripple response.  Each
    # harmonic then decays into the sheet with its cosh weighting and the
    # local flux follows by inverting the law - exact without skin effect
    # and in the linear limit, saturation-capped otherwise.
    n_fft = options.n_time_samples
    b_sheet_t = spectrum_to_time(
        b_spec[:, hom_elements], orders, n_fft)  # (N, E_hom), bulk average
    # the field signal is analyzed to the full grid bandwidth: the law's
    # curvature creates high harmonics that carry the saturated surface
    # excursions even when the flux spectrum itself is short
    rec_orders = np.arange(n_fft // 2)
    rec_factor = np.where(rec_orders == 0, 1.0, 2.0)[:, None]
    rec_phases = np.exp(1j * omega_f * np.outer(rec_orders, times))
    for col, e in enumerate(hom_elements):
        region = mesh.regions[mesh.element_region[e]]
        p = region.homog
        b_sig = b_sheet_t[:, col] / p.gamma  # sheet average by flux balance
        h_sig = np.sign(b_sig) * material.field_strength(np.abs(b_sig), curve)
        h_hat = np.fft.rfft(h_sig)[: rec_orders.size] / n_fft
        n_q = options.local_profile_points
        z_q = (np.arange(n_q) + 0.5) / n_q * p.d - p.d / 2.0
        nu_e = float(np.real(nu0[e]))
        amp_h = np.empty((rec_orders.size, n_q), dtype=complex)
        amp_h[0] = h_hat[0]
        for n in rec_orders[1:]:
            # profile depths follow the dc-reluctivity formula (the same
            # rule as the local-flux back-transformation); the calibrated
            # delta_H is a loss-equivalent depth, not a field profile
            delta = skin_depth(max(nu_e, 1e-12), p.sigma, n * omega_f)
            amp_h[n] = h_hat[n] * unit_average_cosh_profile(z_q, delta, p.d)
        sig_h = np.einsum("kq,kt->tq", amp_h * rec_factor, rec_phases).real
        h_cap = float(np.max(np.abs(sig_h))) if sig_h.size else 1.0
        inverse = material.bh_inverse_sampler(curve, max(h_cap, 1.0))
        b_loc = np.sign(sig_h) * inverse(np.abs(sig_h))
        w_lam = material.energy_density(np.abs(b_loc), curve).mean(axis=1)
        # insulation: H is continuous across the gap faces
        h_surf = np.einsum("k,kt->t", h_hat * rec_factor[:, 0],
                           rec_phases).real
        w_ins = 0.5 * h_surf ** 2 / p.nu_ins
        energy += lengths[e] * (p.gamma * w_lam + (1.0 - p.gamma) * w_ins)
    return energy


def _state_loss(mesh: Mesh1D, orders, a: np.ndarray, b_spec: np.ndarray,
                omega_f: float, tensors_by_order: dict[int, np.ndarray],
                mass: Tridiag, constraints) -> float:
    """Time-averaged dissipated power per slab cross-section (W/m^2).

    Resolved conduction dissipates through the (projected) mass matrix;
    homogenized elements dissipate through the imaginary part of their
    tensor entries.
    """
    total = 0.0
    for row, n in enumerate(orders):
        if n == 0:
            continue
        an = a[row]
        quad = np.vdot(an, constraints.project_mass_matvec(mass, an)).real
        total += 2.0 * (n * omega_f) ** 2 * quad
    hom_mask = mesh.kind_mask("homogenized")
    if np.any(hom_mask):
        lengths = mesh.lengths
        for row, n in enumerate(orders):
            if n == 0:
                continue
            entries = tensors_by_order[n]
            im = np.clip(entries.imag[hom_mask], 0.0, None)
            amp2 = np.abs(2.0 * b_spec[row, hom_mask]) ** 2
            total += float(np.sum(
                0.5 * n * omega_f * im * amp2 * lengths[hom_mask]))
    return total


# ---------------------------------------------------------------------------
# The block-Jacobi fixed point


def _validate_setup(mesh: Mesh1D, drive: Drive, hset: HarmonicSet,
                    options: SolverOptions) -> None:
    hom_present = bool(np.any(mesh.kind_mask("homogenized")))
    lam_present = bool(np.any(mesh.kind_mask("laminate")))
    if options.mode == "fine_hbfem":
        if hom_present:
            raise HBError("fine_hbfem runs on resolved meshes only")
    else:
        if not hom_present:
            raise HBError(f"mode {options.mode} needs a homogenized region")
        if lam_present:
            raise HBError("homogenized modes do not mix with resolved laminates")
    if drive.h_dc > 0:
        if 0 not in hset.orders:
            raise HBError("dc-biased drives require parity='all' (order 0 retained)")
        if options.mode == "hom_original":
            raise HBError("hom_original is ac-only; use a dc-capable mode")
    if options.mode == "hom_refined_dc" and options.lut is None:
        raise HBError("hom_refined_dc needs a look-up table (options.lut)")
    if options.n_time_samples < 4 * (2 * hset.m + 1):
        raise HBError(
            f"n_time_samples={options.n_time_samples} violates the aliasing "
            f"guard >= {4 * (2 * hset.m + 1)} for m={hset.m}")


def _initial_nu0(mesh: Mesh1D, curve) -> np.ndarray:
    nu0 = mesh.linear_nu_per_element().copy()
    nu0[mesh.nonlinear_mask()] = curve.nu_initial
    return nu0


def _dc_consistent_nu0(mesh: Mesh1D, curve, drive: Drive,
                       options: SolverOptions) -> np.ndarray:
    """Startup reluctivity: linearization point consistent with the dc bias.

    For unbiased drives this is the zero-field reluctivity.  With a dc bias
    the zero-field value would put the first dc solve far beyond saturation
    (B ~ h_dc/nu_in) and start the fixed point on a violent oscillation, so
    the bias level is inverted through the (mixed, for homogenized elements)
    static law instead.
    """
    from .fe1d import invert_bh

    nu0 = _initial_nu0(mesh, curve)
    if drive.h_dc <= 0:
        return nu0
    nonlin = mesh.nonlinear_mask()
    if drive.boundary == "dirichlet_flux":
        for e in np.nonzero(nonlin)[0]:
            region = mesh.regions[mesh.element_region[e]]
            gamma = region.homog.gamma if region.kind == "homogenized" else 1.0
            nu0[e] = material.reluctivity(drive.h_dc / gamma, curve)
        return nu0
    cache: dict[int, float] = {}
    for e in np.nonzero(nonlin)[0]:
        rid = int(mesh.element_region[e])
        if rid not in cache:
            region = mesh.regions[rid]
            if region.kind == "laminate":
                cache[rid] = float(material.reluctivity(
                    invert_bh(curve, drive.h_dc), curve))
            else:
                # bulk flux b, sheet flux b/gamma; the mixing rule consumes
                # the sheet reluctivity
                p = region.homog

                def gap(b: float) -> float:
                    nu_sheet = float(material.reluctivity(b / p.gamma, curve))
                    return mixed_reluctivity_xy(p, nu_sheet) * b - drive.h_dc

                hi = 1.0
                while gap(hi) < 0:
                    hi *= 2.0
                from scipy.optimize import brentq
                b_dc = brentq(gap, 0.0, hi, rtol=1e-12)
                cache[rid] = float(material.reluctivity(b_dc / p.gamma, curve))
        nu0[e] = cache[rid]
    return nu0


def hb_solve(mesh: Mesh1D, curve, drive: Drive, hset: HarmonicSet,
             options: SolverOptions, *,
             geometry: StackGeometry | None = None) -> HarmonicSolution:
    """Run the block-Jacobi harmonic-balance fixed point to convergence.

    Starts from the linear solution at the zero-field reluctivity, iterates
    reluctivity-FFT linearization plus independent per-order solves, and
    stops when the relative change of total energy falls below
    ``tol_energy`` with the loss change below ten times that.  Raises
    :class:`~lamhb.fe1d.NonConvergenceError` (carrying the trace) when the
    iteration limit is hit.
    """
    _validate_setup(mesh, drive, hset, options)
    orders = hset.orders
    omega_f = drive.omega_f
    m = hset.m

    sigma = mesh.sigma_per_element()
    mass = assemble_mass(mesh, sigma)
    constraints = mesh.constraints()
    nonlin = mesh.nonlinear_mask()
    lut = options.lut
    clamp_before = lut.clamp_events if lut is not None else 0

    loads = {}
    pins = {}
    for n in orders:
        pins[n], loads[n] = _drive_pins_and_load(
            mesh, drive, drive.harmonic_coefficient(n))

    def block_solve(n: int, diag_coeff: np.ndarray, rhs: np.ndarray):
        k = assemble_stiffness(mesh, diag_coeff)
        c = 1j * n * omega_f
        sys = k + mass.scaled(c) if n != 0 else k
        a_n = solve_constrained(sys, rhs.astype(complex), constraints,
                                c if n != 0 else 0.0, pins[n])
        # relative residual of the full (projected) block system, scaled by
        # the operator action so value-pinned (zero-load) blocks measure
        # sensibly
        full = k.matvec(a_n)
        if n != 0:
            full = full + c * constraints.project_mass_matvec(mass, a_n)
        r = full - rhs
        for idx, _ in pins[n]:
            r[idx] = 0.0
        denom = max(float(np.linalg.norm(rhs)), float(np.linalg.norm(full)),
                    1e-300)
        return a_n, float(np.linalg.norm(r)) / denom

    # Initial state: linear problem at the bias-consistent reluctivity
    # (zero-field reluctivity when the drive carries no dc component).
    nu0 = _dc_consistent_nu0(mesh, curve, drive, options)
    hom_elements = np.nonzero(mesh.kind_mask("homogenized"))[0]
    delta_h = None
    if options.mode == "hom_refined_dc":
        # The very first solve has no flux spectrum yet, so it falls back to
        # the formula skin depth (refined == naive for the initial state).
        delta_h = np.full(mesh.n_elements, np.nan)
        for e in hom_elements:
            delta_h[e] = _delta_b_formula(
                mesh.regions[mesh.element_region[e]], nu0[e], omega_f,
                options.insulation_corrections)

    a = np.zeros((len(orders), mesh.n_nodes), dtype=complex)
    tensors_by_order: dict[int, np.ndarray] = {}
    for row, n in enumerate(orders):
        coeff = build_harmonic_tensors(mesh, n, omega_f, nu0, options, delta_h)
        tensors_by_order[n] = coeff
        a[row], _ = block_solve(n, coeff, loads[n])
    b = np.diff(a, axis=1) / mesh.lengths

    times = time_grid(drive.f_f, options.n_time_samples)
    energy_prev = float(np.mean(_state_energy_series(
        mesh, curve, orders, b, omega_f, options, nu0, times, delta_h)))
    loss_prev = _state_loss(mesh, orders, a, b, omega_f, tensors_by_order,
                            mass, constraints)

    trace: list[IterationRecord] = []
    alpha = options.relaxation
    energy_rises = 0
    no_improve = 0
    best_d_energy = math.inf

    # On homogenized elements the material law acts on the sheet average,
    # which exceeds the stored bulk average by the stacking factor; with an
    # exponential B-H law the distinction matters strongly near saturation.
    sheet_scale = np.ones(mesh.n_elements)
    for e in hom_elements:
        sheet_scale[e] = 1.0 / mesh.regions[mesh.element_region[e]].homog.gamma

    for _ in range(options.max_iter):
        # Linearize the material around the current spectrum.
        nu_k = np.zeros((mesh.n_elements, 2 * m + 1), dtype=complex)
        if np.any(nonlin):
            nu_k[nonlin] = reluctivity_harmonics(
                (b * sheet_scale)[:, nonlin], curve, hset,
                options.n_time_samples)
        nu0 = _initial_nu0(mesh, curve)
        nu0[nonlin] = nu_k[nonlin, 0].real

        if options.mode == "hom_refined_dc":
            b_t = spectrum_to_time(b, orders, options.n_time_samples)
            b_max = np.max(np.abs(b_t), axis=0)
            delta_h = np.full(mesh.n_elements, np.nan)
            for e in hom_elements:
                region = mesh.regions[mesh.element_region[e]]
                # table keys are sheet averages; bulk averages convert by
                # the stacking factor (flux conservation)
                delta_h[e] = lut.lookup(
                    drive.f_f, float(b_max[e]) / region.homog.gamma)

        off_diag = {}
        for k_ord in range(1, m + 1):
            off_diag[k_ord] = assemble_stiffness(mesh, nu_k[:, k_ord])

        a_new = np.empty_like(a)
        max_residual = 0.0
        for row, n in enumerate(orders):
            coeff = build_harmonic_tensors(mesh, n, omega_f, nu0, options,
                                           delta_h)
            tensors_by_order[n] = coeff
            rhs = loads[n].astype(complex).copy()
            lo = max(-m, n - m)
            hi = min(m, n + m)
            for k_ord in range(lo, hi + 1):
                if k_ord == 0:
                    continue
                j = n - k_ord
                if abs(j) > m:
                    continue
                if j >= 0:
                    if j not in orders:
                        continue
                    a_j = a[orders.index(j)]
                else:
                    if -j not in orders:
                        continue
                    a_j = np.conj(a[orders.index(-j)])
                k_mat = off_diag[abs(k_ord)]
                contrib = (k_mat.matvec(a_j) if k_ord > 0
                           else np.conj(k_mat.matvec(np.conj(a_j))))
                rhs -= contrib
            a_new[row], res = block_solve(n, coeff, rhs)
            max_residual = max(max_residual, res)

        a = alpha * a_new + (1.0 - alpha) * a
        b = np.diff(a, axis=1) / mesh.lengths

        energy = float(np.mean(_state_energy_series(
            mesh, curve, orders, b, omega_f, options, nu0, times, delta_h)))
        loss = _state_loss(mesh, orders, a, b, omega_f, tensors_by_order,
                           mass, constraints)
        trace.append(IterationRecord(energy=energy, loss=loss,
                                     max_block_residual=max_residual,
                                     relaxation=alpha))

        d_energy = abs(energy - energy_prev) / max(abs(energy), 1e-300)
        d_loss = abs(loss - loss_prev) / max(abs(loss), 1e-300)
        converged = (d_energy < options.tol_energy
                     and d_loss < 10.0 * options.tol_energy)
        # Relaxation control: halve on three consecutive energy rises
        # (strong saturation), and also whenever the energy change has not
        # set a clear new low for several iterations - that catches
        # period-two oscillations of the dc block, whose alternating
        # magnitudes defeat a simple monotone test.
        if energy > energy_prev * (1.0 + 1e-12):
            energy_rises += 1
        else:
            energy_rises = 0
        if d_energy < 0.9 * best_d_energy:
            best_d_energy = d_energy
            no_improve = 0
        elif not converged:
            no_improve += 1
        if (energy_rises >= 3 or no_improve >= 4) and alpha > 0.25:
            alpha = max(alpha / 2.0, 0.25)
            energy_rises = 0
            no_improve = 0
            best_d_energy = math.inf
        energy_prev, loss_prev = energy, loss
        if converged:
            clamps = (lut.clamp_events - clamp_before) if lut is not None else 0
            return HarmonicSolution(
                mesh=mesh, curve=curve, drive=drive, options=options,
                orders=orders, f_f=drive.f_f, a=a, b=b, nu0=nu0,
                delta_h=delta_h, trace=trace, lut_clamp_events=clamps,
                geometry=geometry)

    raise NonConvergenceError(
        f"harmonic balance did not converge in {options.max_iter} iterations "
        f"(last energy change {d_energy:.3e})",
        residual=d_energy, trace=trace)


# ---------------------------------------------------------------------------
# Post-processing of a solution


def solution_loss(solution: HarmonicSolution) -> float:
    """Time-averaged eddy loss per slab cross-section (W/m^2)."""
    mesh = solution.mesh
    mass = assemble_mass(mesh, mesh.sigma_per_element())
    constraints = mesh.constraints()
    options = solution.options
    tensors = {}
    for n in solution.orders:
        tensors[n] = build_harmonic_tensors(
            mesh, n, solution.omega_f, solution.nu0, options,
            solution.delta_h)
    return _state_loss(mesh, solution.orders, solution.a, solution.b,
                       solution.omega_f, tensors, mass, constraints)


def solution_energy_series(solution: HarmonicSolution,
                           times: np.ndarray) -> np.ndarray:
    """Magnetic energy per slab cross-section (J/m^2) on a time grid."""
    return _state_energy_series(solution.mesh, solution.curve,
                                solution.orders, solution.b,
                                solution.omega_f, solution.options,
                                solution.nu0, np.asarray(times, dtype=float),
                                solution.delta_h)


def solution_b_max(solution: HarmonicSolution) -> np.ndarray:
    """Per-element temporal maximum of |B| over one period."""
    b_t = spectrum_to_time(solution.b, solution.orders,
                           solution.options.n_time_samples)
    return np.max(np.abs(b_t), axis=0)


def local_profile(solution: HarmonicSolution, lamination: int,
                  z_local) -> dict[int, complex | np.ndarray]:
    """Back-transformed local flux of one lamination, per harmonic order.

    Only meaningful for homogenized solutions (fine-mesh flux is already
    local).  The lamination index is mapped to its stack position through
    the solve's :class:`StackGeometry`; the reconstruction inserts the final
    dc reluctivity of the containing element.
    """
    mesh = solution.mesh
    if not np.any(mesh.kind_mask("homogenized")):
        raise HBError("local_profile applies to homogenized solutions only")
    geom = solution.geometry
    if geom is None:
        raise HBError("solution carries no stack geometry")
    if not 0 <= lamination < geom.n_laminations:
        raise HBError(f"lamination {lamination} out of range")
    z_center = (geom.padding + lamination * (geom.d + geom.d_ins)
                + geom.d / 2.0)
    e = int(np.searchsorted(mesh.nodes, z_center, side="right") - 1)
    e = min(max(e, 0), mesh.n_elements - 1)
    region = mesh.regions[mesh.element_region[e]]
    if region.kind != "homogenized":
        raise HBError("lamination center does not fall in a homogenized region")
    p = region.homog
    out = {}
    for row, n in enumerate(solution.orders):
        if n == 0:
            val = np.asarray(local_flux_from_average(
                solution.b[row, e], z_local, float(solution.nu0[e]),
                p.sigma, 0.0, p.d))
        else:
            val = np.asarray(local_flux_from_average(
                solution.b[row, e], z_local, float(solution.nu0[e]),
                p.sigma, n * solution.omega_f, p.d))
        out[n] = complex(val) if np.ndim(z_local) == 0 else val
    return out


def save_solution_csv(solution: HarmonicSolution, path, *,
                      header_extra: str = "") -> None:
    """CSV of the harmonic coefficients: order, kind, index, Re, Im.

    One-sided storage convention e^{+j omega t}; harmonic n >= 1 has peak
    amplitude 2*|coefficient| (noted in the header).
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# lamhb v1; harmonic solution; convention exp(+j*n*w_f*t), "
                 f"one-sided, peak amplitude = 2|c_n| for n >= 1{header_extra}\n")
        fh.write("order,kind,index,re,im\n")
        for row, n in enumerate(solution.orders):
            for i, v in enumerate(solution.a[row]):
                fh.write(f"{n},a,{i},{v.real:.17g},{v.imag:.17g}\n")
            for i, v in enumerate(solution.b[row]):
                fh.write(f"{n},b,{i},{v.real:.17g},{v.imag:.17g}\n")


def save_trace_csv(solution: HarmonicSolution, path, *,
                   header_extra: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# lamhb v1; iteration trace{header_extra}\n")
        fh.write("iter,energy,loss,max_block_residual,relaxation\n")
        for i, rec in enumerate(solution.trace, start=1):
            fh.write(f"{i},{rec.energy:.17g},{rec.loss:.17g},"
                     f"{rec.max_block_residual:.17g},{rec.relaxation:.17g}\n")
