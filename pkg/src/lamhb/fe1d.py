"""1-D slab magnetoquasistatic FE machinery.

The slab axis z is the stack-normal direction; the vector potential has a
single in-plane component A(z) with B = dA/dz, and the field problem is the
1-D diffusion equation -(nu A')' + sigma dA/dt = 0 driven by the tangential
surface field H_s(t) (natural boundary condition nu A' = H_s on both faces)
or by a prescribed total flux (Dirichlet values of A).

Laminations are electrically isolated sheets: each one carries a floating
potential and a zero-net-current constraint.  Eliminating the potentials
projects the conductivity mass matrix (see :mod:`lamhb.linsys`), which keeps
every sheet driven by the same surface field, as the parallel-field
lamination physics requires.  A global gauge pin at the first node fixes the
resulting additive constant.

The nonlinear transient solver here is the reference ("oracle") for the
harmonic-balance solvers: implicit Euler in time, successive substitution
(optionally Newton) on nu(|B|) per step.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import material
from .homog import HomogenizationParams
from .linsys import (
    ConductorConstraints,
    Tridiag,
    assemble_mass_tridiag,
    assemble_stiffness_tridiag,
    conductor_constraints,
    solve_constrained,
)

NU_AIR = material.NU_VAC

REGION_KINDS = ("laminate", "insulation", "homogenized", "air")


class MeshError(ValueError):
    """Inconsistent mesh or region definition."""


class NonConvergenceError(RuntimeError):
    """A nonlinear iteration failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None,
                 trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace


@dataclasses.dataclass(frozen=True)
class Region:
    """Material tag of a mesh region.

    laminate regions carry sigma and an isolated-conductor id; insulation and
    air carry a constant reluctivity; homogenized regions carry the
    lamination-cell parameters (their in-plane conductivity acts through the
    complex tensor, not through the mass matrix).
    """

    kind: str
    sigma: float = 0.0
    nu_const: float | None = None
    conductor_group: int = -1
    homog: HomogenizationParams | None = None

    def __post_init__(self) -> None:
        if self.kind not in REGION_KINDS:
            raise MeshError(f"unknown region kind {self.kind!r}")
        if self.kind == "laminate" and self.sigma <= 0:
            raise MeshError("laminate regions need positive conductivity")
        if self.kind in ("insulation", "air") and not (self.nu_const or 0) > 0:
            raise MeshError(f"{self.kind} regions need a constant reluctivity")
        if self.kind == "homogenized" and self.homog is None:
            raise MeshError("homogenized regions need HomogenizationParams")


@dataclasses.dataclass(frozen=True)
class Mesh1D:
    """Sorted 1-D mesh with per-element region tags."""

    nodes: np.ndarray
    element_region: np.ndarray
    regions: tuple[Region, ...]

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "element_region",
                           np.asarray(self.element_region, dtype=int))
        if nodes.ndim != 1 or nodes.size < 2:
            raise MeshError("mesh needs at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise MeshError("mesh nodes must be strictly increasing")
        if self.element_region.shape != (nodes.size - 1,):
            raise MeshError("need exactly one region id per element")
        used = set(self.element_region.tolist())
        if not used.issubset(range(len(self.regions))):
            raise MeshError("element region ids must index the region table")
        if used != set(range(len(self.regions))):
            raise MeshError("region ids must be dense (every region used)")

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def kind_mask(self, kind: str) -> np.ndarray:
        kinds = np.array([r.kind for r in self.regions])
        return kinds[self.element_region] == kind

    def sigma_per_element(self) -> np.ndarray:
        sig = np.array([r.sigma for r in self.regions])
        return sig[self.element_region]

    def conductor_group_per_element(self) -> np.ndarray:
        grp = np.array([r.conductor_group for r in self.regions])
        return grp[self.element_region]

    def nonlinear_mask(self) -> np.ndarray:
        """Elements whose reluctivity follows the B-H curve."""
        return self.kind_mask("laminate") | self.kind_mask("homogenized")

    def linear_nu_per_element(self) -> np.ndarray:
        """Constant reluctivity of linear elements (nan where nonlinear)."""
        nu = np.array([r.nu_const if r.nu_const is not None else np.nan
                       for r in self.regions])
        return nu[self.element_region]

    def lamination_region_ids(self) -> list[int]:
        """Region ids of laminate regions, ordered by conductor group."""
        ids = [i for i, r in enumerate(self.regions) if r.kind == "laminate"]
        return sorted(ids, key=lambda i: self.regions[i].conductor_group)

    def constraints(self) -> ConductorConstraints:
        return conductor_constraints(
            self.lengths, self.sigma_per_element(),
            self.conductor_group_per_element(), self.n_nodes)

    def total_thickness(self, kind: str) -> float:
        return float(self.lengths[self.kind_mask(kind)].sum())


@dataclasses.dataclass(frozen=True)
class StackGeometry:
    """Lamination stack: n sheets of thickness d with n-1 insulation gaps."""

    n_laminations: int
    d: float
    d_ins: float = 0.0
    padding: float = 0.0

    def __post_init__(self) -> None:
        if self.n_laminations < 1:
            raise MeshError("need at least one lamination")
        if self.d <= 0:
            raise MeshError("lamination thickness must be positive")
        if self.d_ins < 0 or self.padding < 0:
            raise MeshError("insulation thickness and padding must be >= 0")

    @property
    def stack_length(self) -> float:
        return self.n_laminations * self.d + (self.n_laminations - 1) * self.d_ins

    @property
    def gamma(self) -> float:
        return self.d / (self.d + self.d_ins)


@dataclasses.dataclass(frozen=True)
class Drive:
    """Surface-field excitation H_s(t) = h_dc + h_ac cos(omega_f t).

    boundary "symmetric_neumann" applies H_s as the natural condition
    nu A' = H_s on both faces.  boundary "dirichlet_flux" reinterprets
    (h_dc, h_ac) as mean flux densities (T) and prescribes the total flux
    A(L) - A(0) = (b_dc + b_ac cos) * L.
    """

    h_dc: float
    h_ac: float
    f_f: float
    boundary: str = "symmetric_neumann"

    def __post_init__(self) -> None:
        if self.f_f <= 0:
            raise MeshError(f"fundamental frequency must be positive, got {self.f_f}")
        if self.h_dc < 0 or self.h_ac < 0:
            raise MeshError("drive amplitudes must be nonnegative")
        if self.boundary not in ("symmetric_neumann", "dirichlet_flux"):
            raise MeshError(f"unknown boundary mode {self.boundary!r}")

    @property
    def omega_f(self) -> float:
        return 2.0 * math.pi * self.f_f

    @property
    def period(self) -> float:
        return 1.0 / self.f_f

    def surface_field(self, t):
        return self.h_dc + self.h_ac * np.cos(self.omega_f * np.asarray(t))

    def harmonic_coefficient(self, n: int) -> complex:
        """One-sided Fourier coefficient of the waveform (n >= 0)."""
        if n == 0:
            return complex(self.h_dc)
        if n == 1:
            return complex(self.h_ac / 2.0)
        return 0.0j


# ---------------------------------------------------------------------------
# Meshing


def skin_depth_mesh_size(nu_in: float, sigma: float, f: float) -> float:
    """Meshing rule: element size equal to the zero-field skin depth."""
    return math.sqrt(2.0 * nu_in / (sigma * 2.0 * math.pi * f))


def _subdivide(z0: float, z1: float, n: int) -> np.ndarray:
    return np.linspace(z0, z1, n + 1)[1:]


def build_stack_mesh(geom: StackGeometry, sigma: float, *,
                     lam_h: float | None = None,
                     uniform_h: float | None = None,
                     nu_ins: float = NU_AIR,
                     ins_elements: int = 1) -> Mesh1D:
    """Resolved mesh of the stack: one region per lamination and per gap.

    Exactly one refinement rule applies: ``lam_h`` bounds the laminate
    element size (gaps get ``ins_elements`` elements), ``uniform_h`` bounds
    the element size everywhere.  Every region keeps at least one element.
    """
    if (lam_h is None) == (uniform_h is None):
        raise MeshError("give exactly one of lam_h or uniform_h")

    def n_for(length: float, h: float) -> int:
        return max(1, math.ceil(length / h - 1e-9))

    nodes = [0.0]
    region_ids: list[int] = []
    regions: list[Region] = []

    def add_segment(length: float, region: Region, n_el: int) -> None:
        regions.append(region)
        rid = len(regions) - 1
        nodes.extend(_subdivide(nodes[-1], nodes[-1] + length, n_el))
        region_ids.extend([rid] * n_el)

    pad_h = uniform_h if uniform_h is not None else geom.padding
    if geom.padding > 0:
        add_segment(geom.padding, Region("air", nu_const=NU_AIR),
                    n_for(geom.padding, pad_h))
    for i in range(geom.n_laminations):
        h = lam_h if lam_h is not None else uniform_h
        n_lam = n_for(geom.d, h)
        add_segment(geom.d, Region("laminate", sigma=sigma, conductor_group=i),
                    n_lam)
        if i < geom.n_laminations - 1 and geom.d_ins > 0:
            n_ins = (ins_elements if uniform_h is None
                     else n_for(geom.d_ins, uniform_h))
            add_segment(geom.d_ins, Region("insulation", nu_const=nu_ins),
                        n_ins)
    if geom.padding > 0:
        add_segment(geom.padding, Region("air", nu_const=NU_AIR),
                    n_for(geom.padding, pad_h))

    return Mesh1D(np.array(nodes), np.array(region_ids), tuple(regions))


def build_homogenized_mesh(geom: StackGeometry, params: HomogenizationParams,
                           *, n_elements: int = 4) -> Mesh1D:
    """Bulk mesh: the whole stack collapses to one homogenized region."""
    if n_elements < 1:
        raise MeshError("need at least one element")
    nodes = [0.0]
    region_ids: list[int] = []
    regions: list[Region] = []
    if geom.padding > 0:
        regions.append(Region("air", nu_const=NU_AIR))
        nodes.extend(_subdivide(0.0, geom.padding, 1))
        region_ids.append(0)
    regions.append(Region("homogenized", homog=params))
    rid = len(regions) - 1
    nodes.extend(_subdivide(nodes[-1], nodes[-1] + geom.stack_length,
                            n_elements))
    region_ids.extend([rid] * n_elements)
    if geom.padding > 0:
        regions.append(Region("air", nu_const=NU_AIR))
        rid = len(regions) - 1
        nodes.extend(_subdivide(nodes[-1], nodes[-1] + geom.padding, 1))
        region_ids.append(rid)
    return Mesh1D(np.array(nodes), np.array(region_ids), tuple(regions))


# ---------------------------------------------------------------------------
# Assembly (spec-level wrappers)


def assemble_stiffness(mesh: Mesh1D, nu_per_element) -> Tridiag:
    """P1 stiffness operator with a (possibly complex) nu per element."""
    nu = np.asarray(nu_per_element)
    if nu.shape != (mesh.n_elements,):
        raise MeshError(
            f"need one reluctivity per element ({mesh.n_elements}), got {nu.shape}"
        )
    return assemble_stiffness_tridiag(mesh.lengths, nu)


def assemble_mass(mesh: Mesh1D, sigma_per_element) -> Tridiag:
    """Consistent P1 mass operator weighted by sigma per element."""
    sig = np.asarray(sigma_per_element)
    if sig.shape != (mesh.n_elements,):
        raise MeshError(
            f"need one conductivity per element ({mesh.n_elements}), got {sig.shape}"
        )
    return assemble_mass_tridiag(mesh.lengths, sig)


def neumann_load(mesh: Mesh1D, value: complex) -> np.ndarray:
    """Load vector of the symmetric surface-field boundary term."""
    f = np.zeros(mesh.n_nodes, dtype=complex if isinstance(value, complex) else float)
    f[-1] += value
    f[0] -= value
    return f


def _element_b(mesh: Mesh1D, a: np.ndarray) -> np.ndarray:
    return np.diff(a) / mesh.lengths


def _nu_of_b(mesh: Mesh1D, curve, b_abs: np.ndarray) -> np.ndarray:
    """Per-element reluctivity: curve on nonlinear elements, constants else."""
    nu = mesh.linear_nu_per_element().copy()
    mask = mesh.nonlinear_mask()
    if np.any(mask):
        nu[mask] = material.reluctivity(b_abs[mask], curve)
    return nu


def _drive_pins_and_load(mesh: Mesh1D, drive: Drive, value) -> tuple[tuple, np.ndarray]:
    """Boundary treatment for a given instantaneous/harmonic drive value."""
    if drive.boundary == "symmetric_neumann":
        return ((0, 0.0),), neumann_load(mesh, value)
    length = mesh.nodes[-1] - mesh.nodes[0]
    flux = value * length
    f = np.zeros(mesh.n_nodes, dtype=np.result_type(float, type(value)))
    return ((0, 0.0), (mesh.n_nodes - 1, flux)), f


# ---------------------------------------------------------------------------
# Static and transient solvers


def invert_bh(curve, h: float) -> float:
    """Flux density with H(B) = h >= 0 (bracketed root on the monotone law)."""
    if h < 0:
        raise MeshError("field strength must be nonnegative")
    if h == 0.0:
        return 0.0
    from scipy.optimize import brentq

    hi = 1.0
    while material.field_strength(hi, curve) < h:
        hi *= 2.0
        if hi > 1e6:
            raise NonConvergenceError("B-H inversion bracket expansion failed")
    return float(brentq(lambda b: material.field_strength(b, curve) - h,
                        0.0, hi, rtol=1e-14, maxiter=200))


def static_solve(mesh: Mesh1D, curve, drive: Drive) -> np.ndarray:
    """Magnetostatic solution at the dc drive level.

    In statics the field strength is spatially constant (nu A' = const), so
    the problem reduces to inverting the material law per element: exact for
    the Neumann drive; the Dirichlet variant solves the one scalar equation
    sum_e B_e(H) h_e = flux for H.
    """
    if np.any(mesh.kind_mask("homogenized")):
        raise MeshError("static/transient solvers operate on resolved meshes")

    def b_elements(h: float) -> np.ndarray:
        b = np.empty(mesh.n_elements)
        lin = ~mesh.nonlinear_mask()
        b[lin] = h / mesh.linear_nu_per_element()[lin]
        b_nl = invert_bh(curve, h)
        b[~lin] = b_nl
        return b

    if drive.boundary == "symmetric_neumann":
        b = b_elements(drive.h_dc)
    else:
        from scipy.optimize import brentq

        length = mesh.nodes[-1] - mesh.nodes[0]
        flux = drive.h_dc * length
        if flux == 0.0:
            b = np.zeros(mesh.n_elements)
        else:
            def gap(h: float) -> float:
                return float(b_elements(h) @ mesh.lengths) - flux

            hi = 1.0
            while gap(hi) < 0:
                hi *= 2.0
                if hi > 1e9:
                    raise NonConvergenceError("flux inversion bracket failed")
            h_dc = brentq(gap, 0.0, hi, rtol=1e-14, maxiter=200)
            b = b_elements(h_dc)
    return np.concatenate([[0.0], np.cumsum(b * mesh.lengths)])


@dataclasses.dataclass
class TransientResult:
    """Time histories of a transient solve.

    ``a`` (S+1, n_nodes) holds nodal potential samples (Wb/m), ``b``
    (S+1, n_elements) element flux densities (T), ``power`` the dissipated
    power per unit slab cross-section (W/m^2, backward difference, power[0]
    = 0).  ``loss_density`` divides by the conducting thickness (W/m^3).
    """

    mesh: Mesh1D
    drive: Drive
    curve: object
    t: np.ndarray
    a: np.ndarray
    b: np.ndarray
    power: np.ndarray
    steps_per_period: int
    n_periods: int

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def final_period(self) -> np.ndarray:
        """Indices of the samples strictly inside the last simulated period."""
        s = self.steps_per_period
        return np.arange(self.t.size - s, self.t.size)

    @property
    def loss_density(self) -> np.ndarray:
        d_cond = self.mesh.total_thickness("laminate")
        return self.power / d_cond

    def average_loss_density(self) -> float:
        """Time-averaged eddy loss per conducting volume over the last period (W/m^3)."""
        return float(np.mean(self.loss_density[self.final_period()]))


def transient_solve(mesh: Mesh1D, curve, drive: Drive, dt: float | None = None,
                    n_periods: int = 3, *, steps_per_period: int | None = None,
                    tol: float = 1e-8, max_nonlinear_iter: int = 80,
                    newton: bool = False, init: str = "dc") -> TransientResult:
    """Implicit-Euler transient solve of the nonlinear 1-D slab problem.

    ``dt`` must divide the fundamental period (or give ``steps_per_period``
    directly).  The initial state is the nonlinear magnetostatic solution at
    the dc drive level (``init="zero"`` starts from rest instead), so the
    periodic steady state is reached within the usual three periods even for
    strongly biased drives.  Per step the material update iterates to a
    relative residual below ``tol``; a residual increase halves the update
    (damping 0.5), and exceeding ``max_nonlinear_iter`` raises
    :class:`NonConvergenceError` carrying the last residual.
    """
    if np.any(mesh.kind_mask("homogenized")):
        raise MeshError("transient reference runs on resolved meshes only")
    period = drive.period
    if steps_per_period is None:
        if dt is None:
            raise MeshError("give dt or steps_per_period")
        steps_per_period = round(period / dt)
        if not math.isclose(steps_per_period * dt, period, rel_tol=1e-9):
            raise MeshError(f"dt={dt} does not divide the period {period}")
    dt = period / steps_per_period
    n_steps = steps_per_period * n_periods

    constraints = mesh.constraints()
    sigma = mesh.sigma_per_element()
    mass = assemble_mass(mesh, sigma)

    if init == "dc":
        a0 = static_solve(mesh, curve, drive)
    elif init == "zero":
        a0 = np.zeros(mesh.n_nodes)
    else:
        raise MeshError(f"unknown init mode {init!r}")

    t = np.arange(n_steps + 1) * dt
    a_hist = np.empty((n_steps + 1, mesh.n_nodes))
    b_hist = np.empty((n_steps + 1, mesh.n_elements))
    power = np.zeros(n_steps + 1)
    a_hist[0] = a0
    b_hist[0] = _element_b(mesh, a0)

    a_prev = a0
    for step in range(1, n_steps + 1):
        value = float(drive.surface_field(t[step]))
        pins, f = _drive_pins_and_load(mesh, drive, value)
        rhs = f + constraints.project_mass_matvec(mass, a_prev) / dt

        a_new = _nonlinear_step(mesh, curve, mass, constraints, rhs, dt, pins,
                                a_prev, tol, max_nonlinear_iter, newton)
        da = (a_new - a_prev) / dt
        power[step] = constraints.projected_quadratic(mass, da)
        a_hist[step] = a_new
        b_hist[step] = _element_b(mesh, a_new)
        a_prev = a_new

    return TransientResult(mesh=mesh, drive=drive, curve=curve, t=t,
                           a=a_hist, b=b_hist, power=power,
                           steps_per_period=steps_per_period,
                           n_periods=n_periods)


def _nonlinear_step(mesh, curve, mass, constraints, rhs, dt, pins, a_start,
                    tol, max_iter, newton):
    """One implicit-Euler step: fixed point (or Newton) on nu(|B|)."""
    rhs_norm = float(np.linalg.norm(rhs))

    def residual(a):
        b_abs = np.abs(_element_b(mesh, a))
        nu = _nu_of_b(mesh, curve, b_abs)
        k = assemble_stiffness(mesh, nu)
        action = k.matvec(a) + constraints.project_mass_matvec(mass, a) / dt
        r = action - rhs
        for idx, _ in pins:
            r[idx] = 0.0
        # scale by the larger of load and operator action so value-pinned
        # (zero-load) systems are measured sensibly
        scale = max(rhs_norm, float(np.linalg.norm(action)), 1e-300)
        return r, nu, float(np.linalg.norm(r)) / scale

    a = a_start.copy()
    for idx, val in pins:
        a[idx] = val
    r, nu, res = residual(a)
    for _ in range(max_iter):
        if res < tol:
            return a
        if newton:
            b = _element_b(mesh, a)
            nu_d = mesh.linear_nu_per_element().copy()
            mask = mesh.nonlinear_mask()
            nu_d[mask] = material.differential_reluctivity(np.abs(b[mask]), curve)
            jac = assemble_stiffness(mesh, nu_d) + mass.scaled(1.0 / dt)
            zero_pins = tuple((idx, 0.0) for idx, _ in pins)
            delta = solve_constrained(jac, -r, constraints, 1.0 / dt,
                                      zero_pins)
            a_candidate = a + delta.real
        else:
            k = assemble_stiffness(mesh, nu)
            sys = k + mass.scaled(1.0 / dt)
            a_candidate = solve_constrained(sys, rhs, constraints, 1.0 / dt,
                                            pins).real
        r_new, nu_new, res_new = residual(a_candidate)
        if res_new > res:
            # damped update guards against overshoot near strong saturation
            a_candidate = 0.5 * (a + a_candidate)
            r_new, nu_new, res_new = residual(a_candidate)
        a, r, nu, res = a_candidate, r_new, nu_new, res_new
    raise NonConvergenceError(
        f"time step did not converge (last relative residual {res:.3e})",
        residual=res)


def transient_solve_refined(mesh: Mesh1D, curve, drive: Drive, *,
                            start_steps_per_period: int = 200,
                            n_periods: int = 3, rel_tol: float = 0.01,
                            max_doublings: int = 3,
                            newton: bool = False) -> TransientResult:
    """Transient solve with the step count doubled until losses settle.

    Runs at successively halved dt until the final-period loss changes by
    less than ``rel_tol`` between rounds (or the doubling budget is spent),
    and returns the finest run.  This implements the default policy of
    starting at T_f/200 and tightening dt until the first-order convergence
    of the integrator is inside its asymptotic range.
    """
    steps = start_steps_per_period
    result = transient_solve(mesh, curve, drive, steps_per_period=steps,
                             n_periods=n_periods, newton=newton)
    loss = compute_losses_transient(result)
    for _ in range(max_doublings):
        steps *= 2
        finer = transient_solve(mesh, curve, drive, steps_per_period=steps,
                                n_periods=n_periods, newton=newton)
        loss_fine = compute_losses_transient(finer)
        settled = abs(loss_fine - loss) <= rel_tol * max(abs(loss_fine), 1e-300)
        result, loss = finer, loss_fine
        if settled:
            break
    return result


def linear_phasor_solve(mesh: Mesh1D, nu_per_element, omega: float,
                        drive_value: complex,
                        boundary: str = "symmetric_neumann") -> np.ndarray:
    """Single-frequency linear solve (K_nu + j omega M~) a = f.

    The frequency-domain oracle for linear-material checks; ``drive_value``
    is the phasor amplitude of the surface field (or of the mean flux density
    in dirichlet mode).
    """
    constraints = mesh.constraints()
    mass = assemble_mass(mesh, mesh.sigma_per_element())
    k = assemble_stiffness(mesh, np.asarray(nu_per_element, dtype=complex))
    dummy = Drive(h_dc=0.0, h_ac=0.0, f_f=omega / (2 * math.pi) if omega > 0 else 1.0,
                  boundary=boundary)
    pins, f = _drive_pins_and_load(mesh, dummy, drive_value)
    c = 1.0j * omega
    sys = k + mass.scaled(c)
    return solve_constrained(sys, f.astype(complex), constraints, c, pins)


# ---------------------------------------------------------------------------
# Post-processing


def compute_losses_transient(result: TransientResult) -> float:
    """Time-averaged dissipated power per slab cross-section (W/m^2).

    Averages sigma*(dA/dt + floating-potential correction)^2 over the final
    simulated period; needs at least two periods so a periodic tail exists.
    """
    if result.n_periods < 2:
        raise MeshError("need at least two simulated periods for a steady tail")
    return float(np.mean(result.power[result.final_period()]))


def _energy_density_per_element(mesh: Mesh1D, curve, b_abs: np.ndarray) -> np.ndarray:
    w = np.empty_like(b_abs)
    mask = mesh.nonlinear_mask()
    if np.any(mask):
        w[..., mask] = material.energy_density(b_abs[..., mask], curve)
    lin = ~mask
    if np.any(lin):
        nu = mesh.linear_nu_per_element()[lin]
        w[..., lin] = 0.5 * nu * b_abs[..., lin] ** 2
    return w


def compute_energy_transient(result: TransientResult) -> np.ndarray:
    """Magnetic energy per slab cross-section (J/m^2) at every time sample."""
    mesh = result.mesh
    w = _energy_density_per_element(mesh, result.curve, np.abs(result.b))
    return w @ mesh.lengths


def average_flux_density(result: TransientResult,
                         lamination: int) -> tuple[np.ndarray, float]:
    """Thickness-averaged flux of one lamination and its final-period max.

    Returns (series over all samples, max |average| over the final period).
    """
    ids = result.mesh.lamination_region_ids()
    if not 0 <= lamination < len(ids):
        raise MeshError(
            f"lamination index {lamination} out of range (have {len(ids)})"
        )
    rid = ids[lamination]
    mask = result.mesh.element_region == rid
    h = result.mesh.lengths[mask]
    series = result.b[:, mask] @ h / h.sum()
    b_max = float(np.max(np.abs(series[result.final_period()])))
    return series, b_max


def max_average_flux_density(result: TransientResult) -> float:
    """Largest per-lamination B-bar max across the stack (LUT key scale)."""
    ids = result.mesh.lamination_region_ids()
    return max(average_flux_density(result, i)[1] for i in range(len(ids)))


# ---------------------------------------------------------------------------
# Serialization


def save_transient_csv(result: TransientResult, path, *, header_extra: str = "") -> None:
    """Long-format CSV: t, field (a|b|power), index, value."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# lamhb v1; transient{header_extra}\n")
        fh.write("t_s,field,index,value\n")
        for k, tk in enumerate(result.t):
            for i, v in enumerate(result.a[k]):
                fh.write(f"{tk:.17g},a,{i},{v:.17g}\n")
            for i, v in enumerate(result.b[k]):
                fh.write(f"{tk:.17g},b,{i},{v:.17g}\n")
            fh.write(f"{tk:.17g},power,0,{result.power[k]:.17g}\n")


def save_mesh_text(mesh: Mesh1D, path) -> None:
    """Plain-text node/element listing."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# lamhb v1; mesh\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for z in mesh.nodes:
            fh.write(f"{z:.17g}\n")
        fh.write(f"elements {mesh.n_elements}\n")
        for e in range(mesh.n_elements):
            rid = mesh.element_region[e]
            fh.write(f"{e} {e + 1} {rid} {mesh.regions[rid].kind}\n")
