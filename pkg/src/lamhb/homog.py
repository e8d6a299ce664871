"""Homogenized material tensors for lamination stacks.

Three levels of in-plane homogenized reluctivity are provided:

* the frequency-dependent complex entry derived from the cosh eddy-current
  profile of a linear sheet (``original_reluctivity_xy``),
* its zero-frequency limit, the purely real mixing rules
  (``simple_reluctivity_tensor``),
* the generalized entry in which the flux-density and field-strength decay
  lengths are independent free parameters (``modified_reluctivity_xy``),
  used for dc-biased saturated operation with a calibrated delta_H.

Time convention e^{+j*omega*t}: a dissipative entry has Im(nu_xy) >= 0 and
the time-averaged loss density of harmonic n is
(n*omega_f/2) * Im(nu_xy(n*omega_f)) * |B_peak|^2.

Insulation-aware corrections (stacking factor gamma, insulation reluctivity,
d -> d + d_ins) are applied consistently inside the complex entries when
``insulation_corrections`` is on (the default); switching it off evaluates
the bare single-sheet formulas.
"""

from __future__ import annotations

import cmath
import dataclasses
import math

from .analytic import AnalyticError, skin_depth


class HomogenizationError(ValueError):
    """Invalid homogenization parameters or tensor evaluation."""


def _coth(u: complex) -> complex:
    # Re(u) > 0 assumed; exponential form avoids overflow for thick sheets.
    if u.real > 20.0:
        e = cmath.exp(-2.0 * u)
        return (1.0 + e) / (1.0 - e)
    return cmath.cosh(u) / cmath.sinh(u)


def _inv_sinh_sq(u: complex) -> complex:
    if u.real > 20.0:
        e = cmath.exp(-2.0 * u)
        return 4.0 * e / (1.0 - e) ** 2
    s = cmath.sinh(u)
    return 1.0 / (s * s)


@dataclasses.dataclass(frozen=True)
class HomogenizationParams:
    """Lamination cell geometry and materials feeding the tensor formulas.

    d: conductive sheet thickness (m); d_ins: insulation thickness (m);
    gamma: stacking factor d/(d + d_ins); sigma: sheet conductivity (S/m);
    nu_ins: insulation reluctivity (m/H).
    """

    d: float
    d_ins: float
    gamma: float
    sigma: float
    nu_ins: float

    def __post_init__(self) -> None:
        if self.d <= 0:
            raise HomogenizationError(f"sheet thickness must be positive, got {self.d}")
        if self.d_ins < 0:
            raise HomogenizationError(f"insulation thickness must be >= 0, got {self.d_ins}")
        if not (0.0 < self.gamma <= 1.0):
            raise HomogenizationError(f"stacking factor must be in (0, 1], got {self.gamma}")
        if self.sigma <= 0:
            raise HomogenizationError(f"conductivity must be positive, got {self.sigma}")
        if self.nu_ins <= 0:
            raise HomogenizationError(f"insulation reluctivity must be positive, got {self.nu_ins}")
        geo = self.d / (self.d + self.d_ins)
        if abs(geo - self.gamma) > 1e-9 * max(abs(geo), abs(self.gamma)):
            raise HomogenizationError(
                f"stacking factor {self.gamma} inconsistent with thicknesses "
                f"(d/(d+d_ins) = {geo})"
            )

    @classmethod
    def from_thicknesses(cls, d: float, d_ins: float, sigma: float,
                         nu_ins: float) -> "HomogenizationParams":
        return cls(d=d, d_ins=d_ins, gamma=d / (d + d_ins), sigma=sigma,
                   nu_ins=nu_ins)

    @classmethod
    def from_stacking_factor(cls, d: float, gamma: float, sigma: float,
                             nu_ins: float) -> "HomogenizationParams":
        if not (0.0 < gamma <= 1.0):
            raise HomogenizationError(f"stacking factor must be in (0, 1], got {gamma}")
        return cls(d=d, d_ins=d * (1.0 / gamma - 1.0), gamma=gamma,
                   sigma=sigma, nu_ins=nu_ins)

    @property
    def d_tilde(self) -> float:
        """Cell period d + d_ins used by the insulation-corrected entries."""
        return self.d + self.d_ins


def effective_conductivity(p: HomogenizationParams) -> tuple[float, float]:
    """(in-plane, stack-normal) effective conductivity: (gamma*sigma, 0)."""
    return p.gamma * p.sigma, 0.0


def mixed_reluctivity_xy(p: HomogenizationParams, nu: float) -> float:
    """Harmonic (series flux path) mix of sheet and insulation reluctivity."""
    if nu <= 0:
        raise HomogenizationError(f"reluctivity must be positive, got {nu}")
    return 1.0 / ((1.0 - p.gamma) / p.nu_ins + p.gamma / nu)


def mixed_reluctivity_z(p: HomogenizationParams, nu: float) -> float:
    """Arithmetic (parallel flux path) mix for the stack-normal entry."""
    if nu <= 0:
        raise HomogenizationError(f"reluctivity must be positive, got {nu}")
    return p.gamma * nu + (1.0 - p.gamma) * p.nu_ins


def simple_reluctivity_tensor(p: HomogenizationParams,
                              nu: float) -> tuple[float, float]:
    """Real zero-frequency tensor entries (in-plane, stack-normal)."""
    return mixed_reluctivity_xy(p, nu), mixed_reluctivity_z(p, nu)


def _effective_triplet(p: HomogenizationParams, nu: float,
                       insulation_corrections: bool) -> tuple[float, float, float]:
    """(nu, sigma, d) entering the complex entries, with or without mixing."""
    if insulation_corrections:
        return mixed_reluctivity_xy(p, nu), p.gamma * p.sigma, p.d_tilde
    return nu, p.sigma, p.d


def original_reluctivity_xy(p: HomogenizationParams, nu: float,
                            omega: float, *,
                            insulation_corrections: bool = True) -> complex:
    """Complex in-plane entry of the frequency-domain homogenization.

    sigma*d*delta*omega*(1+j)/8 * sinh((1+j)d/delta)/sinh^2((1+j)d/(2 delta)),
    evaluated with the insulation-corrected (nu, sigma, d) triplet by default.
    Rejects omega <= 0: the dc entry is the simple tensor instead.
    """
    if omega <= 0:
        raise HomogenizationError(
            "complex entry undefined at omega <= 0; use the simple tensor for dc"
        )
    nu_e, sigma_e, d_e = _effective_triplet(p, nu, insulation_corrections)
    delta = skin_depth(nu_e, sigma_e, omega)
    u = (1.0 + 1.0j) * d_e / (2.0 * delta)
    return sigma_e * d_e * delta * omega * (1.0 + 1.0j) / 8.0 * 2.0 * _coth(u)


@dataclasses.dataclass(frozen=True)
class ModifiedWavenumbers:
    """Independent decay lengths for the flux-density and field ansatz.

    k_X = (1+j)/delta_X by construction; only the real skin depths are
    stored.
    """

    delta_b: float
    delta_h: float

    def __post_init__(self) -> None:
        if self.delta_b <= 0 or self.delta_h <= 0:
            raise HomogenizationError(
                f"skin depths must be positive, got {self.delta_b}, {self.delta_h}"
            )

    @property
    def k_b(self) -> complex:
        return (1.0 + 1.0j) / self.delta_b

    @property
    def k_h(self) -> complex:
        return (1.0 + 1.0j) / self.delta_h


def modified_reluctivity_xy(p: HomogenizationParams, nu: float, omega: float,
                            w: ModifiedWavenumbers, *,
                            insulation_corrections: bool = True) -> complex:
    """Generalized complex in-plane entry with free decay lengths.

    nu*k_B^2*d/(8 sinh^2(k_B d/2)) * [sinh(k_B d)/k_B + d]
    - j * d*nu^2*k_H^4/(8 sigma omega sinh^2(k_H d/2)) * [sinh(k_H d)/k_H - d].

    With k_H = k_B = (1+j)/delta(nu, sigma, omega) this reduces exactly to
    :func:`original_reluctivity_xy`.  The same insulation-corrected triplet is
    substituted as there, so the reduction holds at any stacking factor.
    """
    if omega <= 0:
        raise HomogenizationError(
            "complex entry undefined at omega <= 0; use the simple tensor for dc"
        )
    nu_e, sigma_e, d_e = _effective_triplet(p, nu, insulation_corrections)
    k_b, k_h = w.k_b, w.k_h
    u_b = k_b * d_e / 2.0
    u_h = k_h * d_e / 2.0
    term_b = (nu_e * k_b * k_b * d_e / 8.0) * (
        2.0 * _coth(u_b) / k_b + d_e * _inv_sinh_sq(u_b)
    )
    term_h = (-1.0j) * (d_e * nu_e * nu_e * k_h ** 4 / (8.0 * sigma_e * omega)) * (
        2.0 * _coth(u_h) / k_h - d_e * _inv_sinh_sq(u_h)
    )
    return term_b + term_h


def standard_wavenumbers(p: HomogenizationParams, nu: float, omega: float, *,
                         insulation_corrections: bool = True) -> ModifiedWavenumbers:
    """Wavenumbers that collapse the modified entry onto the original one."""
    nu_e, sigma_e, _ = _effective_triplet(p, nu, insulation_corrections)
    delta = skin_depth(nu_e, sigma_e, omega)
    return ModifiedWavenumbers(delta_b=delta, delta_h=delta)


def homogenized_loss_density(b_avg_harmonics, nu_xy_by_order,
                             omega_f: float) -> float:
    """Time-averaged eddy loss density (W/m^3) of a harmonic flux spectrum.

    ``b_avg_harmonics`` holds (order n, peak phasor amplitude) pairs of the
    sheet-averaged flux density, i.e. the harmonic's physical amplitude such
    that b_n(t) = Re(B_n e^{j n omega_f t}).  ``nu_xy_by_order`` maps each
    order n >= 1 to its complex tensor entry at n*omega_f.  Orders n <= 0
    contribute nothing.  Raises if an entry is anti-dissipative.
    """
    total = 0.0
    for order, amplitude in b_avg_harmonics:
        if order <= 0 or amplitude == 0:
            continue
        nu_xy = nu_xy_by_order[order]
        im = nu_xy.imag
        if im < -1e-9 * abs(nu_xy):
            raise HomogenizationError(
                f"anti-dissipative tensor entry at order {order}: Im = {im}"
            )
        total += 0.5 * order * omega_f * max(im, 0.0) * abs(amplitude) ** 2
    return total
