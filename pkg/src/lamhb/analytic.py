"""Closed-form lamination solutions and loss formulas.

Everything here is a pure function of its arguments; these serve as oracles
for the FE solvers, as building blocks of the homogenization tensors, and as
post-processing utilities.  Complex arithmetic uses the e^{+j*omega*t} time
convention throughout the package; hyperbolic ratios are evaluated through
bounded exponentials so large thickness-to-skin-depth ratios cannot overflow.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np


class AnalyticError(ValueError):
    """Arguments outside the validity domain of a closed-form expression."""


def skin_depth(nu: float, sigma: float, omega: float) -> float:
    """Skin depth sqrt(2*nu/(sigma*omega)) in meters."""
    if nu <= 0 or sigma <= 0 or omega <= 0:
        raise AnalyticError(
            f"skin depth needs positive nu, sigma, omega; got {nu}, {sigma}, {omega}"
        )
    return math.sqrt(2.0 * nu / (sigma * omega))


def _cosh_ratio(k: complex, z, half: float):
    """cosh(k*z)/cosh(k*half) for |z| <= half, overflow-safe for Re(k) >= 0.

    Written as (e^{k(z-h)} + e^{-k(z+h)}) / (1 + e^{-2kh}); all exponents have
    nonpositive real part on the admissible domain.
    """
    z = np.asarray(z, dtype=complex)
    num = np.exp(k * (z - half)) + np.exp(-k * (z + half))
    den = 1.0 + np.exp(-2.0 * k * half)
    return num / den


def _cosh_over_sinh(k: complex, z, half: float):
    """cosh(k*z)/sinh(k*half), overflow-safe for Re(k) > 0 and |z| <= half."""
    z = np.asarray(z, dtype=complex)
    num = np.exp(k * (z - half)) + np.exp(-k * (z + half))
    den = 1.0 - np.exp(-2.0 * k * half)
    return num / den


@dataclasses.dataclass(frozen=True)
class LinearProfileParams:
    """Surface value, complex wavenumber and thickness of a cosh profile.

    ``surface`` is the phasor of H (A/m) or B (T) at z = +-d/2; the profile
    inside is surface * cosh(k z)/cosh(k d/2).
    """

    surface: complex
    k: complex
    d: float

    def __post_init__(self) -> None:
        if not self.d > 0:
            raise AnalyticError(f"thickness must be positive, got {self.d}")
        if self.k.real < 0:
            raise AnalyticError(f"Re(k) must be nonnegative, got {self.k}")


def _profile(z, p: LinearProfileParams):
    z_arr = np.asarray(z, dtype=float)
    if np.any(np.abs(z_arr) > p.d / 2 * (1 + 1e-12)):
        raise AnalyticError("profile evaluated outside the lamination")
    if p.k == 0:
        out = np.full(z_arr.shape, complex(p.surface))
        return complex(out) if np.ndim(z) == 0 else out
    out = p.surface * _cosh_ratio(p.k, z_arr, p.d / 2)
    return complex(out) if np.ndim(z) == 0 else out


def linear_H_profile(z, p: LinearProfileParams):
    """Field-strength phasor H(z) = H_s cosh(kz)/cosh(kd/2) inside a sheet."""
    return _profile(z, p)


def linear_B_profile(z, p: LinearProfileParams):
    """Flux-density phasor B(z) = B_s cosh(kz)/cosh(kd/2) inside a sheet."""
    return _profile(z, p)


def _loss_shape(x: float) -> float:
    """(sinh x - sin x)/(cosh x + cos x), asymptotically 1 for large x."""
    if x > 350.0:
        return 1.0
    return (math.sinh(x) - math.sin(x)) / (math.cosh(x) + math.cos(x))


def eddy_loss_density_linear(h0: float, sigma: float, d: float,
                             delta: float) -> float:
    """Time-averaged eddy loss density of a linear sheet, W/m^3.

    ``h0`` is the peak surface field amplitude.  Equals the thickness average
    of |J(z)|^2/(2 sigma) for the cosh field profile:
    H0^2/(sigma d delta) * (sinh(d/delta) - sin(d/delta)) /
    (cosh(d/delta) + cos(d/delta)).
    """
    if h0 < 0 or sigma <= 0 or d <= 0 or delta <= 0:
        raise AnalyticError("loss formula needs h0 >= 0 and positive sigma, d, delta")
    x = d / delta
    return h0 * h0 / (sigma * d * delta) * _loss_shape(x)


@dataclasses.dataclass(frozen=True)
class PowerLawSolutionParams:
    """Inputs of the circularly-polarized power-law sheet solution.

    mu_s: surface permeability (H/m), h_s: surface field magnitude (A/m),
    n: power-law exponent (> 1), omega: angular frequency (rad/s),
    sigma: conductivity (S/m), d: sheet thickness (m).
    """

    mu_s: float
    h_s: float
    n: float
    omega: float
    sigma: float
    d: float

    def __post_init__(self) -> None:
        if self.n <= 1:
            raise AnalyticError(f"power-law exponent must exceed 1, got {self.n}")
        for name in ("mu_s", "h_s", "omega", "sigma", "d"):
            if getattr(self, name) <= 0:
                raise AnalyticError(f"{name} must be positive")


def penetration_depth_z0(p: PowerLawSolutionParams) -> float:
    """Total penetration depth of the power-law sheet solution, meters."""
    num = (2.0 * p.n * (p.n + 1.0) * (3.0 * p.n + 1.0) ** 2) ** 0.25
    return num / ((p.n - 1.0) * math.sqrt(p.omega * p.sigma * p.mu_s))


def penetration_fits_sheet(p: PowerLawSolutionParams) -> bool:
    """True when the two surface penetration regions do not overlap."""
    return penetration_depth_z0(p) <= p.d / 2


def mayergoyz_B_magnitude(z, p: PowerLawSolutionParams):
    """|B|(z) of the power-law sheet: decay from each surface, core plateau.

    Valid when the penetration regions from the two faces do not overlap
    (z0 <= d/2, see :func:`penetration_fits_sheet`); otherwise the plateau is
    clamped to zero width and each half is evaluated from its nearer surface.
    The profile is only used as a comparison oracle, never in the solver path.
    """
    z_arr = np.asarray(z, dtype=float)
    if np.any(np.abs(z_arr) > p.d / 2 * (1 + 1e-12)):
        raise AnalyticError("profile evaluated outside the lamination")
    z0 = penetration_depth_z0(p)
    xi = p.d / 2 - np.abs(z_arr)  # distance to the nearer surface
    base = np.maximum(0.0, 1.0 - xi / z0)
    out = p.mu_s * p.h_s * base ** (2.0 / (p.n - 1.0))
    return float(out) if np.ndim(z) == 0 else out


def unit_average_cosh_profile(z_local, delta: float, d: float) -> np.ndarray:
    """cosh profile with decay length delta, normalized to unit sheet average.

    (k d/2)/sinh(k d/2) * cosh(k z) with k = (1+j)/delta; multiplying a
    sheet-averaged phasor by this weighting reconstructs its local profile.
    """
    z_arr = np.asarray(z_local, dtype=float)
    if np.any(np.abs(z_arr) > d / 2 * (1 + 1e-12)):
        raise AnalyticError("local coordinate outside the lamination")
    if delta <= 0:
        raise AnalyticError("decay length must be positive")
    k = (1.0 + 1.0j) / delta
    return (k * d / 2.0) * _cosh_over_sinh(k, z_arr, d / 2)


def local_flux_from_average(b_avg, z_local, nu0: float, sigma: float,
                            omega: float, d: float):
    """Local flux phasor reconstructed from the thickness average.

    B(z) = B_avg * (k d / 2)/sinh(k d/2) * cosh(k z) with k = (1+j)/delta and
    delta the linear skin depth of (nu0, sigma, omega).  Preserves the
    thickness average exactly; omega = 0 returns the uniform profile.
    """
    z_arr = np.asarray(z_local, dtype=float)
    if np.any(np.abs(z_arr) > d / 2 * (1 + 1e-12)):
        raise AnalyticError("local coordinate outside the lamination")
    if omega == 0.0:
        out = np.full(z_arr.shape, complex(b_avg))
        return complex(out) if np.ndim(z_local) == 0 else out
    delta = skin_depth(nu0, sigma, omega)
    out = b_avg * unit_average_cosh_profile(z_arr, delta, d)
    return complex(out) if np.ndim(z_local) == 0 else out


def average_to_surface_factor(nu: float, sigma: float, omega: float,
                              d: float) -> complex:
    """Ratio H_s/H_a of surface to thickness-averaged field of a cosh profile.

    Equals (k d/2) coth(k d/2) with k = (1+j)/delta(nu, sigma, omega); this is
    also the ratio nu_xy_hom/nu of the frequency-domain homogenization entry
    to the material reluctivity.
    """
    delta = skin_depth(nu, sigma, omega)
    k = (1.0 + 1.0j) / delta
    u = k * d / 2.0
    return complex(u * _cosh_over_sinh(k, d / 2.0, d / 2.0))
