"""Nonlinear B-H material models and derived quantities.

The workhorse model is the exponential curve H(B) = (k1*exp(k2*B^2) + k3)*B.
Its reluctivity H/B grows without bound, which is unphysical and numerically
fragile at high flux density, so the default "modified" variant switches to an
affine branch with slope ``nu_vac`` above the saturation flux density B_s,
defined by dH/dB(B_s) = nu_vac.  The modified characteristic is C1 at B_s by
construction.

All evaluators accept scalars or numpy arrays and are safe to share across
threads (parameter records are frozen).
"""

from __future__ import annotations

import dataclasses
import hashlib
import math

import numpy as np
from scipy import optimize

MU0 = 4e-7 * math.pi
NU_VAC = 1.0 / MU0  # vacuum reluctivity, m/H

# Below this |B| the reluctivity falls back to its analytic zero-field limit
# k1 + k3 (avoids 0/0 while staying continuous).
B_EPS = 1e-12

# Bracket for the saturation flux density root solve, in tesla.
_BSAT_BRACKET = (1e-3, 10.0)


class MaterialError(ValueError):
    """Invalid material parameters or evaluation outside the model domain."""


@dataclasses.dataclass(frozen=True)
class BrauerParams:
    """Coefficients of the exponential B-H law H = (k1*e^(k2*B^2) + k3)*B.

    k1, k3 carry m/H; k2 carries 1/T^2.  ``nu_vac`` is the slope of the
    affine extension used by the modified variant.
    """

    k1: float
    k2: float
    k3: float
    nu_vac: float = NU_VAC

    def __post_init__(self) -> None:
        if not (self.k1 > 0 and math.isfinite(self.k1)):
            raise MaterialError(f"k1 must be positive, got {self.k1}")
        if not (self.k2 > 0 and math.isfinite(self.k2)):
            raise MaterialError(f"k2 must be positive, got {self.k2}")
        if not (self.k3 >= 0 and math.isfinite(self.k3)):
            raise MaterialError(f"k3 must be nonnegative, got {self.k3}")
        if not (self.nu_vac > 0 and math.isfinite(self.nu_vac)):
            raise MaterialError(f"nu_vac must be positive, got {self.nu_vac}")

    @property
    def nu_initial(self) -> float:
        """Zero-field reluctivity k1 + k3 (m/H)."""
        return self.k1 + self.k3


#: Typical cold rolled steel coefficients.
PAPER_COLD_ROLLED_STEEL = BrauerParams(k1=3.8, k2=2.17, k3=396.2)

PRESETS = {
    "paper_cold_rolled_steel": PAPER_COLD_ROLLED_STEEL,
}


@dataclasses.dataclass(frozen=True)
class PowerLawParams:
    """Power law B-H relation H = (B/k)^n with n > 1."""

    k: float
    n: float

    def __post_init__(self) -> None:
        if not (self.k > 0 and math.isfinite(self.k)):
            raise MaterialError(f"k must be positive, got {self.k}")
        if not (self.n > 1 and math.isfinite(self.n)):
            raise MaterialError(f"n must exceed 1, got {self.n}")


def _check_nonnegative_b(b: np.ndarray) -> None:
    if np.any(b < 0):
        raise MaterialError("flux density magnitude must be nonnegative")


def _as_field(b) -> tuple[np.ndarray, bool]:
    arr = np.asarray(b, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


def _brauer_dHdB(b: np.ndarray, p: BrauerParams) -> np.ndarray:
    e = np.exp(p.k2 * b * b)
    return p.k1 * e * (1.0 + 2.0 * p.k2 * b * b) + p.k3


def brauer_H(b, p: BrauerParams):
    """Field strength (A/m) of the unmodified exponential law at |B| = b."""
    arr, scalar = _as_field(b)
    _check_nonnegative_b(arr)
    return _ret((p.k1 * np.exp(p.k2 * arr * arr) + p.k3) * arr, scalar)


def saturation_flux_density(p: BrauerParams) -> float:
    """Flux density B_s where dH/dB first reaches nu_vac.

    Solved by bracketed root finding on [1e-3, 10] T to better than 1e-10
    relative.  Raises if the material is not ferromagnetic at zero field
    (k1 + k3 >= nu_vac) or never reaches the vacuum slope inside the bracket.
    """
    lo, hi = _BSAT_BRACKET

    def f(b: float) -> float:
        return _brauer_dHdB(np.asarray(b), p) - p.nu_vac

    if f(lo) >= 0.0:
        raise MaterialError(
            "dH/dB already exceeds nu_vac at near-zero flux; not ferromagnetic"
        )
    if f(hi) <= 0.0:
        raise MaterialError(
            "dH/dB never reaches nu_vac on (0, 10] T; material does not saturate"
        )
    return float(optimize.brentq(f, lo, hi, rtol=1e-13, maxiter=200))


@dataclasses.dataclass(frozen=True)
class BHCurve:
    """A concrete B-H characteristic: exponential law, optionally capped.

    mode "brauer" keeps the raw exponential branch everywhere; mode
    "modified_brauer" (default) switches to the affine vacuum-slope branch
    above ``b_sat``.  ``b_sat`` is computed at construction.
    """

    params: BrauerParams
    mode: str = "modified_brauer"
    b_sat: float = dataclasses.field(init=False)

    def __post_init__(self) -> None:
        if self.mode not in ("brauer", "modified_brauer"):
            raise MaterialError(f"unknown B-H mode {self.mode!r}")
        object.__setattr__(self, "b_sat", saturation_flux_density(self.params))

    @property
    def nu_initial(self) -> float:
        return self.params.nu_initial


@dataclasses.dataclass(frozen=True)
class LinearMaterial:
    """Constant-reluctivity stand-in accepted by every curve evaluator.

    Used for linear oracles and for air/insulation bookkeeping; it has no
    saturation, so b_sat-dependent operations reject it.
    """

    nu: float

    def __post_init__(self) -> None:
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise MaterialError(f"reluctivity must be positive, got {self.nu}")

    @property
    def nu_initial(self) -> float:
        return self.nu


def modified_brauer_H(b, curve: BHCurve):
    """Field strength (A/m) of the C1-capped law at |B| = b."""
    arr, scalar = _as_field(b)
    _check_nonnegative_b(arr)
    p = curve.params
    bs = curve.b_sat
    capped = np.minimum(arr, bs)
    h = (p.k1 * np.exp(p.k2 * capped * capped) + p.k3) * capped
    h = h + p.nu_vac * np.maximum(arr - bs, 0.0)
    return _ret(h, scalar)


def field_strength(b, curve):
    """H(|B|) of the curve's active model (A/m)."""
    if isinstance(curve, LinearMaterial):
        arr, scalar = _as_field(b)
        _check_nonnegative_b(arr)
        return _ret(curve.nu * arr, scalar)
    if isinstance(curve, PowerLawParams):
        return power_law_H(b, curve)
    if curve.mode == "brauer":
        return brauer_H(b, curve.params)
    return modified_brauer_H(b, curve)


def reluctivity(b, curve):
    """nu(|B|) = H(|B|)/|B| in m/H, with the analytic limit k1 + k3 at B -> 0."""
    arr, scalar = _as_field(b)
    _check_nonnegative_b(arr)
    if isinstance(curve, LinearMaterial):
        return _ret(np.full(arr.shape, curve.nu), scalar)
    safe = np.where(arr > B_EPS, arr, 1.0)
    nu = np.asarray(field_strength(safe, curve)) / safe
    nu = np.where(arr > B_EPS, nu, curve.params.nu_initial)
    return _ret(nu, scalar)


def differential_reluctivity(b, curve):
    """dH/dB of the active branch (m/H)."""
    arr, scalar = _as_field(b)
    _check_nonnegative_b(arr)
    if isinstance(curve, LinearMaterial):
        return _ret(np.full(arr.shape, curve.nu), scalar)
    p = curve.params
    if curve.mode == "modified_brauer":
        # evaluate the exponential on the capped branch only; beyond b_sat the
        # slope is nu_vac and the raw exponent would overflow at large b
        dhdb = np.where(arr > curve.b_sat, p.nu_vac,
                        _brauer_dHdB(np.minimum(arr, curve.b_sat), p))
    else:
        dhdb = _brauer_dHdB(arr, p)
    return _ret(dhdb, scalar)


def energy_density(b, curve):
    """Magnetic energy density w(B) = int_0^B H(B') dB' in J/m^3.

    The integral of the exponential branch has the closed form
    k1*(e^(k2*B^2) - 1)/(2*k2) + k3*B^2/2; beyond b_sat the affine branch
    integrates to a quadratic.  This is exact, so it trivially meets the
    quadrature tolerance the rest of the package assumes (1e-8 relative).
    """
    arr, scalar = _as_field(b)
    _check_nonnegative_b(arr)
    if isinstance(curve, LinearMaterial):
        return _ret(0.5 * curve.nu * arr * arr, scalar)
    p = curve.params

    def w_brauer(x: np.ndarray) -> np.ndarray:
        return p.k1 * np.expm1(p.k2 * x * x) / (2.0 * p.k2) + 0.5 * p.k3 * x * x

    if curve.mode == "brauer":
        return _ret(w_brauer(arr), scalar)
    bs = curve.b_sat
    below = w_brauer(np.minimum(arr, bs))
    h_sat = float(np.asarray(brauer_H(bs, p)))
    over = np.maximum(arr - bs, 0.0)
    return _ret(below + h_sat * over + 0.5 * p.nu_vac * over * over, scalar)


def power_law_H(b, p: PowerLawParams):
    """Field strength of the power law H = (B/k)^n."""
    arr, scalar = _as_field(b)
    _check_nonnegative_b(arr)
    return _ret((arr / p.k) ** p.n, scalar)


def fit_power_law(curve, b_range: tuple[float, float],
                  n_samples: int = 200) -> PowerLawParams:
    """Least-squares power-law fit of the curve over a flux-density window.

    The fit is linear in log-log space (log H = n*log B - n*log k), sampled
    uniformly on [b_lo, b_hi].  For saturating curves the window must lie
    within (0, b_sat].
    """
    b_lo, b_hi = b_range
    if not (0.0 < b_lo < b_hi):
        raise MaterialError(f"degenerate fit range {b_range}")
    if isinstance(curve, LinearMaterial):
        raise MaterialError("a linear law has exponent 1; no power-law fit")
    if isinstance(curve, BHCurve) and b_hi > curve.b_sat * (1.0 + 1e-12):
        raise MaterialError(
            f"fit range must stay within (0, b_sat={curve.b_sat:.6g}]"
        )
    if n_samples < 2:
        raise MaterialError("need at least two sample points for the fit")
    b = np.linspace(b_lo, b_hi, n_samples)
    h = np.asarray(field_strength(b, curve))
    n, c = np.polyfit(np.log(b), np.log(h), 1)
    if n <= 1.0:
        raise MaterialError(
            f"fitted exponent n={n:.4g} is not in the power-law regime (n > 1)"
        )
    k = math.exp(-c / n)
    return PowerLawParams(k=k, n=float(n))


def bh_inverse_sampler(curve, h_max: float, n_points: int = 4096):
    """Vectorized inverse law B(|H|) built on a dense monotone sample grid.

    Returns a callable mapping field-strength magnitudes (array, A/m) to flux
    densities; interpolation is linear on a grid that covers [0, h_max].
    Used by post-processing that reconstructs saturated local profiles from
    field-strength ansatz signals.
    """
    if isinstance(curve, LinearMaterial):
        nu = curve.nu

        def invert_linear(h):
            return np.asarray(h, dtype=float) / nu

        return invert_linear

    b_hi = max(curve.b_sat, 1e-3)
    while float(np.asarray(field_strength(b_hi, curve))) < h_max:
        b_hi *= 2.0
        if b_hi > 1e6:
            raise MaterialError("inverse-law grid expansion failed")
    b_grid = np.linspace(0.0, b_hi, n_points)
    h_grid = np.asarray(field_strength(b_grid, curve))

    def invert(h):
        return np.interp(np.asarray(h, dtype=float), h_grid, b_grid)

    return invert


def material_hash(curve) -> str:
    """Short stable digest of the material definition, used in file headers."""
    if isinstance(curve, LinearMaterial):
        text = f"linear,{curve.nu!r}"
    else:
        p = curve.params
        text = f"{p.k1!r},{p.k2!r},{p.k3!r},{p.nu_vac!r},{curve.mode}"
    return hashlib.sha1(text.encode()).hexdigest()[:12]


def curve_from_config(spec: dict) -> BHCurve:
    """Build a BHCurve from a config mapping.

    Accepts either {"preset": "<name>"} or explicit {"k1","k2","k3"} with
    optional "nu_vac"; "mode" defaults to modified_brauer in both forms.
    """
    mode = spec.get("mode", "modified_brauer")
    if "preset" in spec:
        name = spec["preset"]
        if name not in PRESETS:
            raise MaterialError(
                f"unknown material preset {name!r}; available: {sorted(PRESETS)}"
            )
        return BHCurve(params=PRESETS[name], mode=mode)
    try:
        params = BrauerParams(
            k1=float(spec["k1"]), k2=float(spec["k2"]), k3=float(spec["k3"]),
            nu_vac=float(spec.get("nu_vac", NU_VAC)),
        )
    except KeyError as exc:
        raise MaterialError(f"material config missing key {exc}") from exc
    return BHCurve(params=params, mode=mode)
