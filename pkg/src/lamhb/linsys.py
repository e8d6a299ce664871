"""Tridiagonal operators and constrained solves for the 1-D FE machinery.

P1 elements on a 1-D mesh give symmetric tridiagonal stiffness and mass
operators.  Electrically isolated conductors (the laminations) additionally
carry a zero-net-current constraint: eliminating the per-conductor floating
potential replaces the conductivity mass matrix M by the projected form

    M~ = M - sum_i w_i w_i^T / s_i,   w_i = M^(i) 1,  s_i = 1^T M^(i) 1,

where M^(i) is the mass restricted to conductor i.  Systems of the shape
T - c * sum_i w_i w_i^T / s_i with tridiagonal T are solved through the
Woodbury identity (banded factorization plus a small dense capacitance
system).
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.linalg import solve_banded


@dataclasses.dataclass
class Tridiag:
    """Symmetric tridiagonal operator stored as (off, diag) bands."""

    diag: np.ndarray
    off: np.ndarray  # sub- == super-diagonal, length len(diag) - 1

    @classmethod
    def zeros(cls, n: int, dtype=float) -> "Tridiag":
        return cls(np.zeros(n, dtype), np.zeros(n - 1, dtype))

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[:-1] += self.off * x[1:]
        y[1:] += self.off * x[:-1]
        return y

    def __add__(self, other: "Tridiag") -> "Tridiag":
        return Tridiag(self.diag + other.diag, self.off + other.off)

    def scaled(self, c) -> "Tridiag":
        return Tridiag(c * self.diag, c * self.off)

    def quadratic_form(self, x: np.ndarray, y: np.ndarray | None = None) -> complex:
        """conj(x)^T A y (y defaults to x)."""
        if y is None:
            y = x
        return complex(np.vdot(x, self.matvec(y)))


def assemble_stiffness_tridiag(lengths: np.ndarray, coeff: np.ndarray) -> Tridiag:
    """P1 stiffness with one (possibly complex) coefficient per element."""
    n = lengths.shape[0] + 1
    dtype = np.result_type(coeff, float)
    k = Tridiag.zeros(n, dtype)
    w = np.asarray(coeff) / lengths
    k.diag[:-1] += w
    k.diag[1:] += w
    k.off[:] = -w
    return k


def assemble_mass_tridiag(lengths: np.ndarray, coeff: np.ndarray) -> Tridiag:
    """Consistent P1 mass with one coefficient per element."""
    n = lengths.shape[0] + 1
    dtype = np.result_type(coeff, float)
    m = Tridiag.zeros(n, dtype)
    w = np.asarray(coeff) * lengths / 6.0
    m.diag[:-1] += 2.0 * w
    m.diag[1:] += 2.0 * w
    m.off[:] = w
    return m


@dataclasses.dataclass(frozen=True)
class ConductorConstraints:
    """Zero-net-current constraint data for a set of isolated conductors.

    ``weights`` has one row per conductor: w_i = M^(i) 1 (sigma-weighted nodal
    integration weights of conductor i); ``scales`` holds s_i = sum(w_i) > 0.
    """

    weights: np.ndarray  # (n_groups, n_nodes)
    scales: np.ndarray  # (n_groups,)

    @property
    def n_groups(self) -> int:
        return self.weights.shape[0]

    def project_mass_matvec(self, mass: Tridiag, x: np.ndarray) -> np.ndarray:
        """M~ x = M x - sum_i w_i (w_i . x)/s_i."""
        y = mass.matvec(x)
        if self.n_groups:
            coeffs = (self.weights @ x) / self.scales
            y -= self.weights.T @ coeffs
        return y

    def projected_quadratic(self, mass: Tridiag, x: np.ndarray) -> float:
        """conj(x)^T M~ x; real and nonnegative for PSD mass."""
        val = np.vdot(x, self.project_mass_matvec(mass, x))
        return float(val.real)


def conductor_constraints(lengths: np.ndarray, sigma: np.ndarray,
                          groups: np.ndarray, n_nodes: int) -> ConductorConstraints:
    """Build constraint weights from per-element sigma and conductor ids.

    ``groups`` holds an integer conductor id per element, -1 for elements
    that belong to no isolated conductor.
    """
    ids = sorted(set(int(g) for g in groups if g >= 0))
    weights = np.zeros((len(ids), n_nodes))
    for row, gid in enumerate(ids):
        mask = groups == gid
        w = sigma[mask] * lengths[mask] / 2.0  # lumped row sums of M^(i)
        idx = np.nonzero(mask)[0]
        np.add.at(weights[row], idx, w)
        np.add.at(weights[row], idx + 1, w)
    scales = weights.sum(axis=1)
    if np.any(scales <= 0):
        raise ValueError("each constrained conductor needs positive conductance")
    return ConductorConstraints(weights=weights, scales=scales)


def solve_constrained(tri: Tridiag, rhs: np.ndarray,
                      constraints: ConductorConstraints | None,
                      c_mass: complex,
                      pins: tuple[tuple[int, complex], ...] = ()) -> np.ndarray:
    """Solve (T - c_mass * sum_i w_i w_i^T / s_i) x = rhs with end-node pins.

    ``tri`` must already contain the unprojected mass contribution scaled by
    ``c_mass``; this routine subtracts the rank-one constraint corrections via
    the Woodbury identity.  ``pins`` fixes boundary node values (only the
    first/last node are supported, which keeps the reduced system
    tridiagonal); the pinned values also enter the constraint inner products,
    so the elimination is exact.
    """
    n = tri.n
    dtype = np.result_type(tri.diag, rhs,
                           complex(c_mass) if c_mass else float)
    pin_map = {int(i) % n: v for i, v in pins}
    for idx in pin_map:
        if idx not in (0, n - 1):
            raise ValueError("only end-node pins are supported")

    keep = np.ones(n, dtype=bool)
    for idx in pin_map:
        keep[idx] = False
    start = 0 if keep[0] else 1
    stop = n if keep[n - 1] else n - 1
    size = stop - start

    b = rhs.astype(dtype).copy()
    if 0 in pin_map and n > 1:
        b[1] -= tri.off[0] * pin_map[0]
    if (n - 1) in pin_map and n > 1:
        b[n - 2] -= tri.off[n - 2] * pin_map[n - 1]

    ab = np.zeros((3, size), dtype)
    ab[1, :] = tri.diag[start:stop]
    ab[0, 1:] = tri.off[start:stop - 1]
    ab[2, :-1] = tri.off[start:stop - 1]

    x = np.zeros(n, dtype)
    for idx, val in pin_map.items():
        x[idx] = val

    active = constraints is not None and constraints.n_groups and c_mass != 0
    if not active:
        x[start:stop] = solve_banded((1, 1), ab, b[start:stop])
        return x

    w_full = constraints.weights.astype(dtype)
    w = w_full[:, start:stop]
    # Pinned components of the constraint vectors multiply known values and
    # shift the right-hand side of the capacitance system.
    offsets = np.zeros(constraints.n_groups, dtype)
    for idx, val in pin_map.items():
        offsets += w_full[:, idx] * val

    cols = np.concatenate([b[start:stop, None], w.T], axis=1)
    sol = solve_banded((1, 1), ab, cols)
    t_rhs = sol[:, 0]
    t_w = sol[:, 1:]  # T^{-1} w_i columns
    # (S/c - W^T T^{-1} W) q = W^T T^{-1} b + offsets, S = diag(s_i);
    # x = T^{-1} b + T^{-1} W q.
    cap = np.diag(constraints.scales).astype(dtype) / c_mass - w @ t_w
    q = np.linalg.solve(cap, w @ t_rhs + offsets)
    x[start:stop] = t_rhs + t_w @ q
    return x
