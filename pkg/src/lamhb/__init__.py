"""DC-biased homogenized harmonic-balance FE solver for laminated cores.

Library layout:

* :mod:`lamhb.material` - nonlinear B-H models (exponential law and its
  C1-capped variant, power-law fits) and derived quantities.
* :mod:`lamhb.analytic` - closed-form sheet solutions, skin depth, eddy loss
  formula, local-flux back-transformation.
* :mod:`lamhb.homog` - homogenized material tensors (simple, standard
  complex, and calibrated two-skin-depth variants) and the homogenized loss
  rule.
* :mod:`lamhb.fe1d` - 1-D slab meshes, P1 assembly, and the nonlinear
  transient reference solver.
* :mod:`lamhb.hbsolver` - block-Jacobi multiharmonic solver on fine and
  homogenized meshes.
* :mod:`lamhb.lut` - generation, persistence and interpolation of the
  calibrated skin-depth look-up table.
* :mod:`lamhb.bench` - scenario harness comparing the harmonic-balance
  variants against the transient reference.
* :mod:`lamhb.cli` - ``lamhb`` command-line entry point.
"""

from .material import (
    BHCurve,
    BrauerParams,
    LinearMaterial,
    PAPER_COLD_ROLLED_STEEL,
    PowerLawParams,
)
from .fe1d import Drive, Mesh1D, StackGeometry
from .homog import HomogenizationParams, ModifiedWavenumbers
from .hbsolver import HarmonicSet, HarmonicSolution, SolverOptions, hb_solve
from .lut import LookupTable, generate_lut, load_lut, save_lut

__version__ = "0.1.0"

__all__ = [
    "BHCurve",
    "BrauerParams",
    "LinearMaterial",
    "PAPER_COLD_ROLLED_STEEL",
    "PowerLawParams",
    "Drive",
    "Mesh1D",
    "StackGeometry",
    "HomogenizationParams",
    "ModifiedWavenumbers",
    "HarmonicSet",
    "HarmonicSolution",
    "SolverOptions",
    "hb_solve",
    "LookupTable",
    "generate_lut",
    "load_lut",
    "save_lut",
    "__version__",
]
