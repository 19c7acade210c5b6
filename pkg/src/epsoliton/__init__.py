"""epsoliton: a numerical laboratory for solitary waves of the 1D
Euler-Poisson plasma system.

Modules:
  grid        - grids, spectral calculus, weight functions, norm bundles
  profile     - solitary-wave profiles via the Sagdeev pseudopotential
  elliptic    - Poisson/Helmholtz solvers, scalar Jost/scattering theory
  dynamics    - nonlinear evolution (method of lines, RK4) and invariants
  modulation  - kernel/adjoint vectors, (c, D) decomposition and tracking
  linearized  - the linearized operator, semigroup runs, decay/smoothing
  evans       - 4x4 Evans function, dispersion roots, resolvent
  diagnostics - virial functionals, stability experiment, verdicts
  cli         - command-line orchestration and persistence
"""

__version__ = "0.1.0"

from . import (diagnostics, dynamics, elliptic, evans, grid, linearized,
               modulation, profile)

__all__ = ["grid", "profile", "elliptic", "dynamics", "modulation",
           "linearized", "evans", "diagnostics", "cli", "__version__"]
