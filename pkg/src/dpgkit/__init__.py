"""DPG finite elements: optimal test spaces from element-local Gram solves.

Subpackages split along the natural seams of the method:

* :mod:`dpgkit.la_core` - dense/sparse SPD and saddle-point solvers
* :mod:`dpgkit.ref_elem` - reference-element bases and quadrature
* :mod:`dpgkit.mesh` - interval and triangle meshes, skeleton, bisection
* :mod:`dpgkit.dpg_engine` - formulation-agnostic assembly, solve, estimator
* :mod:`dpgkit.ode1d` - 1D model problem formulations with closed-form oracles
* :mod:`dpgkit.poisson2d` - Dirichlet Laplacian with interface flux unknowns
* :mod:`dpgkit.adaptivity` - estimator-driven refinement loop
* :mod:`dpgkit.cli` - experiment driver emitting CSV/JSON/PNG artifacts
"""


class DpgkitError(Exception):
    """Base class for all errors raised by dpgkit."""


__all__ = ["DpgkitError"]
__version__ = "0.1.0"
