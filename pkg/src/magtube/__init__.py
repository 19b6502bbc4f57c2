"""magtube: a numerical spectral laboratory for magnetic quantum waveguides.

Cross-section mode solvers on masked uniform grids, full curvilinear tube
operators in 2D/3D, effective one-dimensional models for every
field-intensity scaling regime, recursive eigenvalue asymptotics, and
magnetic Hardy-inequality certification, plus a sweep harness that measures
convergence rates empirically.
"""

__version__ = "0.1.0"
