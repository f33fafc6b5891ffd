"""Boundary blow-up solutions of ``Lu = f(u)`` on planar domains: grids, monotone
discretizations, explicit barriers and numerical checks of their estimates.

Submodules are imported lazily by callers; this package namespace stays light so
that thread settings can be applied before numerical libraries load.
"""

__version__ = "0.1.0"
