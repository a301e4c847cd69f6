"""Numerical toolkit for a planar map family with a saddle two-cycle.

Submodules
----------
mapcore      map evaluation, exact surd arithmetic, orbits
manifolds    local invariant manifolds, globalization, comparison wedges
homoclinic   tangle intersections, straightened frame, homoclinic family
intervals    outward-rounded interval arithmetic
certificates inequality certificates over intervals / exact arithmetic
horseshoe    transversal return map, strip certificates, periodic orbits
basin        basin-of-attraction classification and rendering
cli          command-line entry points and artifact emission
"""

from .mapcore import (
    MapParams,
    PlanarPoint,
    SurdNumber,
    OrbitLog,
    DivergenceError,
    P0,
    P1,
    apply,
    apply_inverse,
    iterate,
    jacobian,
    spectral,
    surd_power,
)

__all__ = [
    "MapParams",
    "PlanarPoint",
    "SurdNumber",
    "OrbitLog",
    "DivergenceError",
    "P0",
    "P1",
    "apply",
    "apply_inverse",
    "iterate",
    "jacobian",
    "spectral",
    "surd_power",
]

__version__ = "0.1.0"
