"""Numerical experiments on eigenfunction sup norms for quantum completely
integrable systems: surfaces of revolution, moment-map rank conditions,
equatorial quasimodes and flat-torus lattice counts."""

from . import dynamics, geometry, lattice, momentmap, quasimode, spectral
from .errors import QCILabError

__version__ = "0.1.0"

__all__ = ["dynamics", "geometry", "lattice", "momentmap", "quasimode", "spectral", "QCILabError"]
