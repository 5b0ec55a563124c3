"""Narrow escape through small boundary windows: asymptotic formulas, the
boundary singularity of the Neumann function, a disk integral-equation solver
and a Brownian-dynamics engine that checks them against each other."""

from . import asymptotics, geometry, greens, helmholtz
from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"
