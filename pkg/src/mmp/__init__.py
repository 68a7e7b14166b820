"""Mass migration processes on lattices.

Modules: rates (jump rate families), measures (single-site marginals and
fugacity tilts), invariance (product invariant measures and exact
stationarity), attractiveness, coupling, simulator (kinetic Monte Carlo),
condensation (canonical ensembles) and cli.
"""

__version__ = "0.1.0"

from .lattice import Kernel
from .measures import Marginal, critical_profile, tilt_and_partition
from .rates import Growth, ProcessClass, RateFamily, check_growth, make_builtin
from .verdict import Verdict

__all__ = ["Kernel", "Marginal", "critical_profile", "tilt_and_partition", "Growth", "ProcessClass",
           "RateFamily", "check_growth", "make_builtin", "Verdict", "__version__"]
