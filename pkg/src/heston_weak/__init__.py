"""Weak-error experiments for the log-Heston model.

The variance is discretized with a drift-implicit Milstein step and the log
price with an Euler step.  The package also provides a semi-analytic
reference pricer and a harness that measures empirical weak convergence rates.
"""

__version__ = "0.1.0"

from .core import HestonParams, TimeGrid, feller_report, preset, uniform_grid  # noqa: E402
from .schemes import Scheme  # noqa: E402

__all__ = ["HestonParams", "TimeGrid", "Scheme", "feller_report", "preset", "uniform_grid",
           "__version__"]
