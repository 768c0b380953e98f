"""sivctl - Regime-switching stochastic SIV simulation and control toolkit"""

__version__ = "1.0.0"
__author__ = "sivctl Team"
