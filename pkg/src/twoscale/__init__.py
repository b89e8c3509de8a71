"""Linear two-timescale stochastic approximation: problems, simulation and theory."""
__version__ = "0.1.0"
