"""Lines-of-descent coefficients, Poisson-Dirichlet transition sampling and ergodic checks."""

__version__ = "0.1.0"
