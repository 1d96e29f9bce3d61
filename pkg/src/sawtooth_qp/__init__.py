"""Mixed-integer convex relaxations of nonconvex quadratic programs built on sawtooth approximations of x**2."""

__version__ = "0.1.0"
