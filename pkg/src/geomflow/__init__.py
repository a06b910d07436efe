"""Numerical verification of curvature characterizations via heat-semigroup calculus."""
__version__ = "0.1.0"
