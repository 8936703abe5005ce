"""Nonlocal (fractional) dislocation energies in plane elasticity.

Finite-horizon Riesz potentials, singular dislocation strain fields,
cell self-energies and the associated energy functionals.
"""

__version__ = "0.1.0"
