"""Solver library for stationary non-isothermal power-law channel flow with
friction-capped wall slip, coupled to a truncated-source heat equation.

The package is organised around the solution scheme:

- ``constitutive``: pointwise stress law, its truncations and inequality oracles
- ``exponents``: admissible (p, q) arithmetic and a-priori bound constants
- ``discretization``: channel meshes, Taylor-Hood / P1 spaces, form assembly
- ``flow``: variational-inequality flow solve (Newton + projected multiplier)
- ``heat``: linearized heat solve and uniform-bound diagnostics
- ``coupling``: fixed-point iteration and the delta = 1/m continuation
- ``config`` / ``io`` / ``verification`` / ``cli``: artifact surface
"""

__version__ = "0.1.0"
