"""Simulation and coefficient toolkit for nematically aligning ellipsoids.

Subpackages
-----------
geometry
    Unit vectors, tangent projection, periodic-box arithmetic.
potentials
    Gaussian-overlap pair potential family and analytic gradients.
simulator
    Overdamped Langevin integration with cell-list neighbor search.
observables
    Q-tensor, scalar order parameter, mean direction, shape/density maps.
macrocoeffs
    Equilibrium family, consistency relation, and the continuum-model
    coefficient functionals.
harness
    Configuration files, parameter sweeps, CSV emission, and the CLI.
"""

__version__ = "0.1.0"
