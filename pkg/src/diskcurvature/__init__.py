"""Conformal metrics ``e^u |dx|^2`` on the unit disk with prescribed Gaussian
curvature ``K`` in the interior and geodesic curvature ``h`` on the boundary.

The conformal factor solves

    -Lap u = 2 K e^u            in the disk,
    du/dnu + 2 = 2 h e^(u/2)    on the unit circle,

and is a critical point of

    I(u) = (1/2) int |grad u|^2 - 2 int K e^u + 2 oint u - 4 oint h e^(u/2).

Modules
-------
grid         polar grid, finite-volume Dirichlet form, quadrature, snapshots
curvature    curvature definitions, symmetry groups, deficit, hypotheses
energy       I, the perturbed family I + eps J, residuals, second variation
solvers      Newton, gradient flow, continuation, mountain pass, Morse index
radial       shooting for radial solutions and the exact hyperbolic family
bubbles      concentrating test functions and their energies
diagnostics  Gauss-Bonnet, Lebedev-Milin gap, blow-up sets, Liouville checks
cli          command line entry point
"""

__version__ = "0.1.0"
