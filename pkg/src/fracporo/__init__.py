"""Two-phase Darcy flow coupled with poroelasticity in fractured porous
media, with discontinuous pressures at matrix-fracture interfaces.

Modules
-------
mesh         criss-cross triangulations with embedded fracture segments
rockphys     saturation, capillary energy, mobility and equivalent pressure
flow         two-point flux finite volumes for the two-phase flow
mech         quadratic finite elements for linear poroelasticity
solvers      Newton, GMRES with ILU(0)/CPR preconditioning, Newton-Krylov
coupling     implicit time stepping of the coupled system
scenarios    scenario data model, builtin data sets and runs
config       INI/JSON configuration files
output       CSV, VTK and report files
diagnostics  per-step energy, dissipation and mass balance records
verify       oracles, convergence studies and the barrier-effect demo
cli          the ``simulate`` command
"""

__version__ = "0.1.0"
