"""Simulation and cross-validation of protective measurements.

Modules
-------
qcore       finite-dimensional states, observables, bases and channels
zeno        Zeno-protected measurement: POVM, sampling and a brute-force oracle
hamgauss    Gaussian oscillator with a linearly coupled pointer, closed-form flow
tomography  recovering the protected state from black-box access to the protection
toybit      ball-in-a-box toy bit with a continuously coupled pointer
epigauss    classical phase-space model of the Gaussian scheme
cli         seeded experiment runner
"""

__version__ = "0.1.0"
