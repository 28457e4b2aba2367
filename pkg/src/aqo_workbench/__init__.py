"""Desk-scale workbench for adiabatic quantum optimization of Maximum Independent Set.

Generates hard MIS instances, analyses the spectrum of the annealing
Hamiltonian, estimates perturbative crossings, and tunes per-qubit transverse
fields to remove small-gap anticrossings.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    GenerationError,
    InputError,
    InvariantError,
    NumericalError,
    SizeError,
    WorkbenchError,
)
