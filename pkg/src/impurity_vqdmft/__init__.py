"""Statevector simulation of a variational DMFT impurity solver for the
Hubbard model on the Bethe lattice, with an exact-diagonalization oracle."""

from .model import HubbardParams, MatsubaraGrid, SiamParams
from .pauli import PauliSum, QubitLayout, jwt_siam
from .sim import Gate, StateVector

__version__ = "0.1.0"

__all__ = [
    "Gate", "HubbardParams", "MatsubaraGrid", "PauliSum", "QubitLayout",
    "SiamParams", "StateVector", "jwt_siam",
]
