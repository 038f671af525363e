"""Exact enumeration, Monte Carlo and combinatorial tools for two coupled Ising
layers with a four-spin interaction, their percolation representations and
the associated six- and eight-vertex models."""

from .lattice import BoxRegion, DualGeometry, EdgeConfig, Region, block
from .limits import CapExceeded
from .spins import ALT, FREE, MINUS, PLUS, Boundary, SpinPair
from .weights import Couplings

__version__ = "0.1.0"

__all__ = ["ALT", "FREE", "MINUS", "PLUS", "Boundary", "BoxRegion", "CapExceeded", "Couplings",
           "DualGeometry", "EdgeConfig", "Region", "SpinPair", "block"]
