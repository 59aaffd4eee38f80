"""Key rates for BB84-style QKD under two-way error correction.

The package compares two asymptotic Eve-entropy objectives, one that ignores
the error-correction transcript beyond its length and one that conditions on
the announced error-location string, and simulates the Cascade protocol whose
leakage both objectives account for.
"""
from . import cascade, channels, decoy, linalg, protocols, sdp, solver, symmetry

__all__ = [
    "cascade",
    "channels",
    "decoy",
    "linalg",
    "protocols",
    "sdp",
    "solver",
    "symmetry",
]
