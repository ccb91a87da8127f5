from lattice.configs import Config, Pattern, exchange, flip, in_pattern, leq
from lattice.geometry import Box, neighbors
from lattice.monotone import enumerate_monotone_functions

__all__ = [
    "Box",
    "Config",
    "Pattern",
    "enumerate_monotone_functions",
    "exchange",
    "flip",
    "in_pattern",
    "leq",
    "neighbors",
]
