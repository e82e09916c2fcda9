"""Non-Hermitian atom-cavity toolkit: eigenstructure, driven-dissipative
simulation, spectral fitting and parameter-loop topology."""

__version__ = "0.1.0"
