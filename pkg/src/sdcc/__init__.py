"""Superdense triangular color-code workbench.

Construction of triangular color-code layouts and superdense syndrome
extraction circuits, Pauli-noise simulation, exact most-likely-error
decoding, and the analysis pipelines built on top of them.
"""

__version__ = "0.1.0"
