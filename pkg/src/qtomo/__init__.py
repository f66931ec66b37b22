"""Desk-scale simulation of quantum tomography and bias-suppressed phase estimation."""

from .qcore import (
    DensityMatrix,
    GridLabel,
    Ket,
    RandomStream,
    grid_labels,
    measure,
    norm,
    partial_trace,
    qft_grid,
)

__version__ = "0.1.0"

__all__ = [
    "DensityMatrix",
    "GridLabel",
    "Ket",
    "RandomStream",
    "grid_labels",
    "measure",
    "norm",
    "partial_trace",
    "qft_grid",
]
