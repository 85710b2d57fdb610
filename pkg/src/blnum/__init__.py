"""Numerical toolkit for Brascamp-Lieb constants.

Modules:
    core        datum model, validation, numeric policy, JSON I/O
    finiteness  scaling/dimension/codimension conditions and subspace search
    gaussopt    Gaussian quotient and the fixed-point optimizer
    frames      wedge products, index tuples, c estimates, certificate traces
    kakeya      tube families and overlap quadrature experiments
    nonlinear   factor-two function class, Poisson smoothing, composition sweeps
    cli         command-line entry points
"""

from .core import (
    BLDatum,
    DEFAULT_POLICY,
    DatumFormatError,
    LinearMap,
    NumericPolicy,
    load_datum,
    save_datum,
    validate_datum,
)

__all__ = [
    "BLDatum",
    "DEFAULT_POLICY",
    "DatumFormatError",
    "LinearMap",
    "NumericPolicy",
    "load_datum",
    "save_datum",
    "validate_datum",
]

__version__ = "0.1.0"
