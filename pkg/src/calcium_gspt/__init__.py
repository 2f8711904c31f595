"""Three-variable open-cell calcium model: simulation and slow-fast
(geometric singular perturbation) analysis pipeline.

Subpackages:
- params: parameter ingestion, validation and nondimensionalization
- model: fluxes and the model right-hand side in all formulations
- integrate: stiff integration, Poincare sections, periodic attractors
- scaling: small-parameter identification and the scaling relation
- r1: plateau-regime (order-one c) slow-manifold analysis
- r2: small-c regime (c of order the switching threshold) fold analysis
- orbits: transition maps, spike decomposition, continuation, scans
- cli: command-line front end
"""

from .params import (DimensionlessParameters, ParameterError, Parameters,
                     apply_overrides, load_parameters)

__all__ = [
    "DimensionlessParameters",
    "ParameterError",
    "Parameters",
    "apply_overrides",
    "load_parameters",
]

__version__ = "0.1.0"
