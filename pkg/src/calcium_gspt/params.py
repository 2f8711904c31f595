"""Model parameter sets and nondimensionalization.

The dimensional parameter set collects every constant of the three-variable
open-cell calcium model (concentrations in uM, times in s).  The
dimensionless set is obtained by rescaling concentrations by ``Q_c`` (cytosolic
calcium scale), the IP3 concentration by ``Q_p`` and time by ``T``; the
default time scale ``T = 1/(gamma*k_f)`` is the IP3-receptor flux time scale.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass


class ParameterError(ValueError):
    """Invalid parameter value or unknown parameter key."""


@dataclass(frozen=True)
class Parameters:
    """Dimensional model parameters (concentrations uM, times s).

    ``p`` is the IP3 concentration, the bifurcation parameter of the model.
    """

    K_c: float = 0.2
    K_h: float = 0.1
    K_p: float = 0.3
    K_tau: float = 0.04
    K_s: float = 0.2
    K_PM: float = 0.3
    K_e: float = 14.0
    tau_max: float = 200.0
    k_f: float = 40.0
    V_s: float = 0.9
    V_PM: float = 0.07
    alpha_0: float = 0.003
    alpha_1: float = 0.01
    K: float = 1.5e-5
    delta: float = 0.1
    gamma: float = 5.5
    k_beta: float = 0.4
    p: float = 0.09

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not v > 0.0:
                raise ParameterError(
                    f"parameter {f.name!r} must be strictly positive, got {v!r}")
        if self.gamma <= 1.0:
            raise ParameterError(f"gamma must exceed 1, got {self.gamma}")

    @property
    def ipr_time_scale(self) -> float:
        """The IP3-receptor time scale T = 1/(gamma*k_f), in seconds."""
        return 1.0 / (self.gamma * self.k_f)

    def replace(self, **kwargs) -> "Parameters":
        return dataclasses.replace(self, **kwargs)

    def nondimensionalize(self, T: float | None = None, Q_c: float = 1.0,
                          Q_p: float = 1.0) -> "DimensionlessParameters":
        """Rescale to dimensionless parameters.

        Concentration-like constants divide by ``Q_c``, rate constants
        multiply by ``T`` (fluxes additionally divide by ``Q_c``), and the
        IP3 concentration divides by ``Q_p``.
        """
        if T is None:
            T = self.ipr_time_scale
        if not (T > 0 and Q_c > 0 and Q_p > 0):
            raise ParameterError("scales T, Q_c, Q_p must be positive")
        return DimensionlessParameters(
            K_c=self.K_c / Q_c,
            K_h=self.K_h / Q_c,
            K_p=self.K_p / Q_c,
            K_tau=self.K_tau / Q_c,
            K_s=self.K_s / Q_c,
            K_PM=self.K_PM / Q_c,
            K_e=self.K_e / Q_c,
            tau_max=self.tau_max / T,
            k_f=self.k_f * T,
            V_s=self.V_s * T / Q_c,
            V_PM=self.V_PM * T / Q_c,
            alpha_0=self.alpha_0 * T / Q_c,
            alpha_1=self.alpha_1 * T / Q_c,
            K=self.K,
            delta=self.delta,
            gamma=self.gamma,
            k_beta=self.k_beta,
            p=self.p / Q_p,
            T=T, Q_c=Q_c, Q_p=Q_p,
        )


@dataclass(frozen=True)
class DimensionlessParameters:
    """Dimensionless counterparts of :class:`Parameters` plus the scales used."""

    K_c: float
    K_h: float
    K_p: float
    K_tau: float
    K_s: float
    K_PM: float
    K_e: float
    tau_max: float
    k_f: float
    V_s: float
    V_PM: float
    alpha_0: float
    alpha_1: float
    K: float
    delta: float
    gamma: float
    k_beta: float
    p: float
    T: float
    Q_c: float
    Q_p: float

    def replace(self, **kwargs) -> "DimensionlessParameters":
        return dataclasses.replace(self, **kwargs)


_FIELD_NAMES = tuple(f.name for f in dataclasses.fields(Parameters))


def load_parameters(path: str) -> Parameters:
    """Load a dimensional parameter set from a flat key/value JSON file.

    Unknown keys and non-positive values are rejected.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParameterError(f"parameter file {path} must hold a JSON object")
    unknown = sorted(set(data) - set(_FIELD_NAMES))
    if unknown:
        raise ParameterError(f"unknown parameter keys: {', '.join(unknown)}")
    return Parameters(**data)


def apply_overrides(params: Parameters, overrides: list[str]) -> Parameters:
    """Apply ``key=value`` override strings to a parameter set."""
    updates = {}
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ParameterError(f"override {item!r} is not of the form key=value")
        key = key.strip()
        if key not in _FIELD_NAMES:
            raise ParameterError(f"unknown parameter key in override: {key!r}")
        try:
            updates[key] = float(value)
        except ValueError as exc:
            raise ParameterError(f"override {item!r}: not a number") from exc
    return params.replace(**updates)
