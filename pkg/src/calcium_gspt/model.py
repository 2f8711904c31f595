"""Flux functions and the model right-hand sides in all formulations.

The model tracks cytosolic calcium ``c``, total free calcium ``c_t`` and the
IP3-receptor activation variable ``h``.  Four equivalent formulations are
provided:

* ``rhs_dimensional``   -- original units (uM, s),
* ``rhs_dimensionless`` -- rescaled by (Q_c, Q_p, T),
* ``rhs_r1``            -- dimensionless system with the small parameter
  ``eps`` and the SERCA scale ``nu`` made explicit (regime where c = O(1)),
* ``rhs_r2``            -- exact rescaling c = varepsilon*C, t2 = varepsilon**3 * t
  with nu = nu_tilde*varepsilon**2 (regime where c = O(varepsilon)).

At the distinguished values eps = K_tau**4, nu = V_s (and varepsilon =
K_tau, nu_tilde = V_s/K_tau**2) the scaled systems reproduce the
dimensionless one identically; this is exact algebra, not an expansion.

Normalization convention: the fast store-exchange fluxes are scaled by their
leading coefficients (J+_SERCA by V_s, J-_SERCA by K_tau**4) and the slow
plasma-membrane fluxes J_IN, J_PM by K_tau**4 *including* the cell-volume
ratio delta, i.e. scaled_J_IN = delta*J_IN/K_tau**4.  Folding delta into the
normalization is what makes the scaled slow equations close without explicit
delta factors while remaining exactly equivalent to the dimensionless system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import DimensionlessParameters, Parameters

FORMULATIONS = ("dimensional", "dimensionless", "r1_scaled")


@dataclass(frozen=True)
class FluxValues:
    """All flux and gating values at one state, in the units of the chosen
    formulation."""

    J_IPR: float
    J_SERCA_plus: float
    J_SERCA_minus: float
    J_IN: float
    J_PM: float
    tau_h: float
    h_inf: float
    P_o: float
    alpha: float
    beta: float
    phi_c: float
    phi_p: float
    phi_pdown: float


def hill(x, K, n):
    """Increasing Hill function x^n / (x^n + K^n)."""
    xn = x ** n
    return xn / (xn + K ** n)


def hill_minus(x, K, n):
    """Decreasing Hill function K^n / (x^n + K^n)."""
    Kn = K ** n
    return Kn / (x ** n + Kn)


def a1_coefficient(dp: DimensionlessParameters) -> float:
    """Coefficient a1 = K_tau**4 * tau_max of the scaled h-equation."""
    return dp.K_tau ** 4 * dp.tau_max


def open_probability(c, h, pm) -> tuple:
    """IP3R open probability P_o and its ingredients (beta, alpha, phi terms)."""
    phi_c = hill(c, pm.K_c, 4)
    phi_p = hill(pm.p, pm.K_p, 2)
    phi_pdown = hill_minus(pm.p, pm.K_p, 2)
    h_inf = hill_minus(c, pm.K_h, 4)
    beta = phi_c * phi_p * h
    alpha = phi_pdown * (1.0 - phi_c * h_inf)
    P_o = beta / (beta + pm.k_beta * (beta + alpha))
    return P_o, beta, alpha, phi_c, phi_p, phi_pdown, h_inf


def eval_fluxes(state, pm, formulation: str = "dimensionless") -> FluxValues:
    """Evaluate every flux at ``state`` = (c, c_t, h).

    ``formulation``: "dimensional" or "dimensionless" use the parameter set
    as given; "r1_scaled" additionally normalizes J-_SERCA, J_IN, J_PM by
    K_tau**4 (the membrane fluxes including the factor delta) and J+_SERCA
    by V_s, yielding the order-one scaled fluxes of the slow-fast analysis.
    """
    if formulation not in FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}")
    c, c_t, h = state
    P_o, beta, alpha, phi_c, phi_p, phi_pdown, h_inf = open_probability(c, h, pm)
    c_e_scaled = pm.gamma * (c_t - c)  # ER calcium relative to cytosolic volume
    J_IPR = pm.gamma * pm.k_f * P_o * (c_t - (1.0 + 1.0 / pm.gamma) * c)
    J_SERCA_plus = pm.V_s * c ** 2 / (c ** 2 + pm.K_s ** 2)
    J_SERCA_minus = pm.V_s * pm.K * c_e_scaled ** 2 / (c ** 2 + pm.K_s ** 2)
    J_IN = pm.alpha_0 + pm.alpha_1 * hill_minus(c_e_scaled, pm.K_e, 4)
    J_PM = pm.V_PM * c ** 2 / (c ** 2 + pm.K_PM ** 2)
    tau_h = pm.tau_max * hill_minus(c, pm.K_tau, 4)
    if formulation == "r1_scaled":
        eps = pm.K_tau ** 4
        J_SERCA_plus = J_SERCA_plus / pm.V_s
        J_SERCA_minus = J_SERCA_minus / eps
        J_IN = pm.delta * J_IN / eps
        J_PM = pm.delta * J_PM / eps
    return FluxValues(J_IPR=J_IPR, J_SERCA_plus=J_SERCA_plus,
                      J_SERCA_minus=J_SERCA_minus, J_IN=J_IN, J_PM=J_PM,
                      tau_h=tau_h, h_inf=h_inf, P_o=P_o, alpha=alpha,
                      beta=beta, phi_c=phi_c, phi_p=phi_p,
                      phi_pdown=phi_pdown)


def rhs_dimensional(state, pm: Parameters) -> np.ndarray:
    """Time derivative (dc/dt, dc_t/dt, dh/dt) in uM/s, uM/s, 1/s."""
    fl = eval_fluxes(state, pm, "dimensional")
    c, c_t, h = state
    membrane = pm.delta * (fl.J_IN - fl.J_PM)
    dc = fl.J_IPR - fl.J_SERCA_plus + fl.J_SERCA_minus + membrane
    dh = (fl.h_inf - h) / fl.tau_h
    return np.array([dc, membrane, dh])


def rhs_dimensionless(state, dp: DimensionlessParameters) -> np.ndarray:
    """Dimensionless right-hand side; h-equation multiplied out by tau_h."""
    fl = eval_fluxes(state, dp, "dimensionless")
    c, c_t, h = state
    membrane = dp.delta * (fl.J_IN - fl.J_PM)
    dc = fl.J_IPR - fl.J_SERCA_plus + fl.J_SERCA_minus + membrane
    dh = (fl.h_inf - h) * (c ** 4 + dp.K_tau ** 4) / (dp.K_tau ** 4 * dp.tau_max)
    return np.array([dc, membrane, dh])


def rhs_r1(state, dp: DimensionlessParameters, eps: float, nu: float) -> np.ndarray:
    """Scaled system of the c = O(1) regime with explicit (eps, nu).

    At eps = K_tau**4, nu = V_s this equals ``rhs_dimensionless`` exactly.
    eps = 0 and/or nu = 0 give the corresponding singular limits.
    """
    fl = eval_fluxes(state, dp, "r1_scaled")
    c, c_t, h = state
    slow = fl.J_IN - fl.J_PM
    dc = fl.J_IPR - nu * fl.J_SERCA_plus + eps * (fl.J_SERCA_minus + slow)
    dct = eps * slow
    dh = (fl.h_inf - h) * (c ** 4 + eps) / a1_coefficient(dp)
    return np.array([dc, dct, dh])


def singular_f_r2(C, c_t, h, dp: DimensionlessParameters, nu_tilde: float) -> float:
    """Leading-order fast vector field f(C, c_t, h, 0) of the c = O(varepsilon)
    regime (the varepsilon -> 0 limit of the C-equation of ``rhs_r2``)."""
    A = ipr_leading_coefficient(dp)
    B = serca_minus_leading_coefficient(dp)
    return (A * C ** 4 * c_t * h - nu_tilde * C ** 2 / dp.K_s ** 2
            + B * c_t ** 2 + inflow_leading(c_t, dp))


def ipr_leading_coefficient(dp: DimensionlessParameters) -> float:
    """Coefficient A of the leading-order IP3R flux A*C^4*c_t*h."""
    phi_p = hill(dp.p, dp.K_p, 2)
    return dp.gamma * dp.k_f * phi_p / (dp.k_beta * hill_minus(dp.p, dp.K_p, 2)
                                        * dp.K_c ** 4)


def serca_minus_leading_coefficient(dp: DimensionlessParameters) -> float:
    """Coefficient B of the leading-order scaled backward SERCA flux B*c_t**2."""
    return dp.V_s * dp.K * dp.gamma ** 2 / (dp.K_s ** 2 * dp.K_tau ** 4)


def inflow_leading(c_t, dp: DimensionlessParameters):
    """Leading-order scaled membrane inflow (independent of C)."""
    ahat0 = dp.delta * dp.alpha_0 / dp.K_tau ** 4
    ahat1 = dp.delta * dp.alpha_1 / dp.K_tau ** 4
    return ahat0 + ahat1 * hill_minus(dp.gamma * c_t, dp.K_e, 4)


def rhs_r2(state, dp: DimensionlessParameters, varepsilon: float,
           nu_tilde: float) -> np.ndarray:
    """Rescaled system of the c = O(varepsilon) regime, state = (C, c_t, h).

    For varepsilon > 0 this is the exact substitution c = varepsilon*C,
    nu = nu_tilde*varepsilon**2 into ``rhs_r1`` with time rescaled by
    varepsilon**3 -- no truncation.  For varepsilon = 0 it is the layer
    problem (C' = f(C, c_t, h, 0), c_t' = h' = 0).
    """
    C, c_t, h = state
    if C < 0:
        raise ValueError(f"rescaled calcium C must be nonnegative, got {C}")
    if varepsilon == 0.0:
        return np.array([singular_f_r2(C, c_t, h, dp, nu_tilde), 0.0, 0.0])
    d = rhs_r1((varepsilon * C, c_t, h), dp, varepsilon ** 4,
               nu_tilde * varepsilon ** 2)
    return np.array([d[0] / varepsilon ** 4, d[1] / varepsilon ** 3,
                     d[2] / varepsilon ** 3])


def make_rhs(pm, formulation: str = "dimensionless", eps: float | None = None,
             nu: float | None = None, varepsilon: float | None = None,
             nu_tilde: float | None = None):
    """Return a solve_ivp-style closure f(t, y) for the chosen formulation."""
    if formulation == "dimensional":
        return lambda t, y: rhs_dimensional(y, pm)
    if formulation == "dimensionless":
        return lambda t, y: rhs_dimensionless(y, pm)
    if formulation == "r1":
        return lambda t, y: rhs_r1(y, pm, eps, nu)
    if formulation == "r2":
        return lambda t, y: rhs_r2(y, pm, varepsilon, nu_tilde)
    raise ValueError(f"unknown formulation {formulation!r}")


def jacobian_full(state, pm, formulation: str = "dimensionless",
                  eps: float | None = None, nu: float | None = None) -> np.ndarray:
    """3x3 Jacobian of the chosen right-hand side by central differences
    with step 1e-6 * max(1, |x_i|)."""
    if formulation == "dimensional":
        f = lambda y: rhs_dimensional(y, pm)
    elif formulation == "dimensionless":
        f = lambda y: rhs_dimensionless(y, pm)
    elif formulation == "r1":
        f = lambda y: rhs_r1(y, pm, eps, nu)
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    y = np.asarray(state, dtype=float)
    J = np.empty((3, 3))
    for j in range(3):
        step = 1e-6 * max(1.0, abs(y[j]))
        yp = y.copy(); yp[j] += step
        ym = y.copy(); ym[j] -= step
        J[:, j] = (f(yp) - f(ym)) / (2.0 * step)
    return J


def rescale_state(state, varepsilon: float) -> np.ndarray:
    """(c, c_t, h) -> (C, c_t, h) with c = varepsilon*C."""
    c, c_t, h = state
    return np.array([c / varepsilon, c_t, h])


def unscale_state(state, varepsilon: float) -> np.ndarray:
    """(C, c_t, h) -> (c, c_t, h) with c = varepsilon*C."""
    C, c_t, h = state
    return np.array([varepsilon * C, c_t, h])
