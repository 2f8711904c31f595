"""Singular-limit analysis of the c = O(varepsilon) regime.

In the rescaled variable C = c/varepsilon the layer problem has the
two-dimensional critical manifold S3 written as a graph h = varphi(C, c_t).
This module provides the closed-form graph, the non-trivial layer eigenvalue
lambda, the fold curve C = fold_C(c_t) with its transversality and
nondegeneracy data, the desingularized reduced flow on S3 and a scan for
folded singularities (equilibria of the desingularized flow on the fold).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .model import (a1_coefficient, hill_minus, inflow_leading,
                    ipr_leading_coefficient, serca_minus_leading_coefficient,
                    singular_f_r2)
from .params import DimensionlessParameters


class FoldedSingularityNotFound(RuntimeError):
    """No folded singularity exists in the scanned range."""


@dataclass(frozen=True)
class FoldPoint:
    c_t: float
    C_fold: float
    h_fold: float
    transversality: float   # df/dh on the fold (> 0 required)
    nondegeneracy: float    # d2f/dC2 on the fold (constant 4*nu_tilde/K_s**2)
    dfdct: float            # df/dc_t on the fold


@dataclass(frozen=True)
class S3Point:
    C: float
    c_t: float
    h: float
    sheet: str              # attracting | repelling | fold


def default_nu_tilde(dp: DimensionlessParameters) -> float:
    """The distinguished order-one combination nu/sqrt(eps) = V_s/K_tau**2."""
    return dp.V_s / dp.K_tau ** 2


def varphi(C, c_t, dp: DimensionlessParameters, nu_tilde: float | None = None):
    """Graph h = varphi(C, c_t) of the critical manifold S3."""
    if np.any(np.asarray(C) <= 0) or np.any(np.asarray(c_t) <= 0):
        raise ValueError("varphi requires C > 0 and c_t > 0")
    nt = default_nu_tilde(dp) if nu_tilde is None else nu_tilde
    A = ipr_leading_coefficient(dp)
    B = serca_minus_leading_coefficient(dp)
    num = nt * C ** 2 / dp.K_s ** 2 - B * c_t ** 2 - inflow_leading(c_t, dp)
    return num / (A * C ** 4 * c_t)


def lambda_r2(C, c_t, dp: DimensionlessParameters, nu_tilde: float | None = None):
    """Non-trivial eigenvalue of the layer linearization on S3
    (equals df/dC evaluated at h = varphi)."""
    nt = default_nu_tilde(dp) if nu_tilde is None else nu_tilde
    B = serca_minus_leading_coefficient(dp)
    return (2.0 / C) * (nt * C ** 2 / dp.K_s ** 2
                        - 2.0 * (B * c_t ** 2 + inflow_leading(c_t, dp)))


def fold_C(c_t, dp: DimensionlessParameters, nu_tilde: float | None = None):
    """Fold curve C = fold_C(c_t) where the non-trivial eigenvalue vanishes."""
    nt = default_nu_tilde(dp) if nu_tilde is None else nu_tilde
    B = serca_minus_leading_coefficient(dp)
    return np.sqrt(2.0 * dp.K_s ** 2 / nt
                   * (B * c_t ** 2 + inflow_leading(c_t, dp)))


def classify_sheet(C, c_t, dp, nu_tilde=None, tol=1e-12) -> str:
    lam = lambda_r2(C, c_t, dp, nu_tilde)
    if abs(lam) <= tol:
        return "fold"
    return "attracting" if lam < 0 else "repelling"


def s3_point(C, c_t, dp, nu_tilde=None) -> S3Point:
    return S3Point(C=float(C), c_t=float(c_t),
                   h=float(varphi(C, c_t, dp, nu_tilde)),
                   sheet=classify_sheet(C, c_t, dp, nu_tilde))


def dfdct_on_fold(c_t, dp: DimensionlessParameters, nu_tilde: float | None = None):
    """Closed-form df/dc_t along the fold curve:
    (1/c_t) * (3*B*c_t**2 + ahat0 + ahat1*K_e**4*(K_e**4 - 3*gamma**4*c_t**4)
               / (K_e**4 + gamma**4*c_t**4)**2)."""
    B = serca_minus_leading_coefficient(dp)
    ahat0 = dp.delta * dp.alpha_0 / dp.K_tau ** 4
    ahat1 = dp.delta * dp.alpha_1 / dp.K_tau ** 4
    Ke4 = dp.K_e ** 4
    g4t4 = (dp.gamma * c_t) ** 4
    gated = ahat1 * Ke4 * (Ke4 - 3.0 * g4t4) / (Ke4 + g4t4) ** 2
    return (3.0 * B * c_t ** 2 + ahat0 + gated) / c_t


def dfdh_on_s3(C, c_t, dp):
    """df/dh = A*C**4*c_t (independent of h)."""
    return ipr_leading_coefficient(dp) * C ** 4 * c_t


def fold_curve(c_t_values, dp: DimensionlessParameters,
               nu_tilde: float | None = None) -> list[FoldPoint]:
    nt = default_nu_tilde(dp) if nu_tilde is None else nu_tilde
    nondeg = 4.0 * nt / dp.K_s ** 2
    pts = []
    for ct in np.atleast_1d(c_t_values):
        Cf = float(fold_C(ct, dp, nt))
        pts.append(FoldPoint(
            c_t=float(ct), C_fold=Cf,
            h_fold=float(varphi(Cf, ct, dp, nt)),
            transversality=float(dfdh_on_s3(Cf, ct, dp)),
            nondegeneracy=float(nondeg),
            dfdct=float(dfdct_on_fold(ct, dp, nt))))
    return pts


def folded_singularity_root(dp: DimensionlessParameters,
                            nu_tilde: float | None = None,
                            c_t_max: float = 5.0, n: int = 2000):
    """Smallest positive root of df/dc_t along the fold curve, i.e. the first
    folded singularity of the desingularized reduced flow on F.

    Raises FoldedSingularityNotFound when df/dc_t does not change sign on
    (0, c_t_max] (then the fold is regular throughout the range).
    """
    grid = np.logspace(-3, np.log10(c_t_max), n)
    vals = np.array([dfdct_on_fold(ct, dp, nu_tilde) for ct in grid])
    sign = np.sign(vals)
    idx = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    if idx.size == 0:
        raise FoldedSingularityNotFound(
            f"df/dc_t on the fold has no root on (0, {c_t_max}]; "
            f"minimum value {vals.min():.4g} at c_t = {grid[np.argmin(vals)]:.4g}")
    i = int(idx[0])
    return brentq(lambda ct: dfdct_on_fold(ct, dp, nu_tilde),
                  grid[i], grid[i + 1], xtol=1e-12)


def desing_reduced_rhs_r2(C, c_t, dp: DimensionlessParameters,
                          nu_tilde: float | None = None):
    """Desingularized reduced flow on S3 (phase-space variables (C, c_t)).

    The reduced flow projected onto S3 has a 1/lambda singularity at the fold;
    multiplying by -lambda removes it at the cost of reversing time on the
    repelling sheet:
        C'   = (df/dc_t)|_S3 * inflow + (df/dh)|_S3 * (1 - varphi) * C**4 / a1
        c_t' = -lambda * inflow
    """
    nt = default_nu_tilde(dp) if nu_tilde is None else nu_tilde
    A = ipr_leading_coefficient(dp)
    B = serca_minus_leading_coefficient(dp)
    vp = varphi(C, c_t, dp, nt)
    jin = inflow_leading(c_t, dp)
    ahat1 = dp.delta * dp.alpha_1 / dp.K_tau ** 4
    Ke4 = dp.K_e ** 4
    g4t3 = dp.gamma ** 4 * c_t ** 3
    jin_prime = -4.0 * ahat1 * Ke4 * g4t3 / (Ke4 + dp.gamma ** 4 * c_t ** 4) ** 2
    dfdct_s3 = A * C ** 4 * vp + 2.0 * B * c_t + jin_prime
    dfdh_s3 = A * C ** 4 * c_t
    dC = dfdct_s3 * jin + dfdh_s3 * (1.0 - vp) * C ** 4 / a1_coefficient(dp)
    dct = -lambda_r2(C, c_t, dp, nt) * jin
    return np.array([dC, dct])


def reduced_flow_r2(initial, dp: DimensionlessParameters,
                    nu_tilde: float | None = None, t_max: float = 1e4,
                    rtol: float = 1e-10, atol: float = 1e-12) -> dict:
    """Integrate the desingularized reduced flow from a point on the
    attracting sheet until it reaches the fold curve (or t_max).

    Returns the polyline and a fold-arrival flag; the arrival point satisfies
    |C - fold_C(c_t)| <= 1e-8.
    """
    nt = default_nu_tilde(dp) if nu_tilde is None else nu_tilde
    C0, ct0 = initial
    if lambda_r2(C0, ct0, dp, nt) >= 0:
        raise ValueError("initial point is not on the attracting sheet")
    def arrive(t, y):
        return y[0] - float(fold_C(y[1], dp, nt))
    arrive.terminal = True
    arrive.direction = 1.0
    sol = solve_ivp(lambda t, y: desing_reduced_rhs_r2(y[0], y[1], dp, nt),
                    (0.0, t_max), [C0, ct0], method="LSODA",
                    rtol=rtol, atol=atol, events=arrive)
    reached = len(sol.t_events[0]) > 0
    end = sol.y_events[0][0] if reached else sol.y[:, -1]
    residual = abs(end[0] - float(fold_C(end[1], dp, nt))) if reached else np.nan
    return {"polyline": sol.y, "times": sol.t, "reached_fold": reached,
            "end": end, "fold_residual": residual}


def singular_layer_f(C, c_t, h, dp, nu_tilde=None):
    """Convenience wrapper for the leading-order fast vector field."""
    nt = default_nu_tilde(dp) if nu_tilde is None else nu_tilde
    return singular_f_r2(C, c_t, h, dp, nt)
