"""Singular-limit analysis of the c = O(1) regime.

The layer problem at eps = 0 freezes c_t and leaves a planar fast subsystem
in (c, h).  Its equilibria form the one-dimensional critical manifold S1,
written as a graph c_t = psi(c), h = h_inf(c).  This module evaluates psi,
the layer Jacobian trace/determinant (sigma, Delta) in closed form, locates
the fold, Hopf and homoclinic landmarks of the layer problem, evaluates the
reduced (slow) flow on S1 and its equilibrium c_*, and provides layer
phase-portrait utilities (saddle manifolds, unstable limit cycles).

The plane {c = 0} is a degenerate critical manifold: every point of it is a
layer equilibrium with a triple zero eigenvalue, and the reduced flow on it
vanishes identically; helpers verifying this are included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .model import (a1_coefficient, eval_fluxes, hill, hill_minus,
                    open_probability)
from .params import DimensionlessParameters


class LandmarkMissingError(RuntimeError):
    """A requested bifurcation landmark could not be bracketed."""


@dataclass(frozen=True)
class S1Point:
    c: float
    c_t: float
    h: float
    branch: str           # attracting | repelling | saddle | fold | hopf
    sigma: float
    delta: float
    lambda_plus: complex
    lambda_minus: complex


@dataclass(frozen=True)
class R1Landmarks:
    c_f: float            # fold of S1 (Delta = 0)
    c_h: float            # Hopf of the layer problem (sigma = 0)
    c_s: float            # saddle c at the homoclinic connection
    c_star: float         # equilibrium of the reduced flow (root of G)
    ct_f: float           # psi(c_f)
    ct_h: float           # psi(c_h)
    ct_hom: float         # c_t of the layer homoclinic bifurcation
    ct_star: float        # psi(c_star)
    G_prime_at_star: float  # d(J_IN - J_PM)/dc on S1 at c_*, dimensional units


def _default_nu(dp: DimensionlessParameters, nu):
    return dp.V_s if nu is None else nu


def psi(c, dp: DimensionlessParameters, nu: float | None = None):
    """The graph c_t = psi(c) of the critical manifold S1."""
    nu = _default_nu(dp, nu)
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise ValueError("psi requires c > 0 (open probability vanishes at 0)")
    h = hill_minus(c, dp.K_h, 4)
    P_o = open_probability(c, h, dp)[0]
    serca = c ** 2 / (c ** 2 + dp.K_s ** 2)
    return (1.0 + 1.0 / dp.gamma) * c + nu * serca / (dp.gamma * dp.k_f * P_o)


def layer_rhs_r1(state, dp: DimensionlessParameters, nu: float | None = None):
    """Layer problem of the c = O(1) regime: (c' , 0 , h') with c_t frozen."""
    nu = _default_nu(dp, nu)
    fl = eval_fluxes(state, dp, "r1_scaled")
    c, c_t, h = state
    return np.array([fl.J_IPR - nu * fl.J_SERCA_plus, 0.0,
                     (fl.h_inf - h) * c ** 4 / a1_coefficient(dp)])


def _layer_partials(c, c_t, h, dp, nu):
    """Closed-form partial derivatives of the fast c-equation
    F1 = J_IPR - nu*scaled_J_SERCA_plus with respect to c and h."""
    Kc4, Kh4, Ks2 = dp.K_c ** 4, dp.K_h ** 4, dp.K_s ** 2
    phi_c = hill(c, dp.K_c, 4)
    phi_p = hill(dp.p, dp.K_p, 2)
    phi_pd = hill_minus(dp.p, dp.K_p, 2)
    h_inf = hill_minus(c, dp.K_h, 4)
    beta = phi_c * phi_p * h
    alpha = phi_pd * (1.0 - phi_c * h_inf)
    D = (1.0 + dp.k_beta) * beta + dp.k_beta * alpha
    P_o = beta / D
    dphic = 4.0 * Kc4 * c ** 3 / (c ** 4 + Kc4) ** 2
    dhinf = -4.0 * Kh4 * c ** 3 / (c ** 4 + Kh4) ** 2
    dPo_dbeta = dp.k_beta * alpha / D ** 2
    dPo_dalpha = -beta * dp.k_beta / D ** 2
    dbeta_dc = dphic * phi_p * h
    dalpha_dc = -phi_pd * (dphic * h_inf + phi_c * dhinf)
    dPo_dc = dPo_dbeta * dbeta_dc + dPo_dalpha * dalpha_dc
    dPo_dh = dPo_dbeta * phi_c * phi_p
    gk = dp.gamma * dp.k_f
    release = c_t - (1.0 + 1.0 / dp.gamma) * c
    dserca = 2.0 * c * Ks2 / (c ** 2 + Ks2) ** 2
    F1c = gk * (dPo_dc * release - P_o * (1.0 + 1.0 / dp.gamma)) - nu * dserca
    F1h = gk * dPo_dh * release
    return F1c, F1h, dhinf


def layer_jacobian_s1(c, dp: DimensionlessParameters, nu: float | None = None) -> dict:
    """Layer Jacobian data on S1 at the point (c, psi(c), h_inf(c)).

    Returns the 2x2 (c, h) Jacobian, its trace sigma and determinant Delta
    (closed forms) and the eigenvalues lambda_pm.
    """
    nu = _default_nu(dp, nu)
    c_t = float(psi(c, dp, nu))
    h = hill_minus(c, dp.K_h, 4)
    F1c, F1h, dhinf = _layer_partials(c, c_t, h, dp, nu)
    a1 = a1_coefficient(dp)
    F3c = dhinf * c ** 4 / a1        # (h_inf - h) term vanishes on S1
    F3h = -c ** 4 / a1
    sigma = F1c + F3h
    delta = F1c * F3h - F1h * F3c
    disc = sigma * sigma - 4.0 * delta
    root = np.sqrt(complex(disc))
    lam_p = 0.5 * (sigma + root)
    lam_m = 0.5 * (sigma - root)
    return {"matrix": np.array([[F1c, F1h], [F3c, F3h]]),
            "sigma": float(sigma), "delta": float(delta),
            "lambda_plus": lam_p, "lambda_minus": lam_m}


def classify_branch(c, dp, nu=None) -> str:
    jd = layer_jacobian_s1(c, dp, nu)
    if jd["delta"] < 0:
        return "saddle"
    if jd["sigma"] < 0:
        return "attracting"
    return "repelling"


def sample_s1(c_values, dp, nu=None) -> list[S1Point]:
    pts = []
    for c in np.atleast_1d(c_values):
        jd = layer_jacobian_s1(c, dp, nu)
        pts.append(S1Point(c=float(c), c_t=float(psi(c, dp, nu)),
                           h=float(hill_minus(c, dp.K_h, 4)),
                           branch=classify_branch(c, dp, nu),
                           sigma=jd["sigma"], delta=jd["delta"],
                           lambda_plus=jd["lambda_plus"],
                           lambda_minus=jd["lambda_minus"]))
    return pts


def _scan_roots(fun, lo=1e-3, hi=1.0, n=2000):
    """Bracket roots of fun on a log-spaced grid and refine with brentq."""
    grid = np.logspace(np.log10(lo), np.log10(hi), n)
    vals = np.array([fun(x) for x in grid])
    roots = []
    for i in range(n - 1):
        if np.isfinite(vals[i]) and np.isfinite(vals[i + 1]):
            if vals[i] == 0.0:
                roots.append(grid[i])
            elif vals[i] * vals[i + 1] < 0:
                roots.append(brentq(fun, grid[i], grid[i + 1], xtol=1e-14))
    return roots


def scaled_membrane_fluxes(c, c_t, dp):
    """(inflow, extrusion) membrane fluxes in the order-one scaling."""
    fl = eval_fluxes((c, c_t, 0.5), dp, "r1_scaled")
    return fl.J_IN, fl.J_PM


def reduced_G(c, dp: DimensionlessParameters, nu: float | None = None):
    """Slow drift G(c) = (scaled_J_IN - scaled_J_PM) evaluated on S1."""
    jin, jpm = scaled_membrane_fluxes(c, float(psi(c, dp, nu)), dp)
    return jin - jpm


def reduced_rhs_r1(c, dp: DimensionlessParameters, nu: float | None = None):
    """Reduced flow on S1 obtained by projecting the slow dynamics:
    c' = gk * c**4 * P_o * G(c) / (a1 * Delta(c)).

    Shares its zeros with G; the sign flips relative to G where Delta < 0
    (time reversal on the saddle branch).  Singular at the fold Delta = 0.
    """
    jd = layer_jacobian_s1(c, dp, nu)
    if jd["delta"] == 0.0:
        raise ZeroDivisionError("reduced flow is singular at the fold c_f")
    h = hill_minus(c, dp.K_h, 4)
    P_o = open_probability(c, h, dp)[0]
    gk = dp.gamma * dp.k_f
    return (gk * c ** 4 * P_o * reduced_G(c, dp, nu)
            / (a1_coefficient(dp) * jd["delta"]))


def c0_upper_bound(dp: DimensionlessParameters) -> float:
    """Upper bound c_0 for the reduced equilibrium: the c at which the
    extrusion flux matches the maximal inflow."""
    num = dp.alpha_0 + dp.alpha_1
    den = dp.V_PM - num
    if den <= 0:
        raise LandmarkMissingError(
            "extrusion never exceeds maximal inflow; no upper bound c_0")
    return dp.K_PM * np.sqrt(num / den)


def dimensional_G_prime(c_star, dp, nu=None, step=1e-7) -> float:
    """Slope d(J_IN - J_PM)/dc along S1 at c_star, in dimensional flux units
    (uM/s per uM): the scaled-G slope times K_tau**4/(delta*T)."""
    g = lambda c: reduced_G(c, dp, nu)
    slope = (g(c_star + step) - g(c_star - step)) / (2.0 * step)
    return slope * dp.K_tau ** 4 / (dp.delta * dp.T)


# ---------------------------------------------------------------------------
# Layer phase portraits and the homoclinic bifurcation


def layer_equilibria(c_t, dp, nu=None) -> list[float]:
    """c-values of the layer equilibria in the slice c_t = const
    (roots of psi(c) = c_t)."""
    return _scan_roots(lambda c: float(psi(c, dp, nu)) - c_t)


def _layer2d(dp, nu):
    a1 = a1_coefficient(dp)
    def rhs(t, y, c_t):
        c, h = y
        fl = eval_fluxes((c, c_t, h), dp, "r1_scaled")
        return [fl.J_IPR - nu * fl.J_SERCA_plus,
                (fl.h_inf - h) * c ** 4 / a1]
    return rhs


def _jac2d(c, c_t, h, dp, nu):
    F1c, F1h, dhinf = _layer_partials(c, c_t, h, dp, nu)
    a1 = a1_coefficient(dp)
    h_inf = hill_minus(c, dp.K_h, 4)
    F3c = (dhinf * c ** 4 + (h_inf - h) * 4 * c ** 3) / a1
    F3h = -c ** 4 / a1
    return np.array([[F1c, F1h], [F3c, F3h]])


@dataclass
class LayerPortrait:
    c_t: float
    equilibria: list            # (c, h, eigenvalues, kind)
    saddle_manifolds: list      # list of (label, polyline array (2, n))
    cycle: dict | None          # {"period", "states"} if an unstable cycle exists


def layer_phase_portrait(c_t, dp, nu=None, t_manifold=400.0) -> LayerPortrait:
    """Equilibria, saddle separatrices and (if present) the unstable limit
    cycle of the planar layer problem in the slice c_t = const."""
    nu = _default_nu(dp, nu)
    roots = layer_equilibria(c_t, dp, nu)
    if not roots:
        raise LandmarkMissingError(f"no layer equilibria in slice c_t = {c_t}")
    rhs = _layer2d(dp, nu)
    eqs = []
    for c in roots:
        h = float(hill_minus(c, dp.K_h, 4))
        ev = np.linalg.eigvals(_jac2d(c, c_t, h, dp, nu))
        if np.isrealobj(ev) and ev[0] * ev[1] < 0:
            kind = "saddle"
        elif max(ev.real) < 0:
            kind = "stable"
        else:
            kind = "unstable"
        eqs.append((c, h, ev, kind))
    manifolds = []
    saddles = [e for e in eqs if e[3] == "saddle"]
    for c, h, ev, _ in saddles:
        J = _jac2d(c, c_t, h, dp, nu)
        w, V = np.linalg.eig(J)
        for lam, vec, label in ((w[0], V[:, 0], ""), (w[1], V[:, 1], "")):
            lam = lam.real
            vec = vec.real / np.linalg.norm(vec.real)
            unstable = lam > 0
            name = "unstable" if unstable else "stable"
            for s in (+1.0, -1.0):
                y0 = np.array([c, h]) + s * 1e-6 * vec
                sol = solve_ivp(rhs, (0.0, t_manifold if unstable else -t_manifold),
                                y0, args=(c_t,), method="LSODA",
                                rtol=1e-10, atol=1e-12, dense_output=False)
                manifolds.append((f"{name}{'+' if s > 0 else '-'}", sol.y))
    cycle = _unstable_cycle(c_t, dp, nu, eqs)
    return LayerPortrait(c_t=c_t, equilibria=eqs, saddle_manifolds=manifolds,
                         cycle=cycle)


def _unstable_cycle(c_t, dp, nu, eqs, t_back=3e4):
    """Detect an unstable limit cycle by a backward-time return map started
    near the focus equilibrium (the cycle attracts in reversed time)."""
    foci = [e for e in eqs if e[3] == "stable"]
    if not foci:
        return None
    c0, h0 = foci[0][0], foci[0][1]
    rhs = _layer2d(dp, nu)
    back = lambda t, y, ct: [-v for v in rhs(t, y, ct)]
    def section(t, y, ct):
        return y[1] - h0
    section.terminal = False
    section.direction = 1.0
    def escape(t, y, ct):
        # stop before a backward-escaping orbit blows up
        return 2.0 - abs(y[0]) - abs(y[1])
    escape.terminal = True
    escape.direction = -1.0
    try:
        sol = solve_ivp(back, (0.0, t_back), [c0 * 1.01, h0], args=(c_t,),
                        method="LSODA", rtol=1e-10, atol=1e-13,
                        events=[section, escape])
    except ValueError:     # event location failed on a diverging segment
        return None
    tc, yc = sol.t_events[0], sol.y_events[0]
    if len(tc) < 3:
        return None
    if abs(yc[-1][0]) > 1.5 or not np.all(np.isfinite(yc[-1])):
        return None
    conv = abs(yc[-1][0] - yc[-2][0])
    if conv > 1e-7:
        return None
    radius = abs(yc[-1][0] - c0)
    if radius < 1e-4:      # collapsed onto the equilibrium: no cycle
        return None
    period = float(tc[-1] - tc[-2])
    return {"period": period, "anchor": (float(yc[-1][0]), float(yc[-1][1])),
            "convergence": float(conv)}


def homoclinic_separation(c_t, dp, nu=None, t_max=4e3):
    """Signed distance between the saddle's returning unstable manifold and
    its stable manifold, measured as the h-difference on the vertical section
    c = c_saddle.  Positive when the manifold spirals into the focus without
    returning; changes sign at the homoclinic connection."""
    nu = _default_nu(dp, nu)
    roots = layer_equilibria(c_t, dp, nu)
    saddles = [c for c in roots
               if layer_jacobian_s1(c, dp, nu)["delta"] < 0]
    if not saddles:
        raise LandmarkMissingError(f"no saddle in slice c_t = {c_t}")
    cs = saddles[0]
    hs = float(hill_minus(cs, dp.K_h, 4))
    J = _jac2d(cs, c_t, hs, dp, nu)
    w, V = np.linalg.eig(J)
    k = int(np.argmax(w.real))
    vec = V[:, k].real
    vec /= np.linalg.norm(vec)
    if vec[0] < 0:
        vec = -vec                     # branch leaving toward larger c
    rhs = _layer2d(dp, nu)
    def ret(t, y, ct):
        return y[0] - cs
    ret.terminal = True
    ret.direction = -1.0
    y0 = np.array([cs, hs]) + 1e-6 * vec
    sol = solve_ivp(rhs, (0.0, t_max), y0, args=(c_t,), method="LSODA",
                    rtol=1e-11, atol=1e-13, events=ret)
    if len(sol.t_events[0]):
        return float(sol.y_events[0][0][1] - hs)
    return 1.0     # no return: the manifold is captured by the focus


def homoclinic_locator(dp, nu=None, bracket=None, xtol=1e-6) -> dict:
    """Bisect the homoclinic c_t of the layer problem; returns the connection
    level ct_hom and the saddle coordinate c_s there."""
    nu = _default_nu(dp, nu)
    if bracket is None:
        c_h = _sigma_root(dp, nu)
        bracket = (float(psi(c_h, dp, nu)) + 0.01, 0.6)
    lo, hi = bracket
    flo = homoclinic_separation(lo, dp, nu)
    fhi = homoclinic_separation(hi, dp, nu)
    if flo * fhi > 0:
        raise LandmarkMissingError(
            f"homoclinic separation does not change sign on {bracket}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < xtol:
            break
        fm = homoclinic_separation(mid, dp, nu)
        if fm == 0.0:
            break
        if flo * fm < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    ct_hom = 0.5 * (lo + hi)
    saddles = [c for c in layer_equilibria(ct_hom, dp, nu)
               if layer_jacobian_s1(c, dp, nu)["delta"] < 0]
    return {"ct_hom": float(ct_hom), "c_s": float(saddles[0])}


def _sigma_root(dp, nu):
    roots = _scan_roots(lambda c: layer_jacobian_s1(c, dp, nu)["sigma"])
    if not roots:
        raise LandmarkMissingError("no root of sigma (layer Hopf) on (1e-3, 1)")
    return roots[-1]


def locate_landmarks(dp: DimensionlessParameters,
                     nu: float | None = None) -> R1Landmarks:
    """Locate all landmark points of the R1 singular-limit analysis."""
    nu = _default_nu(dp, nu)
    c_h = _sigma_root(dp, nu)
    delta_roots = [c for c in
                   _scan_roots(lambda c: layer_jacobian_s1(c, dp, nu)["delta"])
                   if c < c_h]
    if not delta_roots:
        raise LandmarkMissingError("no root of Delta (fold of S1) below c_h")
    c_f = delta_roots[-1]
    g_roots = _scan_roots(lambda c: reduced_G(c, dp, nu),
                          hi=min(1.0, c0_upper_bound(dp) + 1e-9))
    if not g_roots:
        raise LandmarkMissingError("no root of the reduced drift G on (0, c_0]")
    c_star = g_roots[0]
    hom = homoclinic_locator(dp, nu)
    return R1Landmarks(
        c_f=float(c_f), c_h=float(c_h), c_s=hom["c_s"], c_star=float(c_star),
        ct_f=float(psi(c_f, dp, nu)), ct_h=float(psi(c_h, dp, nu)),
        ct_hom=hom["ct_hom"], ct_star=float(psi(c_star, dp, nu)),
        G_prime_at_star=float(dimensional_G_prime(c_star, dp, nu)))
