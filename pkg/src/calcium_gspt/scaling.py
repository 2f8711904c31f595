"""Small-parameter identification and the polynomial scaling relation.

Starting from the dimensionless parameter set, this module extracts the
seven flux scale factors, scores every Hill-type switching function by its
maximum slope, identifies the candidate small parameters eps_1..eps_7 and
builds the polynomial scaling relation eps = a_i * eps_i**b_i around the
distinguished small parameter eps = K_tau**4.  The SERCA scale nu = V_s is
deliberately kept as an independent second parameter rather than being tied
to eps (the coupling a_2, b_2 is reported for information only), and
nu_tilde = nu/sqrt(eps) is the order-one combination used in the small-c
regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import DimensionlessParameters


@dataclass(frozen=True)
class SwitchScore:
    name: str
    K: float
    n: int
    score: float
    is_switch: bool
    borderline: bool


@dataclass(frozen=True)
class ScalingReport:
    scale_factors: dict        # seven named flux scale factors
    eps_candidates: dict       # eps_1 .. eps_7
    a: dict                    # a_1, a_3..a_7 (a_2 informational)
    b: dict                    # matching exponents
    epsilon: float             # distinguished small parameter K_tau**4
    nu: float                  # independent SERCA scale V_s
    nu_tilde: float            # nu / sqrt(epsilon)
    switch_scores: dict        # name -> SwitchScore
    a2_informational: float
    b2_informational: int

    def as_dict(self) -> dict:
        return {
            "scale_factors": dict(self.scale_factors),
            "eps_candidates": dict(self.eps_candidates),
            "a": dict(self.a),
            "b": dict(self.b),
            "epsilon": self.epsilon,
            "nu": self.nu,
            "nu_tilde": self.nu_tilde,
            "a2_informational": self.a2_informational,
            "b2_informational": self.b2_informational,
            "switch_scores": {
                k: {"K": s.K, "n": s.n, "score": s.score,
                    "is_switch": s.is_switch, "borderline": s.borderline}
                for k, s in self.switch_scores.items()},
        }


def scale_factors(dp: DimensionlessParameters) -> dict:
    """The seven leading flux coefficients of the dimensionless model."""
    return {
        "h_relaxation": 1.0 / dp.tau_max,
        "ipr": dp.gamma * dp.k_f,
        "serca_plus": dp.V_s,
        "serca_minus": dp.V_s * dp.K * dp.gamma ** 2 / dp.K_s ** 2,
        "inflow_base": dp.delta * dp.alpha_0,
        "inflow_gated": dp.delta * dp.alpha_1,
        "pm_extrusion": dp.delta * dp.V_PM,
    }


def candidate_small_parameters(dp: DimensionlessParameters) -> dict:
    """Candidate small parameters: the six small scale factors plus the
    switching threshold K_tau."""
    sf = scale_factors(dp)
    return {
        "eps_1": sf["h_relaxation"],
        "eps_2": sf["serca_plus"],
        "eps_3": sf["serca_minus"],
        "eps_4": sf["inflow_base"],
        "eps_5": sf["inflow_gated"],
        "eps_6": sf["pm_extrusion"],
        "eps_7": dp.K_tau,
    }


def hill_max_slope(K: float, n: int) -> float:
    """Maximum slope of a Hill function with threshold K and exponent n,
    attained at the half-activation point x = K; equals n/(4K)."""
    if not (K > 0 and n >= 1):
        raise ValueError("require K > 0 and n >= 1")
    return n / (4.0 * K)


def classify_switches(dp: DimensionlessParameters, threshold: float = 10.0) -> dict:
    """Score each Hill-type nonlinearity by its maximum slope.

    A function is a switch when its score strictly exceeds the threshold;
    a score exactly at the threshold is flagged borderline and conservatively
    not treated as a switch.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    spec = {
        "tau_h": (dp.K_tau, 4),
        "phi_c": (dp.K_c, 4),
        "h_inf": (dp.K_h, 4),
        "J_SERCA_plus": (dp.K_s, 2),
        "J_PM": (dp.K_PM, 2),
        "J_IN": (dp.K_e, 4),
    }
    out = {}
    for name, (K, n) in spec.items():
        score = hill_max_slope(K, n)
        borderline = np.isclose(score, threshold, rtol=1e-12)
        out[name] = SwitchScore(name=name, K=K, n=n, score=score,
                                is_switch=bool(score > threshold
                                               and not borderline),
                                borderline=bool(borderline))
    return out


def serca_minus_gradient_max(dp: DimensionlessParameters,
                             grid: int = 401) -> dict:
    """Maximize |grad| of the scale-normalized backward SERCA flux
    K_s**2*(c_t - c)**2 / (c**2 + K_s**2) over the triangle 0 <= c <= c_t <= 1.

    Uses a dense grid followed by local refinement.  The corner value
    |grad|(0, 1) = 2*sqrt(2) is reported separately; at the defaults the
    true maximum (~4.40) is attained slightly inside the edge c_t = 1,
    not at the corner.
    """
    Ks2 = dp.K_s ** 2

    def grad_norm(c, ct):
        denom = c ** 2 + Ks2
        dc = Ks2 * (-2 * (ct - c) * denom - (ct - c) ** 2 * 2 * c) / denom ** 2
        dct = Ks2 * 2 * (ct - c) / denom
        return np.hypot(dc, dct)

    c = np.linspace(0.0, 1.0, grid)
    ct = np.linspace(0.0, 1.0, grid)
    cc, tt = np.meshgrid(c, ct, indexing="ij")
    mask = cc <= tt
    vals = np.where(mask, grad_norm(cc, tt), -np.inf)
    k = np.unravel_index(np.argmax(vals), vals.shape)
    c0, t0 = cc[k], tt[k]
    # local refinement around the grid maximum
    span = 2.0 / (grid - 1)
    for _ in range(30):
        cl = np.clip(np.linspace(c0 - span, c0 + span, 11), 0.0, 1.0)
        tl = np.clip(np.linspace(t0 - span, t0 + span, 11), 0.0, 1.0)
        cc, tt = np.meshgrid(cl, tl, indexing="ij")
        vals = np.where(cc <= tt, grad_norm(cc, tt), -np.inf)
        k = np.unravel_index(np.argmax(vals), vals.shape)
        c0, t0 = cc[k], tt[k]
        span *= 0.5
    return {"max_value": float(grad_norm(c0, t0)),
            "argmax": (float(c0), float(t0)),
            "corner_value": float(grad_norm(0.0, 1.0)),
            "corner": (0.0, 1.0)}


def scaling_relation(dp: DimensionlessParameters) -> ScalingReport:
    """Build the full scaling report around eps = K_tau**4."""
    eps_c = candidate_small_parameters(dp)
    epsilon = dp.K_tau ** 4
    b = {"b_1": 1, "b_3": 1, "b_4": 1, "b_5": 1, "b_6": 1, "b_7": 4}
    a = {}
    for i in (1, 3, 4, 5, 6, 7):
        bi = b[f"b_{i}"]
        a[f"a_{i}"] = epsilon / eps_c[f"eps_{i}"] ** bi
    for key, val in a.items():
        if not (0.01 <= val <= 100.0):
            import warnings
            warnings.warn(f"scaling coefficient {key} = {val:.3g} is not of "
                          "numerical order one")
    nu = eps_c["eps_2"]
    return ScalingReport(
        scale_factors=scale_factors(dp),
        eps_candidates=eps_c,
        a=a, b=b,
        epsilon=epsilon,
        nu=nu,
        nu_tilde=nu / np.sqrt(epsilon),
        switch_scores=classify_switches(dp),
        a2_informational=epsilon / eps_c["eps_2"] ** 2,
        b2_informational=2,
    )
