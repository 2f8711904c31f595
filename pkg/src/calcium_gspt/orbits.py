"""Global full-system experiments: transition maps, spike decomposition,
equilibrium continuation and amplitude scans.

The two transition maps realize the Poincare-section picture of the
broad-spike mechanism: pi_R1 follows orbits through the plateau regime
(entry and exit on {c = chi}) and contracts them onto the c_t-level
psi(c_*) set by the delayed loss of stability; pi_R2 follows orbits
through the small-c regime in the rescaled variable C and contracts them
onto the fold-projection curve, with an O(eps^(2/3)) spread inherited from
the passage past the regular fold.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import r1, r2
from .integrate import (IntegratorConfig, NoAttractorError, OrbitSummary,
                        SectionSpec, find_periodic_attractor)
from .model import jacobian_full, make_rhs, rhs_dimensionless, rhs_r2
from .params import DimensionlessParameters


def worker_count() -> int:
    """Worker cap from the CALCIUM_GSPT_THREADS environment variable."""
    try:
        n = int(os.environ.get("CALCIUM_GSPT_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


@dataclass
class TransitionMapResult:
    section_in: SectionSpec
    section_out: SectionSpec
    images: list                  # (entry state, exit state, flight time)
    out_of_contract: list         # entry states rejected by the preconditions
    concentration_curve: dict     # description + reference values
    spread: float


@dataclass
class SpikeDecomposition:
    phase_intervals: dict         # name -> (t_start, t_end), times in [0, T)
    period: float
    max_c: float
    min_c: float
    spike_class: str | None      # "narrow" | "broad" | None
    plateau_fraction: float
    ct_rise_onset: float | None
    ct_fall_onset: float | None
    fold_projection_ct: float | None   # c_t where the orbit meets c = eps*fold_C(c_t)
    diagnostics: dict = field(default_factory=dict)


@dataclass
class BifurcationDiagram:
    branch_p: np.ndarray
    branch_states: np.ndarray     # shape (3, n)
    branch_stable: np.ndarray     # bool
    branch_eigenvalues: np.ndarray  # shape (3, n), complex
    hopf_points: list             # p-values
    hopf_brackets: list           # (p_lo, p_hi) of width <= 1e-5
    amplitude_scan: list          # dict per p
    gaps: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Transition maps


def transition_map_r1(ct_values, dp: DimensionlessParameters, chi: float = 0.05,
                      h_entry: float = 0.8, nu: float | None = None,
                      config: IntegratorConfig | None = None,
                      landmarks: r1.R1Landmarks | None = None) -> TransitionMapResult:
    """Map entry points on {c = chi} (spike onset, c rising) through the
    plateau regime to the downward return crossing of {c = chi}.

    Entry points must lie above the homoclinic c_t level; exits concentrate
    near c_t = psi(c_*) because the delayed loss of stability of the plateau
    branch releases all orbits near the same c_t.
    """
    if config is None:
        config = IntegratorConfig(rtol=1e-10, atol=1e-13, t_max=2e6)
    if landmarks is None:
        landmarks = r1.locate_landmarks(dp, nu)
    rhs = make_rhs(dp, "dimensionless")
    target = landmarks.ct_star
    images, rejected = [], []
    plateau_fracs = []
    for ct0 in np.atleast_1d(ct_values):
        entry = np.array([chi, float(ct0), h_entry])
        if ct0 <= landmarks.ct_hom or rhs(0.0, entry)[0] <= 0:
            rejected.append(entry)
            continue
        def down(t, y):
            return y[0] - chi
        down.terminal = True
        down.direction = -1.0
        sol = solve_ivp(rhs, (0.0, config.t_max), entry,
                        method=config.scipy_method, rtol=config.rtol,
                        atol=config.atol, events=down, dense_output=True)
        if not len(sol.t_events[0]):
            rejected.append(entry)
            continue
        t_exit = float(sol.t_events[0][0])
        exit_state = sol.y_events[0][0]
        # fraction of the flight spent tracking S1 (plateau proximity)
        ts = np.linspace(0.0, t_exit, 2000)
        ys = sol.sol(ts)
        ok = ys[0] > 1e-3
        dist = np.abs(ys[1, ok] - r1.psi(ys[0, ok], dp, nu))
        plateau_fracs.append(float(np.count_nonzero(dist < 0.02) / len(ts)))
        images.append((entry, exit_state, t_exit))
    exits_ct = np.array([im[1][1] for im in images]) if images else np.array([])
    spread = float(np.max(np.abs(exits_ct - target))) if images else np.nan
    return TransitionMapResult(
        section_in=SectionSpec("c", chi, +1),
        section_out=SectionSpec("c", chi, -1),
        images=images, out_of_contract=rejected,
        concentration_curve={"kind": "Gamma1", "ct_level": target,
                             "plateau_fractions": plateau_fracs},
        spread=spread)


def entry_h_threshold_r2(C_section, ct0, dp, varepsilon, nu_tilde) -> float | None:
    """Largest h at which the orbit still enters the small-c regime
    (C decreasing) at the section; None if it never enters."""
    f = lambda h: rhs_r2((C_section, ct0, h), dp, varepsilon, nu_tilde)[0]
    if f(1e-8) >= 0:
        return None
    if f(1.0) <= 0:
        return 1.0
    return brentq(f, 1e-8, 1.0, xtol=1e-14)


def transition_map_r2(ct_values, dp: DimensionlessParameters,
                      varepsilon: float | None = None,
                      nu_tilde: float | None = None,
                      C_section: float = 2.0,
                      h_fractions=(0.2, 0.5, 0.8),
                      config: IntegratorConfig | None = None) -> TransitionMapResult:
    """Map entry points on {C = C_section} (descending into the small-c
    regime) to the upward return crossing after the jump at the fold curve.

    The section is fixed in the rescaled variable C, between the fold curve
    (C ~ 1) and the plateau branch, so that the experiment stays inside the
    small-c regime for every varepsilon in the scaling study.  Entry h values
    are placed below the entering threshold so every grid point is
    in-contract by construction.
    """
    if varepsilon is None:
        varepsilon = dp.K_tau
    nt = r2.default_nu_tilde(dp) if nu_tilde is None else nu_tilde
    if config is None:
        config = IntegratorConfig(rtol=1e-10, atol=1e-12, t_max=600.0)
    rhs = lambda t, y: rhs_r2(y, dp, varepsilon, nt)
    images, rejected = [], []
    for ct0 in np.atleast_1d(ct_values):
        hmax = entry_h_threshold_r2(C_section, float(ct0), dp, varepsilon, nt)
        if hmax is None:
            rejected.append(np.array([C_section, float(ct0), np.nan]))
            continue
        for frac in h_fractions:
            entry = np.array([C_section, float(ct0), frac * hmax])
            res = _pi_r2_flight(entry, dp, varepsilon, nt, C_section, config)
            if res is None:
                rejected.append(entry)
            else:
                images.append((entry, res[0], res[1]))
    spread = _gamma2_spread(images, dp, nt)
    return TransitionMapResult(
        section_in=SectionSpec("C", C_section, -1),
        section_out=SectionSpec("C", C_section, +1),
        images=images, out_of_contract=rejected,
        concentration_curve={"kind": "Gamma2",
                             "description": "h = varphi(fold_C(c_t), c_t)"},
        spread=spread)


def _pi_r2_flight(entry, dp, varepsilon, nt, C_section, config):
    """One pi_R2 flight: descend below the fold region, then run to the
    upward crossing of the section.  Returns (exit_state, flight_time)."""
    rhs = lambda t, y: rhs_r2(y, dp, varepsilon, nt)
    def armed(t, y):
        return y[0] - 0.8 * float(r2.fold_C(y[1], dp, nt))
    armed.terminal = True
    armed.direction = -1.0
    s1 = solve_ivp(rhs, (0.0, config.t_max), entry, method=config.scipy_method,
                   rtol=config.rtol, atol=config.atol, events=armed)
    if not len(s1.t_events[0]):
        return None
    def out(t, y):
        return y[0] - C_section
    out.terminal = True
    out.direction = 1.0
    s2 = solve_ivp(rhs, (s1.t[-1], s1.t[-1] + config.t_max), s1.y[:, -1],
                   method=config.scipy_method, rtol=config.rtol,
                   atol=config.atol, events=out)
    if not len(s2.t_events[0]):
        return None
    return s2.y_events[0][0], float(s2.t_events[0][0])


def _gamma2_spread(images, dp, nt) -> float:
    if not images:
        return np.nan
    dists = []
    for _, exit_state, _ in images:
        _, ct, h = exit_state
        href = float(r2.varphi(float(r2.fold_C(ct, dp, nt)), ct, dp, nt))
        dists.append(abs(h - href))
    return float(np.max(dists))


def fold_passage_scaling(dp: DimensionlessParameters, varepsilons=None,
                         ct_values=None, **kwargs) -> dict:
    """Exit-spread scaling of pi_R2: log-log fit of spread vs varepsilon.

    The passage past a regular fold contracts incoming orbits onto the fold
    projection up to an O(varepsilon^(2/3)) spread, so the fitted slope
    should be near 2/3.
    """
    if varepsilons is None:
        varepsilons = (dp.K_tau, dp.K_tau / 2.0, dp.K_tau / 4.0)
    if ct_values is None:
        ct_values = np.linspace(0.34, 0.42, 4)
    spreads = []
    results = {}
    for eps in varepsilons:
        res = transition_map_r2(ct_values, dp, varepsilon=eps, **kwargs)
        results[eps] = res
        spreads.append(res.spread)
    x = np.log(np.asarray(varepsilons, dtype=float))
    y = np.log(np.asarray(spreads))
    slope = float(np.polyfit(x, y, 1)[0])
    return {"varepsilons": tuple(varepsilons), "spreads": spreads,
            "slope": slope, "maps": results}


# ---------------------------------------------------------------------------
# Spike decomposition


def _segments(mask):
    """Contiguous True runs of a boolean array as (start, stop) index pairs."""
    idx = np.flatnonzero(np.diff(mask.astype(int)))
    bounds = np.concatenate(([0], idx + 1, [len(mask)]))
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)
            if mask[bounds[i]]]


def decompose_spike(orbit: OrbitSummary, dp: DimensionlessParameters,
                    landmarks: r1.R1Landmarks | None = None,
                    fast_factor: float = 10.0,
                    broad_threshold: float = 0.05) -> SpikeDecomposition:
    """Split one period of a periodic orbit into the four oscillation phases.

    Fast phases are where |dc/dt| exceeds ``fast_factor`` times its median
    over the period; the slow phase after the fast rise is the plateau, the
    slow phase after the fast fall is the inactive phase.  The orbit is broad
    when the plateau occupies more than ``broad_threshold`` of the period.
    """
    ts, ys = orbit.times, orbit.states
    T = orbit.period
    # rotate the cycle to start at the c-minimum (inside the inactive phase)
    # so the fast rise and fall are not split across the window boundary
    k0 = int(np.argmin(ys[0]))
    ys = np.roll(ys[:, :-1], -k0, axis=1)
    ts = ts[:-1]
    dcdt = rhs_dimensionless(ys, dp)[0]
    med = np.median(np.abs(dcdt))
    fast = np.abs(dcdt) > fast_factor * med
    rises = [s for s in _segments(fast) if np.mean(dcdt[s[0]:s[1]]) > 0]
    falls = [s for s in _segments(fast) if np.mean(dcdt[s[0]:s[1]]) < 0]
    diag = {"median_abs_dcdt": float(med), "n_fast_segments": len(_segments(fast))}
    if not rises or not falls:
        return SpikeDecomposition(
            phase_intervals={}, period=T, max_c=float(ys[0].max()),
            min_c=float(ys[0].min()), spike_class=None, plateau_fraction=0.0,
            ct_rise_onset=None, ct_fall_onset=None, fold_projection_ct=None,
            diagnostics=dict(diag, reason="no fast rise/fall segments"))
    # the dominant rise/fall: largest |c| change across the segment
    amp = lambda s: abs(ys[0, min(s[1], len(ts) - 1)] - ys[0, s[0]])
    rise = max(rises, key=amp)
    fall = max(falls, key=amp)
    t_rise = (ts[rise[0]], ts[min(rise[1], len(ts) - 1)])
    t_fall = (ts[fall[0]], ts[min(fall[1], len(ts) - 1)])
    if t_fall[0] > t_rise[1]:
        plateau = (t_rise[1], t_fall[0])
    else:       # fall precedes rise in this window: plateau wraps
        plateau = (t_rise[1], t_fall[0] + T)
    inactive = (t_fall[1], t_rise[0] + (T if t_rise[0] < t_fall[1] else 0.0))
    plateau_frac = max(0.0, (plateau[1] - plateau[0])) / T
    spike_class = "broad" if plateau_frac > broad_threshold else "narrow"
    ct_rise = float(np.interp(t_rise[0], ts, ys[1]))
    ct_fall = float(np.interp(t_fall[0], ts, ys[1]))
    # where the orbit meets the fold projection c = eps*fold_C(c_t)
    eps = dp.K_tau
    gap = ys[0] - eps * np.array([float(r2.fold_C(max(ct, 1e-6), dp))
                                  for ct in ys[1]])
    fold_ct = None
    sgn = np.sign(gap)
    crossings = np.flatnonzero((sgn[:-1] < 0) & (sgn[1:] >= 0))
    if crossings.size:
        # the crossing nearest the rise onset
        k = crossings[np.argmin(np.abs(ts[crossings] - t_rise[0]))]
        fold_ct = float(ys[1, k])
    return SpikeDecomposition(
        phase_intervals={"rise": t_rise, "plateau": plateau,
                         "fall": t_fall, "inactive": inactive},
        period=T, max_c=float(ys[0].max()), min_c=float(ys[0].min()),
        spike_class=spike_class, plateau_fraction=float(plateau_frac),
        ct_rise_onset=ct_rise, ct_fall_onset=ct_fall,
        fold_projection_ct=fold_ct, diagnostics=diag)


# ---------------------------------------------------------------------------
# Equilibrium branch and amplitude scan


def _newton_equilibrium(dp, seed, tol=1e-13, max_iter=50):
    y = np.asarray(seed, dtype=float)
    for _ in range(max_iter):
        F = rhs_dimensionless(y, dp)
        if np.max(np.abs(F)) < tol and np.max(np.abs(F)) < 1e-10:
            return y
        J = jacobian_full(y, dp)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        y = y + step
        if not np.all(np.isfinite(y)) or y[0] <= 0:
            return None
        if np.max(np.abs(step)) < 1e-15:
            break
    F = rhs_dimensionless(y, dp)
    return y if np.max(np.abs(F)) <= 1e-10 else None


def _equilibrium_seed(dp):
    """Seed from the scalar reduction: membrane-flux balance gives c_t(c),
    the c-equation on that curve is scalar."""
    jpm = lambda c: dp.V_PM * c ** 2 / (c ** 2 + dp.K_PM ** 2)
    def ct_of_c(c):
        excess = jpm(c) - dp.alpha_0
        if excess <= 0 or excess >= dp.alpha_1:
            return None
        return c + (dp.K_e ** 4 * (dp.alpha_1 / excess - 1.0)) ** 0.25 / dp.gamma
    def F(c):
        ct = ct_of_c(c)
        if ct is None:
            return np.nan
        h = dp.K_h ** 4 / (c ** 4 + dp.K_h ** 4)
        return rhs_dimensionless((c, ct, h), dp)[0]
    c_lo = dp.K_PM * np.sqrt(dp.alpha_0 / (dp.V_PM - dp.alpha_0)) + 1e-12
    c_hi = dp.K_PM * np.sqrt((dp.alpha_0 + dp.alpha_1)
                             / (dp.V_PM - dp.alpha_0 - dp.alpha_1)) - 1e-12
    grid = c_hi - np.logspace(np.log10(1e-10), np.log10(c_hi - c_lo), 1200)[::-1]
    vals = np.array([F(c) for c in grid])
    for i in range(len(grid) - 1):
        if np.isfinite(vals[i]) and np.isfinite(vals[i + 1]) \
                and vals[i] * vals[i + 1] < 0:
            c = brentq(F, grid[i], grid[i + 1], xtol=1e-15)
            return np.array([c, ct_of_c(c),
                             dp.K_h ** 4 / (c ** 4 + dp.K_h ** 4)])
    raise NoAttractorError("no equilibrium found by the scalar reduction")


def equilibrium_branch(dp: DimensionlessParameters, p_lo: float = 0.001,
                       p_hi: float = 0.2, n_points: int = 200) -> BifurcationDiagram:
    """Natural-parameter continuation of the equilibrium branch in p with
    Newton correction and step halving on failure; Hopf points located by
    bisection on the real-part sign change of the leading eigenvalue pair."""
    ps, states, stables, eigs, gaps = [], [], [], [], []
    p = p_lo
    dp_i = dp.replace(p=p)
    y = _newton_equilibrium(dp_i, _equilibrium_seed(dp_i))
    if y is None:
        raise NoAttractorError(f"no equilibrium at p = {p}")
    step0 = (p_hi - p_lo) / n_points
    step = step0
    while True:
        ev = np.linalg.eigvals(jacobian_full(y, dp.replace(p=p)))
        ps.append(p)
        states.append(y)
        eigs.append(ev)
        stables.append(bool(np.max(ev.real) < 0))
        if p >= p_hi:
            break
        advanced = False
        while step >= 1e-6:
            p_next = min(p + step, p_hi)
            y_next = _newton_equilibrium(dp.replace(p=p_next), y)
            if y_next is not None:
                p, y = p_next, y_next
                advanced = True
                step = min(step * 1.5, step0)
                break
            step *= 0.5
        if not advanced:
            gaps.append((p, p + step0))
            break
    ps = np.array(ps)
    states = np.stack(states, axis=1)
    stables = np.array(stables)
    eigs = np.stack(eigs, axis=1)
    hopf, brackets = [], []
    for i in range(len(ps) - 1):
        if stables[i] != stables[i + 1]:
            p_c, bracket = _bisect_hopf(dp, ps[i], ps[i + 1], states[:, i])
            hopf.append(p_c)
            brackets.append(bracket)
    return BifurcationDiagram(branch_p=ps, branch_states=states,
                              branch_stable=stables, branch_eigenvalues=eigs,
                              hopf_points=hopf, hopf_brackets=brackets,
                              amplitude_scan=[], gaps=gaps)


def _bisect_hopf(dp, p_lo, p_hi, seed, width=1e-5):
    def max_re(p, y0):
        y = _newton_equilibrium(dp.replace(p=p), y0)
        if y is None:
            raise NoAttractorError(f"equilibrium lost during Hopf bisection at p={p}")
        return float(np.max(np.linalg.eigvals(
            jacobian_full(y, dp.replace(p=p))).real)), y
    f_lo, y = max_re(p_lo, seed)
    f_hi, _ = max_re(p_hi, y)
    for _ in range(100):
        if p_hi - p_lo <= width:
            break
        mid = 0.5 * (p_lo + p_hi)
        f_mid, y = max_re(mid, y)
        if (f_lo < 0) == (f_mid < 0):
            p_lo, f_lo = mid, f_mid
        else:
            p_hi, f_hi = mid, f_mid
    return 0.5 * (p_lo + p_hi), (p_lo, p_hi)


def classify_trajectory_tail(traj, dp: DimensionlessParameters,
                             tail_frac: float = 0.3, n_samples: int = 240001,
                             fast_factor: float = 10.0,
                             broad_threshold: float = 0.05):
    """Spike-shape classification of an oscillating trajectory tail without
    assuming periodicity (used for long-period mixed-mode trains whose return
    map does not settle).  Returns (class, info) or (None, info).

    The sampling must resolve the fast rise (duration of order 1e2 time
    units), hence the dense default grid."""
    t_end = traj.times[-1]
    ts = np.linspace((1.0 - tail_frac) * t_end, t_end, n_samples)
    ys = traj.dense(ts)
    dcdt = rhs_dimensionless(ys, dp)[0]
    fast = np.abs(dcdt) > fast_factor * np.median(np.abs(dcdt))
    rises = [s for s in _segments(fast) if np.mean(dcdt[s[0]:s[1]]) > 0]
    falls = [s for s in _segments(fast) if np.mean(dcdt[s[0]:s[1]]) < 0]
    info = {"max_c": float(ys[0].max()), "min_c": float(ys[0].min()),
            "n_rises": len(rises), "n_falls": len(falls)}
    if len(rises) < 3 or not falls:
        return None, info
    fracs = []
    for i in range(len(rises) - 1):
        r, r_next = rises[i], rises[i + 1]
        nxt = [f for f in falls if f[0] >= r[1] and f[0] < r_next[0]]
        if not nxt:
            continue
        cycle = ts[r_next[0]] - ts[r[0]]
        fracs.append((ts[nxt[0][0]] - ts[min(r[1], n_samples - 1)]) / cycle)
    if not fracs:
        return None, info
    # median: mixed-mode trains contain irregular long cycles that would
    # dominate a mean
    info["plateau_fraction"] = float(np.median(fracs))
    cls = "broad" if info["plateau_fraction"] > broad_threshold else "narrow"
    return cls, info


def amplitude_scan(p_values, dp: DimensionlessParameters,
                   config: IntegratorConfig | None = None,
                   landmarks: r1.R1Landmarks | None = None) -> list:
    """Periodic-attractor amplitude and class at each p (warm-started scan)."""
    if config is None:
        config = IntegratorConfig(rtol=1e-10, atol=1e-13, t_max=3e6)
    results = []
    initial = (0.01, 0.3, 0.9)
    for k, p in enumerate(np.atleast_1d(p_values)):
        dp_p = dp.replace(p=float(p))
        entry = {"p": float(p)}
        try:
            orbit = find_periodic_attractor(dp_p, config=config, initial=initial)
            dec = decompose_spike(orbit, dp_p, landmarks)
            entry.update(max_c=orbit.max_c, min_c=float(orbit.mins[0]),
                         period=orbit.period, spike_class=dec.spike_class,
                         plateau_fraction=dec.plateau_fraction)
            initial = tuple(orbit.crossing_state)   # warm start for the next p
        except NoAttractorError as exc:
            cls, info = (None, {})
            if exc.kind == "unsettled" and exc.trajectory is not None:
                cls, info = classify_trajectory_tail(exc.trajectory, dp_p)
            if cls is not None:
                entry.update(max_c=info["max_c"], min_c=info["min_c"],
                             period=np.nan, spike_class=cls,
                             plateau_fraction=info["plateau_fraction"],
                             note="no simple periodic attractor; classified "
                                  "by spike shape of the trajectory tail")
                initial = tuple(exc.trajectory.states[:, -1])
            else:
                entry.update(max_c=np.nan, min_c=np.nan, period=np.nan,
                             spike_class="no-attractor", note=str(exc))
        results.append(entry)
    return results
