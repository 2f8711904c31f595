"""Stiff integration, Poincare sections and periodic-orbit extraction.

The full model is stiff (the time-scale ratio between the gating variable
and the calcium dynamics exceeds 1e5 near the slow manifold), so the default
method is a stiff-capable adaptive solver with automatic nonstiff/stiff
switching (LSODA).  An explicit reference method is kept for cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .model import make_rhs, rhs_dimensionless

_COORD_INDEX = {"c": 0, "C": 0, "c_t": 1, "h": 2}

_METHODS = {
    "implicit-stiff": "LSODA",
    "explicit-reference": "RK45",
}


class IntegrationError(RuntimeError):
    """Integration failed (step-size collapse or solver breakdown)."""

    def __init__(self, message, last_state=None, last_time=None):
        super().__init__(message)
        self.last_state = last_state
        self.last_time = last_time


class SectionTimeoutError(RuntimeError):
    """No section crossing occurred before the time horizon."""


class NoAttractorError(RuntimeError):
    """No simple periodic attractor was found.

    ``kind`` distinguishes an orbit that settles to an equilibrium
    ("equilibrium") from one whose return map keeps wandering within the
    horizon ("unsettled", e.g. long-period mixed-mode trains); the computed
    trajectory is attached for post-mortem classification."""

    def __init__(self, message, kind=None, trajectory=None):
        super().__init__(message)
        self.kind = kind
        self.trajectory = trajectory


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    t_max: float = 1e6
    max_step: float = np.inf
    method: str = "implicit-stiff"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}; "
                             f"choose from {sorted(_METHODS)}")

    @property
    def scipy_method(self) -> str:
        return _METHODS[self.method]

    def replace(self, **kw) -> "IntegratorConfig":
        import dataclasses
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class SectionSpec:
    """A Poincare section {coordinate == level} with crossing direction
    +1 (upward), -1 (downward) or 0 (both)."""

    coordinate: str = "c"
    level: float = 0.05
    direction: int = 1

    def __post_init__(self):
        if self.coordinate not in _COORD_INDEX:
            raise ValueError(f"unknown coordinate {self.coordinate!r}")
        if not np.isfinite(self.level):
            raise ValueError("section level must be finite")
        if self.direction not in (-1, 0, 1):
            raise ValueError("direction must be -1, 0 or +1")

    @property
    def index(self) -> int:
        return _COORD_INDEX[self.coordinate]

    def event(self):
        idx, lvl = self.index, self.level
        def ev(t, y, *args):
            return y[idx] - lvl
        ev.terminal = False
        ev.direction = float(self.direction)
        return ev


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray          # shape (3, n)
    events: list = field(default_factory=list)  # (time, event_id, state)
    dense: object = None        # scipy dense-output interpolant, if requested


def integrate(rhs, initial, config: IntegratorConfig,
              t_span=None, events=None, dense_output: bool = False) -> Trajectory:
    """Integrate ``rhs(t, y)`` from ``initial`` under ``config``.

    ``events`` is an optional list of scipy-style event functions; all
    detected events are recorded in the returned trajectory.
    """
    if t_span is None:
        t_span = (0.0, config.t_max)
    sol = solve_ivp(rhs, t_span, np.asarray(initial, dtype=float),
                    method=config.scipy_method, rtol=config.rtol,
                    atol=config.atol, max_step=config.max_step,
                    events=events, dense_output=dense_output)
    if sol.status < 0:
        raise IntegrationError(
            f"integration failed: {sol.message}",
            last_state=sol.y[:, -1] if sol.y.size else None,
            last_time=sol.t[-1] if sol.t.size else None)
    recorded = []
    if events is not None:
        for eid, (te, ye) in enumerate(zip(sol.t_events, sol.y_events)):
            for k in range(len(te)):
                recorded.append((te[k], eid, ye[k]))
        recorded.sort(key=lambda r: r[0])
    return Trajectory(times=sol.t, states=sol.y, events=recorded,
                      dense=sol.sol if dense_output else None)


def poincare_return_map(rhs, section: SectionSpec, start,
                        n_crossings: int, config: IntegratorConfig):
    """Return the first ``n_crossings`` section crossings (time, state) of the
    orbit through ``start``.  Raises SectionTimeoutError if none occur."""
    traj = integrate(rhs, start, config, events=[section.event()])
    crossings = [(t, y) for t, _, y in traj.events]
    if not crossings:
        raise SectionTimeoutError(
            f"no crossing of {section.coordinate} = {section.level} "
            f"before t = {config.t_max}")
    return crossings[:n_crossings]


@dataclass
class OrbitSummary:
    period: float
    mins: np.ndarray
    maxs: np.ndarray
    times: np.ndarray           # one period of samples, starting at a crossing
    states: np.ndarray          # shape (3, n)
    section: SectionSpec
    crossing_state: np.ndarray  # converged section crossing state
    n_periods_averaged: int
    params: object = None

    @property
    def max_c(self) -> float:
        return float(self.maxs[0])


def _is_equilibrium(pm, state, tol=1e-9) -> bool:
    return float(np.max(np.abs(rhs_dimensionless(state, pm)))) < tol


def find_periodic_attractor(pm, section: SectionSpec | None = None,
                            config: IntegratorConfig | None = None,
                            initial=(0.01, 0.3, 0.9),
                            settle_tol: float = 0.02,
                            max_crossings: int = 200) -> OrbitSummary:
    """Locate the periodic attractor of the full dimensionless system.

    The orbit is integrated over ``config.t_max``; if no section is given, a
    section at 75% of the c-range over the final third of the run (upward) is
    used, which intersects the main spike upstroke exactly once per cycle.
    Transients are discarded by requiring successive return-map states to
    agree within ``settle_tol`` (broad spikes carry an irreducible
    cycle-to-cycle jitter of order 1e-3 from the sensitive delayed loss of
    stability, so the tolerance cannot be made arbitrarily tight); multi-loop
    cycles (returns repeating with stride k > 1) are detected up to stride 4.
    The period is the mean inter-return time over the settled tail, which
    averages out the jitter.
    """
    if config is None:
        config = IntegratorConfig(rtol=1e-10, atol=1e-13, t_max=4e6)
    rhs = make_rhs(pm, "dimensionless")
    traj = integrate(rhs, initial, config, dense_output=True)
    y_end = traj.states[:, -1]
    tail = traj.times > traj.times[-1] * 2.0 / 3.0
    c_tail = traj.states[0, tail]
    if _is_equilibrium(pm, y_end) or (c_tail.max() - c_tail.min()) < 1e-6:
        raise NoAttractorError(
            f"orbit settles to an equilibrium near c = {y_end[0]:.4g}",
            kind="equilibrium", trajectory=traj)
    if section is None:
        section = SectionSpec(
            "c", c_tail.min() + 0.75 * (c_tail.max() - c_tail.min()), +1)
    # Locate crossings on the dense output.
    times, states = traj.times, traj.states
    g = states[section.index] - section.level
    sign_change = (g[:-1] * g[1:] < 0)
    rising = g[1:] > g[:-1]
    if section.direction == 1:
        sign_change &= rising
    elif section.direction == -1:
        sign_change &= ~rising
    from scipy.optimize import brentq
    cross_t = []
    for i in np.flatnonzero(sign_change):
        tc = brentq(lambda t: traj.dense(t)[section.index] - section.level,
                    times[i], times[i + 1], xtol=1e-10 * max(1.0, times[i + 1]))
        cross_t.append(tc)
    if len(cross_t) < 4:
        raise NoAttractorError(
            f"only {len(cross_t)} section crossings in t <= {config.t_max}",
            kind="unsettled", trajectory=traj)
    cross_t = np.array(cross_t[-min(len(cross_t), max_crossings):])
    cross_y = np.stack([traj.dense(t) for t in cross_t], axis=1)
    # Find the settled tail and the return stride.
    for stride in (1, 2, 3, 4):
        n = len(cross_t)
        settled_from = None
        for i in range(n - stride - 1, -1, -1):
            if np.max(np.abs(cross_y[:, i + stride] - cross_y[:, i])) > settle_tol:
                settled_from = i + 1
                break
        else:
            settled_from = 0
        n_ret = (n - settled_from - 1) // stride
        if n_ret >= 3:
            break
    else:
        raise NoAttractorError(
            "return map did not converge within the time horizon "
            f"(settle tolerance {settle_tol})",
            kind="unsettled", trajectory=traj)
    t_tail = cross_t[settled_from:]
    returns = t_tail[stride:] - t_tail[:-stride]
    period = float(np.mean(returns[-min(len(returns), 20):]))
    # Sample the last full cycle densely (crossing to crossing, so the
    # window is an actual cycle regardless of period jitter).
    t0 = cross_t[-1 - stride]
    ts = np.linspace(t0, cross_t[-1], 4001)
    ys = np.stack([traj.dense(t) for t in ts], axis=1)
    # extrema from the raw solver points over the settled tail: the spike
    # overshoot is narrower than the uniform sample spacing
    settled = states[:, times >= cross_t[settled_from]]
    mins = np.minimum(ys.min(axis=1), settled.min(axis=1))
    maxs = np.maximum(ys.max(axis=1), settled.max(axis=1))
    return OrbitSummary(period=period, mins=mins, maxs=maxs,
                        times=ts - t0, states=ys, section=section,
                        crossing_state=cross_y[:, -1],
                        n_periods_averaged=int(min(len(returns), 20)),
                        params=pm)


def trajectory_to_rows(traj: Trajectory):
    """Yield (t, c, c_t, h) rows for CSV export."""
    for k in range(len(traj.times)):
        yield (traj.times[k], *traj.states[:, k])
