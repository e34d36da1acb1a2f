"""Deterministic ODE integration for the model family.

Two steppers are provided: the classical fixed-step RK4 and an adaptive
embedded Dormand-Prince 5(4) pair. Both are implemented here rather than
delegated so that runs are bitwise reproducible and so that section-crossing
events can be located by re-stepping inside an accepted step.

Positivity handling:

* ``log_transform`` integrates z = ln N (requires a strictly positive initial
  state); stored densities are exp(z) > 0 by construction.
* ``clamp_at_zero_error`` integrates raw densities, snaps tiny negative
  overshoots to zero and raises :class:`PositivityError` for anything larger.
* ``auto`` (default) picks ``log_transform`` when the initial state is
  strictly positive and ``clamp_at_zero_error`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, MaxStepsError, PositivityError
from .models import Model, _check_state, compile_rhs

__all__ = [
    "FIXED_RK4",
    "ADAPTIVE_RK45",
    "IntegratorConfig",
    "SectionSpec",
    "SectionEvent",
    "Trajectory",
    "step_rk4",
    "integrate",
    "integrate_with_events",
    "closed_form_malthus",
    "closed_form_verhulst",
]

FIXED_RK4 = "fixed_rk4"
ADAPTIVE_RK45 = "adaptive_rk45"

CLAMP = "clamp_at_zero_error"
LOG = "log_transform"
AUTO = "auto"

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = ADAPTIVE_RK45
    step: float | None = None          # fixed_rk4 only
    rtol: float = 1e-10
    atol: float = 1e-12
    max_steps: int = 2_000_000
    positivity_mode: str = AUTO

    def __post_init__(self):
        if self.method not in (FIXED_RK4, ADAPTIVE_RK45):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == FIXED_RK4:
            if self.step is None or not (self.step > 0.0):
                raise ValueError("fixed_rk4 requires step > 0")
        if not (self.rtol >= 1e-14):
            raise ValueError("rtol must be >= 1e-14")
        if not (self.atol >= 1e-16):
            raise ValueError("atol must be >= 1e-16")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.positivity_mode not in (CLAMP, LOG, AUTO):
            raise ValueError(f"unknown positivity_mode {self.positivity_mode!r}")


@dataclass(frozen=True)
class SectionSpec:
    """A one-species slice N_i = level crossed in a fixed direction."""

    species_index: int
    level: float
    direction: str = "increasing"

    def __post_init__(self):
        if not (self.level > 0.0) or not math.isfinite(self.level):
            raise ValueError("section level must be positive and finite")
        if self.direction not in ("increasing", "decreasing"):
            raise ValueError(f"direction must be 'increasing' or 'decreasing', got {self.direction!r}")
        if self.species_index < 0:
            raise ValueError("species_index must be non-negative")


@dataclass(frozen=True)
class SectionEvent:
    time: float
    state: np.ndarray
    section_id: int


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    events: tuple[SectionEvent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("times and states must have matching lengths")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0.0):
            raise ValueError("times must be strictly increasing")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def event_times(self, section_id: int = 0) -> np.ndarray:
        return np.array([e.time for e in self.events if e.section_id == section_id])


# Dormand-Prince 5(4): the fifth-order solution is propagated, the embedded
# fourth-order one supplies the error estimate. FSAL: stage 7 is f at the new
# point and is reused as stage 1 of the next step.
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _dopri_step(f, y, h, k1):
    """One DP5(4) step. Returns (y_new, error_estimate, f(y_new))."""
    k2 = f(y + h * (_DP_A[1][0] * k1))
    k3 = f(y + h * (_DP_A[2][0] * k1 + _DP_A[2][1] * k2))
    k4 = f(y + h * (_DP_A[3][0] * k1 + _DP_A[3][1] * k2 + _DP_A[3][2] * k3))
    k5 = f(y + h * (_DP_A[4][0] * k1 + _DP_A[4][1] * k2 + _DP_A[4][2] * k3 + _DP_A[4][3] * k4))
    k6 = f(y + h * (_DP_A[5][0] * k1 + _DP_A[5][1] * k2 + _DP_A[5][2] * k3
                    + _DP_A[5][3] * k4 + _DP_A[5][4] * k5))
    y_new = y + h * (_DP_A[6][0] * k1 + _DP_A[6][2] * k3 + _DP_A[6][3] * k4
                     + _DP_A[6][4] * k5 + _DP_A[6][5] * k6)
    k7 = f(y_new)
    err = h * (_DP_E[0] * k1 + _DP_E[2] * k3 + _DP_E[3] * k4
               + _DP_E[4] * k5 + _DP_E[5] * k6 + _DP_E[6] * k7)
    return y_new, err, k7


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_rk4(model: Model, state, h: float) -> np.ndarray:
    """Advance one classical RK4 step of size h (local error O(h^5))."""
    if not (h > 0.0) or not math.isfinite(h):
        raise ValueError("step size must be positive and finite")
    y = _check_state(model, state)
    out = _rk4_step(compile_rhs(model), y, float(h))
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite state after RK4 step from {y} with h={h}")
    return out


def closed_form_malthus(n0: float, epsilon: float, t: float, mortality: bool = False) -> float:
    """Exponential growth/decay: N0 * exp(+-epsilon * t)."""
    if n0 < 0.0:
        raise ValueError("initial density must be non-negative")
    sign = -1.0 if mortality else 1.0
    return n0 * math.exp(sign * epsilon * t)


def closed_form_verhulst(n0: float, epsilon: float, capacity: float, t: float) -> float:
    """Logistic solution K / (1 + ((K - N0)/N0) * exp(-epsilon*t)); 0 stays 0."""
    if n0 < 0.0:
        raise ValueError("initial density must be non-negative")
    if capacity <= 0.0:
        raise ValueError("capacity must be positive")
    if n0 == 0.0:
        return 0.0
    return capacity / (1.0 + ((capacity - n0) / n0) * math.exp(-epsilon * t))


def _resolve_positivity(config: IntegratorConfig, y0: np.ndarray) -> str:
    if config.positivity_mode != AUTO:
        return config.positivity_mode
    return LOG if np.all(y0 > 0.0) else CLAMP


def _initial_step(f, y0, f0, rtol, atol, span):
    """Standard two-stage guess for the first adaptive step size."""
    sc = atol + rtol * np.abs(y0)
    d0 = math.sqrt(float(np.mean((y0 / sc) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / sc) ** 2)))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = f(y1)
    d2 = math.sqrt(float(np.mean(((f1 - f0) / sc) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, span)


class _EventTracker:
    """Detects and refines directional crossings inside accepted steps."""

    def __init__(self, sections, in_log_space, span, single_step):
        self.sections = tuple(sections)
        self.levels = [math.log(s.level) if in_log_space else s.level for s in self.sections]
        self.in_log_space = in_log_space
        # spec'd time accuracy for event localization
        self.time_tol = max(1e-10 * span, 1e-14)
        self.single_step = single_step

    def _crossed(self, section, ga, gb):
        if section.direction == "increasing":
            return ga < 0.0 <= gb
        return ga > 0.0 >= gb

    def scan(self, t, w_old, h, w_new, events):
        hits = []
        for sid, (section, level) in enumerate(zip(self.sections, self.levels)):
            i = section.species_index
            ga = float(w_old[i]) - level
            gb = float(w_new[i]) - level
            if self._crossed(section, ga, gb):
                hits.append((sid, section, level))
        if not hits:
            return
        located = []
        for sid, section, level in hits:
            dt, w_ev = self._bisect(w_old, h, section.species_index, level, section.direction)
            located.append((t + dt, w_ev, sid))
        located.sort(key=lambda item: item[0])
        for time, w_ev, sid in located:
            state = np.exp(w_ev) if self.in_log_space else np.maximum(w_ev, 0.0)
            events.append(SectionEvent(time, state, sid))

    def _bisect(self, w_old, h, i, level, direction):
        # g(dt) = component i of a single sub-step of length dt, minus level.
        # The bracket [0, h] comes from the accepted step itself.
        lo, hi = 0.0, h
        w_hi = None
        while hi - lo > self.time_tol:
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            w_mid = self.single_step(w_old, mid)
            g_mid = float(w_mid[i]) - level
            below = g_mid < 0.0 if direction == "increasing" else g_mid > 0.0
            if below:
                lo = mid
            else:
                hi, w_hi = mid, w_mid
        if w_hi is None:
            w_hi = self.single_step(w_old, hi)
        return hi, w_hi


def _run(model, config, t0, t1, initial_state, sections):
    if not (t1 > t0):
        raise ValueError(f"t1 must exceed t0, got [{t0}, {t1}]")
    y0 = _check_state(model, initial_state)
    mode = _resolve_positivity(config, y0)
    rhs = compile_rhs(model)
    span = t1 - t0

    if mode == LOG:
        if np.any(y0 <= 0.0):
            raise ValueError("log_transform positivity mode requires a strictly positive initial state")

        def f(w):
            n = np.exp(w)
            return rhs(n) / n

        w = np.log(y0)
        decode = np.exp
    else:
        f = rhs
        w = y0.copy()
        decode = lambda v: np.maximum(v, 0.0)

    adaptive = config.method == ADAPTIVE_RK45
    if adaptive:
        def single_step(y, h):
            return _dopri_step(f, y, h, f(y))[0]
    else:
        def single_step(y, h):
            return _rk4_step(f, y, h)

    tracker = _EventTracker(sections, mode == LOG, span, single_step) if sections else None

    times = [t0]
    states = [decode(w)]
    events: list[SectionEvent] = []

    def partial():
        return Trajectory(np.array(times), np.array(states), tuple(events))

    def check_clamp(w_new):
        # Tiny negative overshoot is integration noise; anything beyond the
        # local error scale means the dynamics genuinely crossed zero.
        if mode != CLAMP:
            return w_new
        lo = float(np.min(w_new))
        if lo >= 0.0:
            return w_new
        tol = 10.0 * (config.atol + config.rtol * max(1.0, float(np.max(np.abs(w_new)))))
        if lo < -tol:
            raise PositivityError(
                f"state component went negative ({lo:.3e}) beyond tolerance {tol:.3e} in clamp mode"
            )
        return np.maximum(w_new, 0.0)

    t = t0
    n_steps = 0
    t_eps = 1e-12 * max(1.0, abs(t1))

    if adaptive:
        f_cur = f(w)
        if not np.all(np.isfinite(f_cur)):
            raise DivergenceError("vector field non-finite at the initial state")
        h = _initial_step(f, w, f_cur, config.rtol, config.atol, span)
        while t < t1 - t_eps:
            if n_steps >= config.max_steps:
                raise MaxStepsError(
                    f"max_steps={config.max_steps} exhausted at t={t!r}", trajectory=partial()
                )
            n_steps += 1
            h = min(h, t1 - t)
            if h < 1e-14 * max(1.0, abs(t)):
                raise DivergenceError(f"step size underflow at t={t!r}")
            w_new, err, f_new = _dopri_step(f, w, h, f_cur)
            if not (np.all(np.isfinite(w_new)) and np.all(np.isfinite(err))):
                h *= 0.1
                continue
            scale = config.atol + config.rtol * np.maximum(np.abs(w), np.abs(w_new))
            err_norm = float(np.max(np.abs(err) / scale))
            if err_norm <= 1.0:
                w_new = check_clamp(w_new)
                if tracker is not None:
                    tracker.scan(t, w, h, w_new, events)
                t += h
                w = w_new
                f_cur = f_new
                times.append(t)
                states.append(decode(w))
                grow = _MAX_FACTOR if err_norm == 0.0 else min(
                    _MAX_FACTOR, _SAFETY * err_norm ** -0.2
                )
                h *= max(_MIN_FACTOR, grow)
            else:
                h *= max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)
    else:
        while t < t1 - t_eps:
            if n_steps >= config.max_steps:
                raise MaxStepsError(
                    f"max_steps={config.max_steps} exhausted at t={t!r}", trajectory=partial()
                )
            n_steps += 1
            h = min(config.step, t1 - t)
            w_new = _rk4_step(f, w, h)
            if not np.all(np.isfinite(w_new)):
                raise DivergenceError(f"non-finite state at t={t + h!r}")
            w_new = check_clamp(w_new)
            if tracker is not None:
                tracker.scan(t, w, h, w_new, events)
            t += h
            w = w_new
            times.append(t)
            states.append(decode(w))

    return Trajectory(np.array(times), np.array(states), tuple(events))


def integrate(model: Model, config: IntegratorConfig, t0: float, t1: float, initial_state) -> Trajectory:
    """Integrate the model over [t0, t1] from the given state.

    Deterministic: identical inputs produce a bitwise-identical trajectory.
    Raises :class:`MaxStepsError` (with the partial trajectory attached) when
    the step budget runs out, and :class:`PositivityError` when a component
    turns negative beyond tolerance in clamp mode.
    """
    return _run(model, config, float(t0), float(t1), initial_state, ())


def integrate_with_events(
    model: Model,
    config: IntegratorConfig,
    t0: float,
    t1: float,
    initial_state,
    sections,
) -> Trajectory:
    """Integrate and record directional crossings of the given sections.

    Each crossing of ``N_i = level`` is located by bisecting sub-steps of the
    accepted step that brackets it, to a time accuracy of 1e-10 * (t1 - t0).
    """
    sections = tuple(sections)
    if not sections:
        raise ValueError("integrate_with_events requires at least one section")
    for s in sections:
        if s.species_index >= model.n_species:
            raise ValueError(f"section species_index {s.species_index} out of range")
    return _run(model, config, float(t0), float(t1), initial_state, sections)
