"""Analysis of the model family's long-run behaviour.

Covers equilibrium finding and stability classification, the conserved
quantity of the bilinear two-species system, oscillation-period detection on a
Poincare section, time averages over whole periods (with the predicted shift
under uniform harvesting), and limit-cycle extraction from multiple initial
conditions via the section return map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoPeriodError, NonConvergenceError
from .integrate import (
    IntegratorConfig,
    SectionSpec,
    Trajectory,
    integrate,
    integrate_with_events,
)
from .models import (
    GrowthKind,
    Model,
    ResponseKind,
    _check_state,
    _jacobian_core,
    compile_rhs,
    make_harvested_lotka_volterra,
)

__all__ = [
    "EquilibriumReport",
    "PeriodEstimate",
    "AveragesReport",
    "DisturbanceRow",
    "PoincareRecord",
    "LimitCycleReport",
    "lv_equilibrium",
    "newton_equilibrium",
    "find_equilibria",
    "interior_equilibrium",
    "lv_first_integral",
    "detect_period",
    "time_averages",
    "verify_disturbance_law",
    "find_limit_cycle",
]

STABLE = "stable"
UNSTABLE = "unstable"
CENTER_MARGINAL = "center_marginal"

# Eigenvalue real parts within this band are treated as numerically zero:
# exact centers (the bilinear system) never produce exact floating zeros.
_EIG_DEAD_BAND = 1e-9

_NEWTON_TOL = 1e-12
_DEDUP_TOL = 1e-8


# ---------------------------------------------------------------------------
# structured-model recognizers


@dataclass(frozen=True)
class _LVStructure:
    epsilon1: float
    gamma1: float
    epsilon2: float
    gamma2: float
    prey_harvest: float
    predator_harvest: float

    @property
    def effective_epsilon1(self) -> float:
        return self.epsilon1 - self.prey_harvest

    @property
    def effective_epsilon2(self) -> float:
        return self.epsilon2 + self.predator_harvest

    def predicted_means(self) -> np.ndarray | None:
        if self.effective_epsilon1 <= 0.0:
            return None
        return np.array([
            self.effective_epsilon2 / self.gamma2,
            self.effective_epsilon1 / self.gamma1,
        ])


def _as_lv(model: Model) -> _LVStructure | None:
    """Recognize a (possibly harvested) bilinear two-species model."""
    if model.n_species != 2 or len(model.interactions) != 1:
        return None
    g0, g1 = model.growth
    if g0.kind is not GrowthKind.MALTHUS_GROWTH or g1.kind is not GrowthKind.MALTHUS_MORTALITY:
        return None
    link = model.interactions[0]
    if link.prey_index != 0 or link.response.kind is not ResponseKind.BILINEAR:
        return None
    prey_h = pred_h = 0.0
    for hv in model.harvests:
        if hv.species_index == 0:
            prey_h = hv.rate
        else:
            pred_h = hv.rate
    return _LVStructure(
        g0.epsilon, link.prey_loss_rate, g1.epsilon, link.predator_gain_rate, prey_h, pred_h
    )


@dataclass(frozen=True)
class _RMStructure:
    epsilon1: float
    capacity: float
    gamma1: float
    epsilon2: float
    gamma2: float
    h: float

    def interior_point(self) -> np.ndarray | None:
        if self.gamma2 <= self.epsilon2:
            return None
        n1 = self.epsilon2 * self.h / (self.gamma2 - self.epsilon2)
        if n1 >= self.capacity:
            return None
        n2 = self.epsilon1 * (1.0 - n1 / self.capacity) * (self.h + n1) / self.gamma1
        return np.array([n1, n2])


def _as_rm(model: Model) -> _RMStructure | None:
    """Recognize logistic prey + Holling-II predator with no harvest."""
    if model.n_species != 2 or len(model.interactions) != 1 or model.harvests:
        return None
    g0, g1 = model.growth
    if g0.kind is not GrowthKind.VERHULST_GROWTH or g1.kind is not GrowthKind.MALTHUS_MORTALITY:
        return None
    link = model.interactions[0]
    if link.prey_index != 0 or link.response.kind is not ResponseKind.HOLLING2:
        return None
    return _RMStructure(
        g0.epsilon, g0.capacity, link.prey_loss_rate, g1.epsilon,
        link.predator_gain_rate, link.response.h,
    )


# ---------------------------------------------------------------------------
# equilibria


@dataclass(frozen=True)
class EquilibriumReport:
    point: np.ndarray
    eigenvalues: np.ndarray
    classification: str


def lv_equilibrium(
    epsilon1: float,
    gamma1: float,
    epsilon2: float,
    gamma2: float,
    alpha: float = 0.0,
    beta: float = 0.0,
    effort: float = 0.0,
) -> np.ndarray:
    """Interior equilibrium of the (optionally harvested) bilinear system.

    Without harvesting this is (epsilon2/gamma2, epsilon1/gamma1); uniform
    proportional removal shifts it to
    ((epsilon2 + beta*effort)/gamma2, (epsilon1 - alpha*effort)/gamma1).
    These are also the orbit time-averages.
    """
    for name, v in (("epsilon1", epsilon1), ("gamma1", gamma1),
                    ("epsilon2", epsilon2), ("gamma2", gamma2)):
        if not (v > 0.0):
            raise ValueError(f"{name} must be positive, got {v!r}")
    if alpha < 0.0 or beta < 0.0 or effort < 0.0:
        raise ValueError("harvest coefficients and effort must be non-negative")
    if alpha * effort >= epsilon1:
        raise ValueError(
            f"harvest rate alpha*effort = {alpha * effort} must stay below epsilon1 = {epsilon1}"
        )
    return np.array([
        (epsilon2 + beta * effort) / gamma2,
        (epsilon1 - alpha * effort) / gamma1,
    ])


def newton_equilibrium(model: Model, guess, max_iter: int = 100) -> np.ndarray:
    """Newton iteration on the vector field with the analytic Jacobian.

    Converges when |field| <= 1e-12 * (1 + |state|); raises
    :class:`NonConvergenceError` otherwise.
    """
    rhs = compile_rhs(model)
    x = np.asarray(guess, dtype=float).copy()
    needs_positive = any(
        it.response.kind is ResponseKind.GAUSE and it.response.g < 1.0
        for it in model.interactions
    )
    for _ in range(max_iter):
        if needs_positive and np.any(x <= 0.0):
            raise NonConvergenceError(
                f"Newton iterate left the positive orthant at {x} (fractional Gause response)"
            )
        fx = rhs(x)
        if not np.all(np.isfinite(fx)):
            raise NonConvergenceError(f"vector field non-finite at Newton iterate {x}")
        if np.linalg.norm(fx) <= _NEWTON_TOL * (1.0 + np.linalg.norm(x)):
            return x
        try:
            delta = np.linalg.solve(_jacobian_core(model, x), -fx)
        except np.linalg.LinAlgError as exc:
            raise NonConvergenceError(f"singular Jacobian at Newton iterate {x}") from exc
        x = x + delta
    raise NonConvergenceError(f"Newton did not converge within {max_iter} iterations from {guess}")


def classify_eigenvalues(eigenvalues: np.ndarray) -> str:
    """Stability from eigenvalue real parts with a +-1e-9 dead band."""
    max_re = float(np.max(eigenvalues.real))
    if max_re > _EIG_DEAD_BAND:
        return UNSTABLE
    if max_re < -_EIG_DEAD_BAND:
        return STABLE
    return CENTER_MARGINAL


def find_equilibria(model: Model, guesses) -> list[EquilibriumReport]:
    """Run Newton from every guess; merge duplicates; classify stability.

    Guesses that fail to converge are skipped (non-fatal). Points are
    considered duplicates when they agree within 1e-8 componentwise.
    """
    points: list[np.ndarray] = []
    for guess in guesses:
        try:
            x = newton_equilibrium(model, guess)
        except NonConvergenceError:
            continue
        if any(np.max(np.abs(x - p)) <= _DEDUP_TOL for p in points):
            continue
        points.append(x)
    points.sort(key=lambda p: tuple(p))
    reports = []
    for p in points:
        eig = np.linalg.eigvals(_jacobian_core(model, p))
        eig = eig[np.lexsort((eig.imag, eig.real))]
        reports.append(EquilibriumReport(p, eig, classify_eigenvalues(eig)))
    return reports


def interior_equilibrium(model: Model, guess=None) -> np.ndarray:
    """Equilibrium with every species at positive density.

    Uses the closed forms for recognized bilinear / Rosenzweig-MacArthur
    structures, otherwise Newton from the supplied guess.
    """
    lv = _as_lv(model)
    if lv is not None:
        if lv.effective_epsilon1 <= 0.0:
            raise NonConvergenceError(
                "no interior equilibrium: harvest rate exceeds the prey growth rate"
            )
        return lv.predicted_means()
    rm = _as_rm(model)
    if rm is not None:
        point = rm.interior_point()
        if point is None:
            raise NonConvergenceError(
                "no interior equilibrium: predator gain does not exceed its mortality"
            )
        return point
    if guess is None:
        raise ValueError("unrecognized model structure: an initial guess is required")
    x = newton_equilibrium(model, guess)
    if np.any(x <= 1e-12):
        raise NonConvergenceError(f"Newton converged to a boundary equilibrium {x}")
    return x


# ---------------------------------------------------------------------------
# conserved quantity of the bilinear system


def lv_first_integral(epsilon1, gamma1, epsilon2, gamma2, state) -> float:
    """Conserved quantity gamma2*N1 - epsilon2*ln(N1) + gamma1*N2 - epsilon1*ln(N2).

    Its gradient is orthogonal to the bilinear vector field, so it is constant
    along every orbit; it is strictly convex on the open quadrant and attains
    its minimum at the interior equilibrium.
    """
    arr = np.asarray(state, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"state must be a length-2 vector, got shape {arr.shape}")
    if np.any(arr <= 0.0):
        raise ValueError(f"first integral requires strictly positive densities, got {arr}")
    n1, n2 = arr
    return float(
        gamma2 * n1 - epsilon2 * math.log(n1) + gamma1 * n2 - epsilon1 * math.log(n2)
    )


# ---------------------------------------------------------------------------
# periods and averages


@dataclass(frozen=True)
class PeriodEstimate:
    period: float
    spread: float
    crossing_times: np.ndarray
    section: SectionSpec


def _default_section(model: Model, initial_state) -> SectionSpec:
    eq = interior_equilibrium(model, guess=initial_state)
    return SectionSpec(species_index=0, level=float(eq[0]), direction="increasing")


def _initial_horizon(model: Model) -> float:
    lv = _as_lv(model)
    if lv is not None and lv.effective_epsilon1 > 0.0:
        # linearized angular frequency sqrt(eps1' * eps2'): cover ~10 turns
        t_lin = 2.0 * math.pi / math.sqrt(lv.effective_epsilon1 * lv.effective_epsilon2)
        return max(10.0 * t_lin, 20.0)
    return 100.0


def _collect_crossings(model, config, initial_state, section, min_crossings, t_max):
    horizon = min(_initial_horizon(model), t_max)
    while True:
        traj = integrate_with_events(model, config, 0.0, horizon, initial_state, (section,))
        if len(traj.events) >= min_crossings:
            return traj
        if horizon >= t_max:
            raise NoPeriodError(
                f"only {len(traj.events)} section crossings within t={horizon}; "
                f"need {min_crossings} to estimate a period"
            )
        horizon = min(2.0 * horizon, t_max)


def detect_period(
    model: Model,
    config: IntegratorConfig,
    initial_state,
    section: SectionSpec | None = None,
    t_max: float = 3000.0,
) -> PeriodEstimate:
    """Estimate the oscillation period from section-crossing spacings.

    The default section is the prey density through the interior equilibrium,
    crossed in the increasing direction. The period is the mean of the last
    (up to 8, at least 3) crossing spacings; ``spread`` is their max - min.
    """
    y0 = _check_state(model, initial_state)
    f0 = compile_rhs(model)(y0)
    if np.linalg.norm(f0) <= 1e-12 * (1.0 + np.linalg.norm(y0)):
        raise NoPeriodError(f"initial state {y0} is an equilibrium; no oscillation to measure")
    if section is None:
        section = _default_section(model, y0)
    traj = _collect_crossings(model, config, y0, section, 4, t_max)
    times = traj.event_times(0)
    tail = times[-9:]
    spacings = np.diff(tail)
    period = float(np.mean(spacings))
    spread = float(np.max(spacings) - np.min(spacings))
    return PeriodEstimate(period, spread, times, section)


@dataclass(frozen=True)
class AveragesReport:
    means: np.ndarray
    n_periods: int
    period: float
    predicted: np.ndarray | None
    section: SectionSpec


def _trapezoid_means(traj: Trajectory, t_a, state_a, t_b, state_b) -> np.ndarray:
    inside = (traj.times > t_a) & (traj.times < t_b)
    ts = np.concatenate(([t_a], traj.times[inside], [t_b]))
    ys = np.vstack(([state_a], traj.states[inside], [state_b]))
    return np.trapezoid(ys, ts, axis=0) / (t_b - t_a)


def time_averages(
    model: Model,
    config: IntegratorConfig,
    initial_state,
    n_periods: int = 5,
    section: SectionSpec | None = None,
) -> AveragesReport:
    """Per-species time averages over exactly ``n_periods`` detected periods.

    Averaging starts and ends at section crossings so that whole periods are
    covered and the mean carries no phase bias. For (harvested) bilinear
    models the report also carries the theoretical means.
    """
    if n_periods < 3:
        raise ValueError("n_periods must be at least 3")
    estimate = detect_period(model, config, initial_state, section=section)
    section = estimate.section
    # first crossing happens within ~1 period; add slack for the tail
    horizon = estimate.period * (n_periods + 2.5)
    traj = integrate_with_events(model, config, 0.0, horizon, initial_state, (section,))
    if len(traj.events) < n_periods + 1:
        traj = integrate_with_events(
            model, config, 0.0, 1.6 * horizon, initial_state, (section,)
        )
    if len(traj.events) < n_periods + 1:
        raise NoPeriodError(
            f"found {len(traj.events)} crossings, need {n_periods + 1} for {n_periods} periods"
        )
    first, last = traj.events[0], traj.events[n_periods]
    means = _trapezoid_means(traj, first.time, first.state, last.time, last.state)
    period = (last.time - first.time) / n_periods
    lv = _as_lv(model)
    predicted = lv.predicted_means() if lv is not None else None
    return AveragesReport(means, n_periods, period, predicted, section)


# ---------------------------------------------------------------------------
# the disturbance of the averages


@dataclass(frozen=True)
class DisturbanceRow:
    effort: float
    simulated: np.ndarray
    predicted: np.ndarray

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.simulated - self.predicted)

    @property
    def rel_error(self) -> np.ndarray:
        return self.abs_error / np.abs(self.predicted)


def _admissible_effort(epsilon1: float, alpha: float, effort: float) -> None:
    if effort < 0.0:
        raise ValueError(f"effort must be non-negative, got {effort}")
    if alpha * effort >= epsilon1:
        raise ValueError(
            f"effort {effort} is inadmissible: alpha*effort = {alpha * effort} would cancel "
            f"the prey growth rate epsilon1 = {epsilon1} and the cyclic regime collapses"
        )


def verify_disturbance_law(
    epsilon1: float,
    gamma1: float,
    epsilon2: float,
    gamma2: float,
    alpha: float,
    beta: float,
    efforts,
    config: IntegratorConfig | None = None,
    n_periods: int = 5,
    initial_state=None,
) -> list[DisturbanceRow]:
    """Simulated vs predicted orbit means under uniform proportional removal.

    For each admissible effort f the harvested system is integrated and its
    period averages are compared with ((epsilon2 + beta*f)/gamma2,
    (epsilon1 - alpha*f)/gamma1): removing both species raises the prey mean
    and lowers the predator mean. Monotonicity across the efforts is checked
    for both the simulated and the predicted columns.
    """
    efforts = [float(f) for f in efforts]
    for f in efforts:
        _admissible_effort(epsilon1, alpha, f)
    if config is None:
        config = IntegratorConfig()
    if initial_state is None:
        initial_state = lv_equilibrium(epsilon1, gamma1, epsilon2, gamma2) * np.array([1.2, 0.8])
    rows = []
    for f in efforts:
        model = make_harvested_lotka_volterra(epsilon1, gamma1, epsilon2, gamma2, alpha, beta, f)
        predicted = lv_equilibrium(epsilon1, gamma1, epsilon2, gamma2, alpha, beta, f)
        report = time_averages(model, config, initial_state, n_periods)
        rows.append(DisturbanceRow(f, report.means, predicted))
    ordered = sorted(rows, key=lambda r: r.effort)
    for a, b in zip(ordered, ordered[1:]):
        if a.effort == b.effort:
            continue
        for label, lo, hi in (
            ("predicted", a.predicted, b.predicted),
            ("simulated", a.simulated, b.simulated),
        ):
            if not (hi[0] > lo[0] and hi[1] < lo[1]):
                raise NonConvergenceError(
                    f"{label} means violate the disturbance law between efforts "
                    f"{a.effort} and {b.effort}: {lo} -> {hi}"
                )
    return rows


# ---------------------------------------------------------------------------
# limit cycles


@dataclass(frozen=True)
class PoincareRecord:
    initial_state: np.ndarray
    kind: str                      # "limit_cycle" | "stable_focus"
    n_returns: int
    period: float | None
    fixed_point: np.ndarray | None
    extremes: tuple[tuple[float, float], ...] | None


@dataclass(frozen=True)
class LimitCycleReport:
    kind: str                      # "limit_cycle" | "stable_focus"
    period: float | None
    extremes: tuple[tuple[float, float], ...] | None
    fixed_point: np.ndarray
    records: tuple[PoincareRecord, ...]

    def __post_init__(self):
        if self.kind == "limit_cycle":
            if not (self.period and self.period > 0.0):
                raise ValueError("a limit cycle must have a positive period")
            for lo, hi in self.extremes:
                if not hi > lo:
                    raise ValueError("cycle extremes must satisfy max > min per species")


def _refine_extremum(ts, ys, idx, mode):
    """Parabola through the three samples around an interior extremum."""
    if idx == 0 or idx == len(ys) - 1:
        return float(ys[idx])
    t0, t1, t2 = ts[idx - 1], ts[idx], ts[idx + 1]
    y0, y1, y2 = ys[idx - 1], ys[idx], ys[idx + 1]
    denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
    if denom == 0.0:
        return float(y1)
    a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
    b = (t2 * t2 * (y0 - y1) + t1 * t1 * (y2 - y0) + t0 * t0 * (y1 - y2)) / denom
    if a == 0.0:
        return float(y1)
    t_v = -b / (2.0 * a)
    if not (min(t0, t2) <= t_v <= max(t0, t2)):
        return float(y1)
    c = y1 - a * t1 * t1 - b * t1
    value = a * t_v * t_v + b * t_v + c
    if mode == "max":
        return float(max(value, y1))
    return float(min(value, y1))


def _cycle_extremes(model, config, start_state, period):
    traj = integrate(model, config, 0.0, period, start_state)
    out = []
    for j in range(traj.states.shape[1]):
        col = traj.states[:, j]
        lo = _refine_extremum(traj.times, col, int(np.argmin(col)), "min")
        hi = _refine_extremum(traj.times, col, int(np.argmax(col)), "max")
        out.append((lo, hi))
    return tuple(out)


def _track_returns(model, config, ic, section, equilibrium, transient, return_tol, max_time):
    """Iterate the section return map until successive crossings settle."""
    crossings_t: list[float] = []
    crossings_s: list[np.ndarray] = []
    t = 0.0
    state = np.asarray(ic, dtype=float)
    chunk = max(transient / 5.0, 20.0)
    eq_scale = 1.0 + float(np.linalg.norm(equilibrium))
    while t < max_time:
        traj = integrate_with_events(model, config, t, t + chunk, state, (section,))
        for ev in traj.events:
            crossings_t.append(ev.time)
            crossings_s.append(ev.state)
            if len(crossings_s) >= 4:
                gap = float(np.max(np.abs(crossings_s[-1] - crossings_s[-2])))
                if gap < return_tol:
                    return crossings_t, crossings_s, True
        t += chunk
        state = traj.final_state
        # no more oscillation: the orbit has collapsed onto the equilibrium
        if not traj.events and float(np.linalg.norm(state - equilibrium)) < 1e-7 * eq_scale:
            return crossings_t, crossings_s, True
    return crossings_t, crossings_s, False


def find_limit_cycle(
    model: Model,
    config: IntegratorConfig,
    initial_states,
    transient: float = 500.0,
    return_tol: float = 1e-9,
    match_tol: float = 1e-6,
) -> LimitCycleReport:
    """Extract the attracting cycle shared by all initial conditions.

    Each initial condition is integrated on a section through the interior
    equilibrium until successive return-map points differ by less than
    ``return_tol`` (transient discarded implicitly; integration gives up at
    ``2 * transient`` time units). All starts must land on the same fixed
    point (within ``match_tol``) and period (within ``match_tol`` relative);
    returns that shrink onto the equilibrium instead yield a stable-focus
    report. Disagreement raises :class:`NonConvergenceError`.
    """
    ics = [np.asarray(s, dtype=float) for s in initial_states]
    if len(ics) < 2:
        raise ValueError("need at least two initial states")
    for s in ics:
        _check_state(model, s, allow_zero=False)
    for i, a in enumerate(ics):
        for b in ics[i + 1:]:
            if np.array_equal(a, b):
                raise ValueError("initial states must be distinct")

    equilibrium = interior_equilibrium(model, guess=np.mean(np.vstack(ics), axis=0))
    section = SectionSpec(species_index=0, level=float(equilibrium[0]), direction="increasing")
    focus_tol = 1e-4 * (1.0 + float(np.linalg.norm(equilibrium)))

    records = []
    for ic in ics:
        times, states, settled = _track_returns(
            model, config, ic, section, equilibrium, transient, return_tol, 2.0 * transient
        )
        if not settled:
            raise NonConvergenceError(
                f"return map did not settle from initial state {ic} within t={2.0 * transient}: "
                "successive returns keep changing (no isolated attracting cycle?)"
            )
        if len(states) < 4 or float(np.max(np.abs(states[-1] - equilibrium))) < focus_tol:
            records.append(PoincareRecord(ic, "stable_focus", len(states), None, None, None))
            continue
        period = times[-1] - times[-2]
        fixed_point = states[-1]
        extremes = _cycle_extremes(model, config, fixed_point, period)
        records.append(
            PoincareRecord(ic, "limit_cycle", len(states), period, fixed_point, extremes)
        )

    kinds = {r.kind for r in records}
    if kinds == {"stable_focus"}:
        return LimitCycleReport("stable_focus", None, None, equilibrium, tuple(records))
    if len(kinds) > 1:
        raise NonConvergenceError(
            "initial conditions disagree: some settle on the equilibrium, some on a cycle"
        )

    base = records[0]
    for rec in records[1:]:
        gap = float(np.max(np.abs(rec.fixed_point - base.fixed_point)))
        if gap > match_tol:
            raise NonConvergenceError(
                f"initial conditions converge to different section fixed points "
                f"({gap:.3e} apart > {match_tol}): the orbits are not one shared cycle"
            )
        if abs(rec.period - base.period) > match_tol * base.period:
            raise NonConvergenceError(
                f"initial conditions converge to different periods "
                f"({base.period} vs {rec.period})"
            )
    period = float(np.mean([r.period for r in records]))
    extremes = tuple(
        (float(np.mean([r.extremes[j][0] for r in records])),
         float(np.mean([r.extremes[j][1] for r in records])))
        for j in range(model.n_species)
    )
    return LimitCycleReport("limit_cycle", period, extremes, base.fixed_point, tuple(records))
