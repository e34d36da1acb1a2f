"""Predator-prey model family.

A :class:`Model` is a set of species, one growth law per species, directed
predation links (each with a functional response and a loss/gain rate pair),
and optional proportional harvesting. The vector field and its analytic
Jacobian are pure functions of the state, so models can be evaluated
concurrently without locking.

All quantities are dimensionless; rates are per unit time in whatever
consistent unit system the coefficients imply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import SingularPointError

__all__ = [
    "GrowthKind",
    "GrowthTerm",
    "ResponseKind",
    "FunctionalResponse",
    "SpeciesSpec",
    "InteractionTerm",
    "HarvestTerm",
    "Model",
    "response_value",
    "vector_field",
    "jacobian",
    "make_lotka_volterra",
    "make_harvested_lotka_volterra",
    "make_rosenzweig_macarthur",
    "make_three_species_chain",
]


def _require_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def _require_nonnegative(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise ValueError(f"{name} must be a non-negative finite number, got {value!r}")
    return value


class GrowthKind(Enum):
    MALTHUS_GROWTH = "malthus_growth"
    MALTHUS_MORTALITY = "malthus_mortality"
    VERHULST_GROWTH = "verhulst_growth"
    VERHULST_MORTALITY = "verhulst_mortality"


_VERHULST_KINDS = (GrowthKind.VERHULST_GROWTH, GrowthKind.VERHULST_MORTALITY)


@dataclass(frozen=True)
class GrowthTerm:
    """Per-species natural increase or decrease law.

    * malthus_growth:      eps * N
    * malthus_mortality:  -eps * N
    * verhulst_growth:     eps * N * (1 - N/K)
    * verhulst_mortality: -eps * N * (1 + N/K)

    ``capacity`` (K) is required for the Verhulst kinds and rejected for the
    Malthus kinds.
    """

    kind: GrowthKind
    epsilon: float
    capacity: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "epsilon", _require_positive("epsilon", self.epsilon))
        if self.kind in _VERHULST_KINDS:
            if self.capacity is None:
                raise ValueError(f"{self.kind.value} requires a capacity")
            object.__setattr__(self, "capacity", _require_positive("capacity", self.capacity))
        elif self.capacity is not None:
            raise ValueError(f"{self.kind.value} does not take a capacity")

    @classmethod
    def malthus_growth(cls, epsilon: float) -> "GrowthTerm":
        return cls(GrowthKind.MALTHUS_GROWTH, epsilon)

    @classmethod
    def malthus_mortality(cls, epsilon: float) -> "GrowthTerm":
        return cls(GrowthKind.MALTHUS_MORTALITY, epsilon)

    @classmethod
    def verhulst_growth(cls, epsilon: float, capacity: float) -> "GrowthTerm":
        return cls(GrowthKind.VERHULST_GROWTH, epsilon, capacity)

    @classmethod
    def verhulst_mortality(cls, epsilon: float, capacity: float) -> "GrowthTerm":
        return cls(GrowthKind.VERHULST_MORTALITY, epsilon, capacity)

    def rate(self, density: float) -> float:
        """Contribution to dN/dt at the given density."""
        e, k = self.epsilon, self.kind
        if k is GrowthKind.MALTHUS_GROWTH:
            return e * density
        if k is GrowthKind.MALTHUS_MORTALITY:
            return -e * density
        if k is GrowthKind.VERHULST_GROWTH:
            return e * density * (1.0 - density / self.capacity)
        return -e * density * (1.0 + density / self.capacity)

    def slope(self, density: float) -> float:
        """d(rate)/dN at the given density."""
        e, k = self.epsilon, self.kind
        if k is GrowthKind.MALTHUS_GROWTH:
            return e
        if k is GrowthKind.MALTHUS_MORTALITY:
            return -e
        if k is GrowthKind.VERHULST_GROWTH:
            return e * (1.0 - 2.0 * density / self.capacity)
        return -e * (1.0 + 2.0 * density / self.capacity)

    def _scalar_rate(self):
        e, k = self.epsilon, self.kind
        if k is GrowthKind.MALTHUS_GROWTH:
            return lambda x: e * x
        if k is GrowthKind.MALTHUS_MORTALITY:
            return lambda x: -e * x
        cap = self.capacity
        if k is GrowthKind.VERHULST_GROWTH:
            return lambda x: e * x * (1.0 - x / cap)
        return lambda x: -e * x * (1.0 + x / cap)


class ResponseKind(Enum):
    BILINEAR = "bilinear"
    GAUSE = "gause"
    HOLLING2 = "holling2"
    HOLLING3 = "holling3"


@dataclass(frozen=True)
class FunctionalResponse:
    """Prey-density dependence phi(N1) of the per-predator consumption rate.

    * bilinear: phi = N1                    (mass-action encounters)
    * gause:    phi = N1**g, 0 < g <= 1     (predator satiety, power law)
    * holling2: phi = N1 / (h + N1)         (saturating, half value at N1 = h)
    * holling3: phi = N1**2 / (h**2 + N1**2)

    phi(0) = 0 for every kind; the Holling forms increase strictly towards 1.
    """

    kind: ResponseKind
    g: float | None = None
    h: float | None = None

    def __post_init__(self):
        if self.kind is ResponseKind.GAUSE:
            if self.g is None:
                raise ValueError("gause response requires exponent g")
            g = float(self.g)
            if not math.isfinite(g) or not 0.0 < g <= 1.0:
                raise ValueError(f"gause exponent must satisfy 0 < g <= 1, got {g!r}")
            object.__setattr__(self, "g", g)
            if self.h is not None:
                raise ValueError("gause response does not take h")
        elif self.kind in (ResponseKind.HOLLING2, ResponseKind.HOLLING3):
            if self.h is None:
                raise ValueError(f"{self.kind.value} response requires half-saturation h")
            object.__setattr__(self, "h", _require_positive("h", self.h))
            if self.g is not None:
                raise ValueError(f"{self.kind.value} response does not take g")
        else:
            if self.g is not None or self.h is not None:
                raise ValueError("bilinear response takes no parameters")

    @classmethod
    def bilinear(cls) -> "FunctionalResponse":
        return cls(ResponseKind.BILINEAR)

    @classmethod
    def gause(cls, g: float) -> "FunctionalResponse":
        return cls(ResponseKind.GAUSE, g=g)

    @classmethod
    def holling2(cls, h: float) -> "FunctionalResponse":
        return cls(ResponseKind.HOLLING2, h=h)

    @classmethod
    def holling3(cls, h: float) -> "FunctionalResponse":
        return cls(ResponseKind.HOLLING3, h=h)

    def value(self, prey_density: float) -> float:
        x = prey_density
        k = self.kind
        if k is ResponseKind.BILINEAR:
            return x
        if k is ResponseKind.GAUSE:
            return x**self.g
        if k is ResponseKind.HOLLING2:
            return x / (self.h + x)
        return x * x / (self.h * self.h + x * x)

    def slope(self, prey_density: float) -> float:
        """d(phi)/dN1; undefined at 0 for the Gause kind with g < 1."""
        x = prey_density
        k = self.kind
        if k is ResponseKind.BILINEAR:
            return 1.0
        if k is ResponseKind.GAUSE:
            if self.g == 1.0:
                return 1.0
            if x == 0.0:
                raise SingularPointError(
                    f"gause response with g={self.g} has unbounded slope at zero prey density"
                )
            return self.g * x ** (self.g - 1.0)
        if k is ResponseKind.HOLLING2:
            return self.h / (self.h + x) ** 2
        hh = self.h * self.h
        return 2.0 * hh * x / (hh + x * x) ** 2

    def _scalar_value(self):
        k = self.kind
        if k is ResponseKind.BILINEAR:
            return lambda x: x
        if k is ResponseKind.GAUSE:
            g = self.g
            return lambda x: x**g
        h = self.h
        if k is ResponseKind.HOLLING2:
            return lambda x: x / (h + x)
        hh = h * h
        return lambda x: x * x / (hh + x * x)


def response_value(response: FunctionalResponse, prey_density: float) -> float:
    """Evaluate phi at a non-negative prey density."""
    if not math.isfinite(prey_density) or prey_density < 0.0:
        raise ValueError(f"prey density must be non-negative, got {prey_density!r}")
    return response.value(float(prey_density))


@dataclass(frozen=True)
class SpeciesSpec:
    name: str
    initial_density: float

    def __post_init__(self):
        if not self.name:
            raise ValueError("species name must be non-empty")
        object.__setattr__(
            self, "initial_density", _require_nonnegative("initial_density", self.initial_density)
        )


@dataclass(frozen=True)
class InteractionTerm:
    """One predator-on-prey link.

    Contributes ``-prey_loss_rate * phi(N_prey) * N_pred`` to the prey and
    ``+predator_gain_rate * phi(N_prey) * N_pred`` to the predator.
    """

    prey_index: int
    predator_index: int
    response: FunctionalResponse
    prey_loss_rate: float
    predator_gain_rate: float

    def __post_init__(self):
        if self.prey_index < 0 or self.predator_index < 0:
            raise ValueError("species indices must be non-negative")
        if self.prey_index == self.predator_index:
            raise ValueError("a species cannot prey on itself")
        object.__setattr__(
            self, "prey_loss_rate", _require_positive("prey_loss_rate", self.prey_loss_rate)
        )
        object.__setattr__(
            self,
            "predator_gain_rate",
            _require_positive("predator_gain_rate", self.predator_gain_rate),
        )


@dataclass(frozen=True)
class HarvestTerm:
    """Uniform proportional removal: contributes ``-(coefficient * effort) * N``."""

    species_index: int
    coefficient: float
    effort: float

    def __post_init__(self):
        if self.species_index < 0:
            raise ValueError("species index must be non-negative")
        object.__setattr__(self, "coefficient", _require_nonnegative("coefficient", self.coefficient))
        object.__setattr__(self, "effort", _require_nonnegative("effort", self.effort))

    @property
    def rate(self) -> float:
        return self.coefficient * self.effort


@dataclass(frozen=True)
class Model:
    """An autonomous n-species model: growth + predation links + harvesting."""

    species: tuple[SpeciesSpec, ...]
    growth: tuple[GrowthTerm, ...]
    interactions: tuple[InteractionTerm, ...] = ()
    harvests: tuple[HarvestTerm, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "growth", tuple(self.growth))
        object.__setattr__(self, "interactions", tuple(self.interactions))
        object.__setattr__(self, "harvests", tuple(self.harvests))
        n = len(self.species)
        if n == 0:
            raise ValueError("a model needs at least one species")
        if len(self.growth) != n:
            raise ValueError(f"expected {n} growth terms, got {len(self.growth)}")
        names = [s.name for s in self.species]
        if len(set(names)) != n:
            raise ValueError(f"species names must be unique, got {names}")
        for it in self.interactions:
            if it.prey_index >= n or it.predator_index >= n:
                raise ValueError(f"interaction indices out of range for {n} species")
        seen = set()
        for hv in self.harvests:
            if hv.species_index >= n:
                raise ValueError(f"harvest index out of range for {n} species")
            if hv.species_index in seen:
                raise ValueError(f"species {hv.species_index} has more than one harvest term")
            seen.add(hv.species_index)

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def species_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.species)

    def initial_state(self) -> np.ndarray:
        return np.array([s.initial_density for s in self.species], dtype=float)


def _harvest_rates(model: Model) -> list[float]:
    rates = [0.0] * model.n_species
    for hv in model.harvests:
        rates[hv.species_index] = hv.rate
    return rates


def compile_rhs(model: Model):
    """Build a fast, non-validating ``state -> dstate/dt`` closure.

    Used by the integrators; callers wanting input checks should go through
    :func:`vector_field`.
    """
    growth_fns = [term._scalar_rate() for term in model.growth]
    harvest = _harvest_rates(model)
    links = [
        (it.prey_index, it.predator_index, it.response._scalar_value(),
         it.prey_loss_rate, it.predator_gain_rate)
        for it in model.interactions
    ]

    def rhs(state: np.ndarray) -> np.ndarray:
        v = state.tolist()
        out = [growth_fns[i](v[i]) - harvest[i] * v[i] for i in range(len(v))]
        for prey, pred, phi, loss, gain in links:
            flow = phi(v[prey]) * v[pred]
            out[prey] -= loss * flow
            out[pred] += gain * flow
        return np.array(out)

    return rhs


def _check_state(model: Model, state, allow_zero: bool = True) -> np.ndarray:
    arr = np.asarray(state, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != model.n_species:
        raise ValueError(
            f"state must be a length-{model.n_species} vector, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"state entries must be finite, got {arr}")
    if np.any(arr < 0.0):
        raise ValueError(f"state entries must be non-negative, got {arr}")
    if not allow_zero and np.any(arr == 0.0):
        raise ValueError(f"state entries must be strictly positive, got {arr}")
    return arr


def vector_field(model: Model, state) -> np.ndarray:
    """Evaluate dN/dt at a non-negative state.

    Each species receives its growth contribution minus proportional harvest,
    plus gain terms for every link where it is the predator and loss terms for
    every link where it is the prey.
    """
    arr = _check_state(model, state)
    return compile_rhs(model)(arr)


def jacobian(model: Model, state) -> np.ndarray:
    """Analytic Jacobian d(dN_i/dt)/dN_j at the given state.

    Densities must be non-negative; a zero prey density under a Gause response
    with g < 1 raises :class:`SingularPointError` because the response slope
    is unbounded there.
    """
    return _jacobian_core(model, _check_state(model, state))


def _jacobian_core(model: Model, arr: np.ndarray) -> np.ndarray:
    n = model.n_species
    jac = np.zeros((n, n))
    for i, term in enumerate(model.growth):
        jac[i, i] = term.slope(arr[i])
    for i, rate in enumerate(_harvest_rates(model)):
        jac[i, i] -= rate
    for it in model.interactions:
        i, j = it.prey_index, it.predator_index
        phi = it.response.value(arr[i])
        dphi = it.response.slope(arr[i])
        jac[i, i] -= it.prey_loss_rate * dphi * arr[j]
        jac[i, j] -= it.prey_loss_rate * phi
        jac[j, i] += it.predator_gain_rate * dphi * arr[j]
        jac[j, j] += it.predator_gain_rate * phi
    return jac


def make_lotka_volterra(
    epsilon1: float,
    gamma1: float,
    epsilon2: float,
    gamma2: float,
    initial_densities: tuple[float, float] = (1.0, 1.0),
) -> Model:
    """Two species, one of which devours the other.

    Prey grows at rate ``epsilon1`` in the predator's absence, the predator
    dies off at rate ``epsilon2`` without prey, and a mass-action encounter
    term transfers density at rates ``gamma1`` (prey loss) / ``gamma2``
    (predator gain).
    """
    for name, v in (("epsilon1", epsilon1), ("gamma1", gamma1),
                    ("epsilon2", epsilon2), ("gamma2", gamma2)):
        _require_positive(name, v)
    return Model(
        species=(
            SpeciesSpec("prey", initial_densities[0]),
            SpeciesSpec("predator", initial_densities[1]),
        ),
        growth=(
            GrowthTerm.malthus_growth(epsilon1),
            GrowthTerm.malthus_mortality(epsilon2),
        ),
        interactions=(
            InteractionTerm(0, 1, FunctionalResponse.bilinear(), gamma1, gamma2),
        ),
    )


def make_harvested_lotka_volterra(
    epsilon1: float,
    gamma1: float,
    epsilon2: float,
    gamma2: float,
    alpha: float,
    beta: float,
    effort: float,
    initial_densities: tuple[float, float] = (1.0, 1.0),
) -> Model:
    """Lotka-Volterra with uniform proportional removal of both species.

    Removal rates are ``alpha * effort`` for the prey and ``beta * effort``
    for the predator.
    """
    base = make_lotka_volterra(epsilon1, gamma1, epsilon2, gamma2, initial_densities)
    harvests = (
        HarvestTerm(0, alpha, effort),
        HarvestTerm(1, beta, effort),
    )
    return Model(base.species, base.growth, base.interactions, harvests)


def make_rosenzweig_macarthur(
    epsilon1: float,
    self_limit: float,
    gamma1: float,
    epsilon2: float,
    gamma2: float,
    h: float,
    initial_densities: tuple[float, float] = (1.0, 1.0),
) -> Model:
    """Logistic prey plus a saturating (Holling type II) predator.

    ``self_limit`` is the coefficient of the prey's quadratic self-limitation;
    the equivalent carrying capacity is ``epsilon1 / self_limit``.
    """
    for name, v in (("epsilon1", epsilon1), ("self_limit", self_limit), ("gamma1", gamma1),
                    ("epsilon2", epsilon2), ("gamma2", gamma2), ("h", h)):
        _require_positive(name, v)
    return Model(
        species=(
            SpeciesSpec("prey", initial_densities[0]),
            SpeciesSpec("predator", initial_densities[1]),
        ),
        growth=(
            GrowthTerm.verhulst_growth(epsilon1, epsilon1 / self_limit),
            GrowthTerm.malthus_mortality(epsilon2),
        ),
        interactions=(
            InteractionTerm(0, 1, FunctionalResponse.holling2(h), gamma1, gamma2),
        ),
    )


def make_three_species_chain(
    epsilon1: float,
    epsilon2: float,
    epsilon3: float,
    gamma1: float,
    gamma2: float,
    gamma3: float,
    gamma4: float,
    initial_densities: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> Model:
    """Linear food chain: top predator eats middle species eats basal prey.

    The basal species grows Malthusian at ``epsilon1``; the middle and top
    species decay at ``epsilon2`` / ``epsilon3`` without food. ``gamma1`` /
    ``gamma2`` are the loss/gain rates of the lower link, ``gamma3`` /
    ``gamma4`` those of the upper link; both links are bilinear.
    """
    for name, v in (("epsilon1", epsilon1), ("epsilon2", epsilon2), ("epsilon3", epsilon3),
                    ("gamma1", gamma1), ("gamma2", gamma2), ("gamma3", gamma3), ("gamma4", gamma4)):
        _require_positive(name, v)
    return Model(
        species=(
            SpeciesSpec("basal", initial_densities[0]),
            SpeciesSpec("middle", initial_densities[1]),
            SpeciesSpec("top", initial_densities[2]),
        ),
        growth=(
            GrowthTerm.malthus_growth(epsilon1),
            GrowthTerm.malthus_mortality(epsilon2),
            GrowthTerm.malthus_mortality(epsilon3),
        ),
        interactions=(
            InteractionTerm(0, 1, FunctionalResponse.bilinear(), gamma1, gamma2),
            InteractionTerm(1, 2, FunctionalResponse.bilinear(), gamma3, gamma4),
        ),
    )
