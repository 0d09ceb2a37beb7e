"""Inference written only against the generic factor operations.

Nothing here knows which representation a factor uses: the same filter
runs on tables, Gaussians, particle sets and hybrid factors, and the same
variable elimination on any model whose factors support the operations.
Representation-specific approximations enter only through :func:`project`
(moment matching, resampling), applied after each filter step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    Factor,
    Variable,
    as_assignment,
    divide,
    log_scalar,
    multiply,
    normalize,
    project,
    reduce,
    rename,
    sum_out,
)
from .errors import EmptyQuery, FactorError, MissingVariable, StepError, ZeroMass


def _as_tuple(factors) -> tuple[Factor, ...]:
    if isinstance(factors, Factor):
        return (factors,)
    return tuple(factors)


@dataclass(frozen=True)
class FactorGraphModel:
    """A set of declared variables and the factors whose product is the model."""

    variables: tuple[Variable, ...]
    factors: tuple[Factor, ...]
    name: str = ""
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "factors", _as_tuple(self.factors))
        declared = {v.name: v for v in self.variables}
        if len(declared) != len(self.variables):
            raise ValueError("duplicate variable declarations")
        used = set()
        for f in self.factors:
            for v in f.scope:
                if declared.get(v.name) != v:
                    raise MissingVariable(f"factor over {f.names} uses undeclared variable {v.name!r}")
                used.add(v.name)
        dangling = set(declared) - used
        if dangling:
            raise ValueError(f"variables in no factor: {sorted(dangling)}")

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise MissingVariable(f"unknown variable {name!r}")


@dataclass(frozen=True)
class StateSpaceModel:
    """Time-homogeneous state-space model.

    ``next_state[i]`` is the next-step copy of ``state[i]``.  The prior is
    over the state, the transition over state and next state, the
    observation over state and observed variables.  Each of the three may
    be given as a product of several factors.
    """

    state: tuple[Variable, ...]
    next_state: tuple[Variable, ...]
    observed: tuple[Variable, ...]
    prior: tuple[Factor, ...]
    transition: tuple[Factor, ...]
    observation: tuple[Factor, ...]
    name: str = ""
    description: str = ""

    def __post_init__(self):
        for attr in ("state", "next_state", "observed"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        for attr in ("prior", "transition", "observation"):
            object.__setattr__(self, attr, _as_tuple(getattr(self, attr)))
        if len(self.state) != len(self.next_state):
            raise ValueError("state and next_state must pair up")
        for a, b in zip(self.state, self.next_state):
            if a.cardinality != b.cardinality:
                raise ValueError(f"{a.name} and {b.name} have different domains")
        names = [v.name for v in self.state + self.next_state + self.observed]
        if len(set(names)) != len(names):
            raise ValueError("state, next-state and observed variables must be distinct")
        state, nxt, obs = set(self.state), set(self.next_state), set(self.observed)
        self._check("prior", self.prior, state)
        self._check("transition", self.transition, state | nxt)
        self._check("observation", self.observation, state | obs)

    @staticmethod
    def _check(what, factors, allowed):
        if not factors:
            raise ValueError(f"{what} needs at least one factor")
        for f in factors:
            extra = [v.name for v in f.scope if v not in allowed]
            if extra:
                raise MissingVariable(f"{what} factor over {f.names} uses {extra}")

    @property
    def state_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.state)

    @property
    def next_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.next_state)

    @property
    def to_next(self) -> dict[str, Variable]:
        return {a.name: b for a, b in zip(self.state, self.next_state)}

    @property
    def to_current(self) -> dict[str, Variable]:
        return {b.name: a for a, b in zip(self.state, self.next_state)}


@dataclass
class StepResult:
    posterior: Factor
    loglik: float
    predicted: Factor


@dataclass
class FilterResult:
    """Per-step filtered posteriors, one-step predictions and log-likelihood increments."""

    posteriors: list[Factor] = field(default_factory=list)
    predicted: list[Factor] = field(default_factory=list)
    loglik: list[float] = field(default_factory=list)

    @property
    def total_loglik(self) -> float:
        return float(np.sum(self.loglik))

    @property
    def cumulative_loglik(self) -> np.ndarray:
        return np.cumsum(self.loglik)


# ---------------------------------------------------------------------------
# filtering and smoothing
# ---------------------------------------------------------------------------


def initial_belief(model: StateSpaceModel, projection: Callable[[Factor], Factor] = project) -> Factor:
    return projection(multiply(*model.prior))


def predict(belief: Factor, model: StateSpaceModel) -> Factor:
    """One-step prediction: integrate the current state out of belief times transition."""
    joint = multiply(belief, *model.transition)
    return rename(sum_out(joint, model.state_names), model.to_current)


def correct(predicted: Factor, model: StateSpaceModel, y, projection=project) -> tuple[Factor, float]:
    """Condition on observation ``y``; returns the posterior and ``log p(y | past)``."""
    y = as_assignment(y)
    likelihood = multiply(*(reduce(f, y) for f in model.observation))
    joint = multiply(predicted, likelihood)
    evidence = sum_out(joint, joint.names)
    loglik = log_scalar(evidence)
    if loglik == -np.inf:
        raise ZeroMass("the observation has zero probability under the prediction")
    return projection(divide(joint, evidence)), loglik


def filter_step(belief: Factor, model: StateSpaceModel, y, projection=project) -> StepResult:
    predicted = predict(belief, model)
    posterior, loglik = correct(predicted, model, y, projection)
    return StepResult(posterior, loglik, predicted)


def filter(
    model: StateSpaceModel,
    observations: Sequence,
    initial: Factor | None = None,
    projection: Callable[[Factor], Factor] = project,
) -> FilterResult:
    """Run the filter over ``observations`` (one assignment per step).

    ``initial`` is the belief over the state before the first observation;
    it defaults to the projected product of the model's prior factors.
    Errors are re-raised as :class:`StepError` carrying the 1-based step.
    """
    if not len(observations):
        raise ValueError("need at least one observation")
    belief = initial_belief(model, projection) if initial is None else initial
    out = FilterResult()
    for t, y in enumerate(observations, start=1):
        try:
            step = filter_step(belief, model, y, projection)
        except FactorError as err:
            raise StepError(t, err) from err
        out.posteriors.append(step.posterior)
        out.predicted.append(step.predicted)
        out.loglik.append(step.loglik)
        belief = step.posterior
    return out


def smooth(
    model: StateSpaceModel,
    observations: Sequence,
    initial: Factor | None = None,
    projection: Callable[[Factor], Factor] = project,
    filtered: FilterResult | None = None,
) -> list[Factor]:
    """Smoothed posteriors ``p(x_t | y_1..y_T)`` by a backward pass of divisions.

    Each backward step forms the two-slice joint of the filtered posterior
    at ``t`` and the transition, divides it by its next-state marginal to
    get the backward conditional, multiplies by the smoothed belief at
    ``t + 1`` and integrates the next state out.  The continuous part is
    conditioned per discrete configuration of both slices.  The discrete
    part weighs the smoothed belief by the joint's discrete masses over
    their next-state marginal, so each conditional is measured against the
    approximation it came from.  For tables and Gaussians this is exact.

    Raises
    ------
    StepError
        Wrapping :class:`DivisionByZero` when the smoothed belief puts mass
        on a discrete next state the prediction rules out, or any other
        factor error, with the 1-based step attached.
    """
    res = filtered if filtered is not None else filter(model, observations, initial, projection)
    T = len(res.posteriors)
    cont = [v.name for v in model.state if not v.discrete]
    disc = [v.name for v in model.state if v.discrete]
    next_cont = [v.name for v in model.next_state if not v.discrete]
    smoothed: list[Factor] = [None] * T
    smoothed[-1] = res.posteriors[-1]
    for t in range(T - 2, -1, -1):
        try:
            joint = projection(multiply(res.posteriors[t], *model.transition))
            pair = sum_out(joint, cont) if cont else joint
            backward = divide(joint, pair)
            nxt = rename(smoothed[t + 1], model.to_next)
            if disc:
                masses = sum_out(pair, next_cont) if next_cont else pair
                backward = multiply(backward, masses)
                nxt = divide(nxt, sum_out(masses, disc))
            smoothed[t] = projection(sum_out(multiply(backward, nxt), model.next_names))
        except FactorError as err:
            raise StepError(t + 1, err) from err
    return smoothed


# ---------------------------------------------------------------------------
# variable elimination
# ---------------------------------------------------------------------------


def _names(vars_) -> list[str]:
    if isinstance(vars_, (str, Variable)):
        vars_ = [vars_]
    return [v.name if isinstance(v, Variable) else str(v) for v in vars_]


def elimination_order(model: FactorGraphModel, query, evidence=None) -> list[str]:
    """Greedy min-fill order over the non-query, unobserved variables (ties by name)."""
    query = set(_names(query))
    observed = set(as_assignment(evidence))
    nodes = [v.name for v in model.variables if v.name not in observed]
    adj: dict[str, set[str]] = {n: set() for n in nodes}
    for f in model.factors:
        live = [n for n in f.names if n not in observed]
        for a in live:
            adj[a].update(b for b in live if b != a)
    todo = sorted(n for n in nodes if n not in query)
    order = []
    while todo:

        def fill(n):
            nb = sorted(adj[n])
            return sum(1 for i, a in enumerate(nb) for b in nb[i + 1 :] if b not in adj[a])

        best = min(todo, key=lambda n: (fill(n), n))
        nb = adj.pop(best)
        for a in nb:
            adj[a].discard(best)
            adj[a].update(b for b in nb if b != a)
        todo.remove(best)
        order.append(best)
    return order


def variable_elimination(model: FactorGraphModel, query, evidence=None, order=None) -> Factor:
    """Normalised posterior over ``query`` given ``evidence``."""
    query = _names(query)
    if not query:
        raise EmptyQuery("no query variables")
    evidence = as_assignment(evidence)
    for name in list(query) + list(evidence):
        model.variable(name)
    if set(query) & set(evidence):
        raise EmptyQuery(f"query variables {sorted(set(query) & set(evidence))} are observed")
    factors = [reduce(f, evidence) for f in model.factors]
    if order is None:
        order = elimination_order(model, query, evidence)
    for name in _names(order):
        involved = [f for f in factors if name in f.names]
        if not involved:
            continue
        factors = [f for f in factors if name not in f.names]
        factors.append(sum_out(multiply(*involved), [name]))
    return normalize(multiply(*factors))
