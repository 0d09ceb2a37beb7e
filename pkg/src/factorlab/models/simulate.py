"""Ancestral simulation of state-space models and the simulation CSV format."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ..core import multiply, rename, sum_out
from ..errors import SchemaError
from ..inference import StateSpaceModel
from ..sample import as_seed, child_seed, sample_prior


@dataclass
class Simulation:
    """Per-step true states and observations, keyed by variable name."""

    states: dict[str, np.ndarray]
    observations: dict[str, np.ndarray]

    @property
    def T(self) -> int:
        return len(next(iter(self.observations.values())))

    def observation_list(self) -> list[dict]:
        return [{k: v[t].item() for k, v in self.observations.items()} for t in range(self.T)]


def simulate(model: StateSpaceModel, T: int, seed=None) -> Simulation:
    """Draw a state trajectory and observations for ``T`` steps.

    A single particle is pushed through the model's own factors, so any
    model whose factors can extend particles can be simulated.
    """
    root = as_seed(seed)
    s = sample_prior(model.prior, 1, child_seed(root, "simulate"))
    obs_names = [v.name for v in model.observed]
    states = {v.name: [] for v in model.state}
    observations = {n: [] for n in obs_names}
    for _ in range(int(T)):
        s = multiply(s, *model.transition)
        s = rename(sum_out(s, model.state_names), model.to_current)
        o = multiply(s, *model.observation)
        for v in model.state:
            states[v.name].append(o.columns[v.name][0])
        for n in obs_names:
            observations[n].append(o.columns[n][0])
        s = sum_out(o, obs_names)
    return Simulation(
        {k: np.asarray(v) for k, v in states.items()},
        {k: np.asarray(v) for k, v in observations.items()},
    )


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def simulation_csv(model: StateSpaceModel, sim: Simulation) -> str:
    """CSV text: ``t``, each state as ``<name>_true``, each observation, lowercased."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"{v.name.lower()}_true" for v in model.state] + [v.name.lower() for v in model.observed])
    for t in range(sim.T):
        row = [str(t + 1)]
        row += [fmt(sim.states[v.name][t]) for v in model.state]
        row += [fmt(sim.observations[v.name][t]) for v in model.observed]
        w.writerow(row)
    return buf.getvalue()


def read_observations(model: StateSpaceModel, text: str) -> list[dict]:
    """Observations from CSV text whose columns include each observed variable (lowercased)."""
    reader = csv.DictReader(io.StringIO(text))
    fields = {f.strip().lower(): f for f in reader.fieldnames or []}
    cols = {}
    for v in model.observed:
        key = v.name.lower()
        if key not in fields:
            raise SchemaError(f"data has no column for observed variable {v.name!r}", field=key)
        cols[v.name] = fields[key]
    out = []
    for i, row in enumerate(reader, start=2):
        obs = {}
        for v in model.observed:
            raw = row[cols[v.name]]
            try:
                obs[v.name] = int(raw) if v.discrete else float(raw)
            except (TypeError, ValueError):
                raise SchemaError(f"line {i}: bad value {raw!r}", field=v.name.lower()) from None
        out.append(obs)
    if not out:
        raise SchemaError("data has no rows", field="data")
    return out
