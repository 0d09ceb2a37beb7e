"""The textbook burglary/earthquake alarm network.

CPTs are the standard ones from Russell and Norvig's textbook, shipped as
model data.  All variables are binary with states ``("false", "true")``.
"""

from __future__ import annotations

import numpy as np

from ..core import discrete
from ..inference import FactorGraphModel
from ..table import TableFactor

STATES = ("false", "true")

P_BURGLARY = 0.001
P_EARTHQUAKE = 0.002
# P(alarm | burglary, earthquake)
P_ALARM = {(1, 1): 0.95, (1, 0): 0.94, (0, 1): 0.29, (0, 0): 0.001}
P_JOHN = {1: 0.90, 0: 0.05}
P_MARY = {1: 0.70, 0: 0.01}


def _bernoulli(p):
    return np.array([1.0 - p, p])


def burglary_model() -> FactorGraphModel:
    B, E, A, J, M = (discrete(n, 2, STATES) for n in "BEAJM")
    alarm = np.zeros((2, 2, 2))
    for (b, e), p in P_ALARM.items():
        alarm[b, e] = _bernoulli(p)
    factors = [
        TableFactor([B], _bernoulli(P_BURGLARY)),
        TableFactor([E], _bernoulli(P_EARTHQUAKE)),
        TableFactor([B, E, A], alarm),
        TableFactor([A, J], np.stack([_bernoulli(P_JOHN[a]) for a in (0, 1)])),
        TableFactor([A, M], np.stack([_bernoulli(P_MARY[a]) for a in (0, 1)])),
    ]
    return FactorGraphModel((B, E, A, J, M), factors, "burglary", "Burglary/earthquake alarm network")
