"""Linear-Gaussian and discrete hidden-Markov state-space models."""

from __future__ import annotations

import numpy as np

from ..core import continuous, discrete
from ..gaussian import CanonicalGaussian, linear_gaussian
from ..inference import StateSpaceModel
from ..table import TableFactor


def _matrix(a, rows=None):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if rows is not None and a.shape[0] != rows:
        a = a.reshape(rows, -1)
    return a


def linear_gaussian_ssm(A, Q, C, R, m0, P0, name: str = "linear-gaussian") -> StateSpaceModel:
    """``x' = A x + w``, ``y = C x + v`` with ``w ~ N(0, Q)``, ``v ~ N(0, R)``, ``x_0 ~ N(m0, P0)``.

    State variables are ``x1..xd`` (next step ``x1_next``...), observations
    ``y1..yk``.
    """
    m0 = np.atleast_1d(np.asarray(m0, dtype=float))
    d = len(m0)
    A, Q, P0 = _matrix(A, d), _matrix(Q, d), _matrix(P0, d)
    C = _matrix(C)
    k = C.shape[0]
    R = _matrix(R, k)
    xs = [continuous(f"x{i + 1}") for i in range(d)]
    xn = [continuous(f"x{i + 1}_next") for i in range(d)]
    ys = [continuous(f"y{i + 1}") for i in range(k)]
    return StateSpaceModel(
        xs,
        xn,
        ys,
        CanonicalGaussian.from_moments(xs, m0, P0),
        linear_gaussian(xs, xn, A, np.zeros(d), Q),
        linear_gaussian(xs, ys, C, np.zeros(k), R),
        name,
        f"{d}-D linear-Gaussian state-space model",
    )


def discrete_hmm(initial, transition, emission, name: str = "hmm") -> StateSpaceModel:
    """Hidden Markov model over ``x`` with ``transition[i, j] = P(x'=j | x=i)``
    and ``emission[i, k] = P(y=k | x=i)``."""
    initial = np.asarray(initial, dtype=float)
    transition = np.asarray(transition, dtype=float)
    emission = np.asarray(emission, dtype=float)
    n, m = emission.shape
    x, xn, y = discrete("x", n), discrete("x_next", n), discrete("y", m)
    return StateSpaceModel(
        [x],
        [xn],
        [y],
        TableFactor([x], initial),
        TableFactor([x, xn], transition),
        TableFactor([x, y], emission),
        name,
        f"{n}-state hidden Markov model",
    )
