"""Sieve-SGD baseline: component-specific rates t_j = j^(-2 omega) plus
Polyak averaging of the iterates.

The averaged estimate after n steps is (g_1 + ... + g_n) / (n + 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as K
from .errors import DivergenceError, DimensionError, DomainError
from .estimator import ModelState, Sample, _row, iter_checkpoints
from .schedule import Schedule


@dataclass
class SieveState:
    g: ModelState
    f_avg: ModelState
    omega: float = 2.0
    averaging: bool = True

    @classmethod
    def zeros(cls, p: int, omega: float = 2.0, include_intercept: bool = True,
              averaging: bool = True) -> "SieveState":
        return cls(ModelState.zeros(p, include_intercept), ModelState.zeros(p, include_intercept),
                   omega, averaging)

    @property
    def step(self) -> int:
        return self.g.step

    def weights(self, J: int) -> np.ndarray:
        return np.arange(1, J + 1, dtype=float) ** (-2.0 * self.omega)

    def reserve(self, J: int) -> None:
        self.g.reserve(J)
        self.f_avg.reserve(self.g._coef.shape[1])

    def copy(self) -> "SieveState":
        return SieveState(self.g.copy(), self.f_avg.copy(), self.omega, self.averaging)


def _fold(state: SieveState, X, y, gammas, Js) -> None:
    g, f = state.g, state.f_avg
    Jmax = int(Js.max()) if len(Js) else 0
    state.reserve(Jmax)
    tw = state.weights(g._coef.shape[1])
    scratch = np.empty((g.p, max(g.length, Jmax, 1)))
    step0 = g.step
    ga, fa, length, fail = K.fold_sieve(g.alpha, g._coef, f.alpha, f._coef, g.length,
                                        X, y, gammas, Js, g.include_intercept, tw,
                                        state.averaging, step0, scratch)
    done = len(Js) if fail < 0 else fail
    g.alpha, f.alpha = ga, fa
    g.length = f.length = length
    g.step = f.step = step0 + done
    if fail >= 0:
        raise DivergenceError(step0 + fail + 1)


def sieve_step(state: SieveState, sample: Sample, gamma: float, J: int) -> SieveState:
    """One Sieve-SGD update in place."""
    if gamma < 0 or J < 0:
        raise ValueError("gamma and J must be nonnegative")
    row = _row(state.g, sample.x)
    _fold(state, row[None, :], np.array([sample.y]), np.array([float(gamma)]),
          np.array([J], dtype=np.int64))
    return state


def fit_arrays(state: SieveState, X, y, schedule: Schedule,
               snapshot_steps: Sequence[int] = (), on_snapshot=None):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] != state.g.p:
        raise DimensionError(f"expected an (n, {state.g.p}) covariate array")
    if X.size and not (np.all(np.isfinite(X)) and X.min() >= 0.0 and X.max() <= 1.0):
        raise DomainError("covariates outside [0, 1]")
    start = state.step
    wanted = set(int(s) for s in snapshot_steps)
    snaps = {}
    for lo, hi in iter_checkpoints(state.g, X.shape[0], snapshot_steps):
        gammas, Js = schedule.arrays(lo + 1, hi - lo)
        _fold(state, X[lo - start:hi - start], y[lo - start:hi - start], gammas, Js)
        if hi in wanted:
            if on_snapshot is not None:
                on_snapshot(hi, state)
            else:
                snaps[hi] = state.copy()
    return state, snaps
