"""Online Lepski selection of the smoothness level.

At step i the candidates are s0, s0 + 1/log i, s0 + 2/log i, ... (<= s1), each
giving a truncation J(s) = floor(B i^{1/(2s+1)}).  The chosen s is the largest
candidate s_a such that, for every smaller candidate s_b,

    gamma_i^2 r_i^2 sum_k sum_{J(s_a) < j <= J(s_b)} psi_j(X_i^k)^2
        <= (i / log i)^{-2 s_b / (2 s_b + 1)}

with gamma_i = A/i and r_i the residual of the current estimate.  For i <= 2
the candidate set is {s0, s1}.  Until the activation step (see
``LepskiConfig.activation_step``) the largest candidate is taken without
testing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .basis import SQRT2
from .errors import DimensionError, DivergenceError, DomainError
from .estimator import ModelState, Sample, _row, iter_checkpoints, predict, step


@dataclass(frozen=True)
class LepskiConfig:
    s0: float = 0.5
    s1: float = 8.0
    A: float = 3.0
    B: float = 3.0
    warmup: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.s0 < self.s1:
            raise ValueError("need 0 < s0 < s1")
        if not (self.A > 0 and self.B > 0):
            raise ValueError("A and B must be positive")

    def activation_step(self, p: int = 1, M: float = SQRT2) -> int:
        """First step at which the selection rule is applied.

        An explicit ``warmup`` wins.  Otherwise selection waits until the
        update of every candidate is non-expansive, i.e. for the roughest
        one A/i * (1 + p M^2 J(s0)) <= 1.  Before that, large early steps
        can overshoot and the rule would chase the inflated residuals into
        high-frequency coefficients that are never revisited.
        """
        if self.warmup is not None:
            return max(3, int(self.warmup))
        i = 3
        # M*M is not exactly 2 for M = sqrt(2); compare with a relative slack
        while self.A * (1.0 + p * M * M * self.max_J(i)) > i * (1.0 + 1e-12):
            i += 1
        return i

    def max_J(self, i: int) -> int:
        """Largest truncation any candidate can request up to step i."""
        return K.snap_floor(self.B * i ** (1.0 / (2.0 * self.s0 + 1.0)))


def grid(i: int, cfg: LepskiConfig) -> np.ndarray:
    return K.lepski_grid(int(i), float(cfg.s0), float(cfg.s1))


def truncations(i: int, cfg: LepskiConfig, values=None) -> np.ndarray:
    values = grid(i, cfg) if values is None else np.asarray(values, dtype=float)
    return K.lepski_truncations(int(i), values, float(cfg.B))


def select(state: ModelState, sample: Sample, cfg: LepskiConfig) -> tuple[float, int]:
    """Chosen (s, J) for the next step, without updating."""
    i = state.step + 1
    row = _row(state, sample.x)
    r = sample.y - predict(state, row)
    g = grid(i, cfg)
    Js = truncations(i, cfg, g)
    a = K.lepski_select(i, g, Js, cfg.A / i, r, row, cfg.activation_step(state.p, state.basis.bound_M))
    return float(g[a]), int(Js[a])


def select_and_step(state: ModelState, sample: Sample, cfg: LepskiConfig
                    ) -> tuple[float, ModelState]:
    """Pick s by the Lepski rule and apply one F-SGD step at J(s) in place."""
    s, J = select(state, sample, cfg)
    step(state, sample, cfg.A / (state.step + 1), J)
    return s, state


def fit_arrays(state: ModelState, X, y, cfg: LepskiConfig,
               snapshot_steps: Sequence[int] = (), on_snapshot=None, chosen_out=None):
    """Batched Lepski F-SGD.  ``chosen_out`` (length n) receives the chosen s."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n = X.shape[0]
    if X.ndim != 2 or X.shape[1] != state.p:
        raise DimensionError(f"expected an (n, {state.p}) covariate array")
    if n and not (np.all(np.isfinite(X)) and X.min() >= 0.0 and X.max() <= 1.0):
        raise DomainError("covariates outside [0, 1]")
    chosen = np.empty(n) if chosen_out is None else chosen_out
    start = state.step
    wanted = set(int(s) for s in snapshot_steps)
    snaps = {}
    warmup = cfg.activation_step(state.p, state.basis.bound_M)
    for lo, hi in iter_checkpoints(state, n, snapshot_steps):
        Jmax = cfg.max_J(hi) + 1
        state.reserve(Jmax)
        scratch = np.empty((state.p, max(state._coef.shape[1], 1)))
        a, b = lo - start, hi - start
        alpha, length, fail = K.fold_lepski(state.alpha, state._coef, state.length,
                                            X[a:b], y[a:b], lo, cfg.s0, cfg.s1, cfg.A, cfg.B, warmup,
                                            state.include_intercept, scratch, chosen[a:b])
        if fail >= 0:
            state.alpha, state.length, state.step = alpha, length, lo + fail
            raise DivergenceError(lo + fail + 1)
        state.alpha, state.length, state.step = alpha, length, hi
        if hi in wanted:
            if on_snapshot is not None:
                on_snapshot(hi, state)
            else:
                snaps[hi] = state.copy()
    return state, snaps
