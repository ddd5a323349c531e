"""F-SGD model state, the coefficient-space update, and checkpoints.

The functional recursion

    f_i(X) = f_{i-1}(X) + gamma_i r_i (1 + sum_k sum_{j<=J_i} psi_jk(X_i^k) psi_jk(X^k)),
    r_i = Y_i - f_{i-1}(X_i)

is carried out on the coefficients: alpha += gamma r, and
beta[k, j] += gamma r psi_j(X_i^k) for j <= J_i.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from . import _kernels as K
from .basis import TRIG, BasisFamily
from .errors import CheckpointError, DimensionError, DivergenceError, DomainError
from .schedule import Schedule

CKPT_HEADER = "fsgd-ckpt v1"


@dataclass(frozen=True)
class Sample:
    x: tuple
    y: float

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))
        for v in x:
            if not (0.0 <= v <= 1.0):
                raise DomainError(f"covariate {v!r} outside [0, 1]")
        if not math.isfinite(self.y):
            raise DomainError(f"response {self.y!r} is not finite")


@dataclass(frozen=True)
class LossGradient:
    """Derivative g(u, v) = d loss(u, v) / dv, with u the response."""

    kind: str = "squared"
    grad: Optional[Callable[[float, float], float]] = None

    def __call__(self, u: float, v: float) -> float:
        if self.grad is not None:
            return self.grad(u, v)
        return -(u - v)


SQUARED = LossGradient()


@dataclass
class ModelState:
    """Intercept plus per-component coefficient arrays.

    ``beta`` is a (p, length) view; storage grows geometrically on demand and
    every slot beyond the largest J seen so far stays exactly 0.
    """

    p: int
    include_intercept: bool = True
    basis: BasisFamily = TRIG
    alpha: float = 0.0
    step: int = 0
    length: int = 0
    _coef: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be positive")
        if self._coef is None:
            self._coef = np.zeros((self.p, 0))

    @classmethod
    def zeros(cls, p: int, include_intercept: bool = True, basis: BasisFamily = TRIG) -> "ModelState":
        return cls(p=p, include_intercept=include_intercept, basis=basis)

    @property
    def beta(self) -> np.ndarray:
        return self._coef[:, : self.length]

    def reserve(self, J: int) -> None:
        cap = self._coef.shape[1]
        if J <= cap:
            return
        new = np.zeros((self.p, max(J, 2 * cap, 8)))
        new[:, : self.length] = self._coef[:, : self.length]
        self._coef = new

    def set_coefficients(self, alpha: float, beta) -> None:
        beta = np.atleast_2d(np.asarray(beta, dtype=float))
        if beta.shape[0] != self.p:
            raise DimensionError(f"expected {self.p} coefficient rows, got {beta.shape[0]}")
        if not self.include_intercept and alpha != 0:
            raise ValueError("intercept is disabled for this model")
        self.alpha = float(alpha)
        self._coef = beta.copy()
        self.length = beta.shape[1]

    def copy(self) -> "ModelState":
        return ModelState(p=self.p, include_intercept=self.include_intercept, basis=self.basis,
                          alpha=self.alpha, step=self.step, length=self.length,
                          _coef=self._coef.copy())

    def same_as(self, other: "ModelState") -> bool:
        """Bitwise equality of the stored estimate."""
        return (self.p == other.p and self.step == other.step
                and self.include_intercept == other.include_intercept
                and np.float64(self.alpha).tobytes() == np.float64(other.alpha).tobytes()
                and self.length == other.length
                and self.beta.tobytes() == other.beta.tobytes())


def _row(state: ModelState, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != state.p:
        raise DimensionError(f"expected {state.p} covariates, got {x.shape[0]}")
    if not (np.all(np.isfinite(x)) and x.min() >= 0.0 and x.max() <= 1.0):
        raise DomainError(f"covariates {x.tolist()} outside [0, 1]")
    return x


def _scratch(state: ModelState, J: int) -> np.ndarray:
    return np.empty((state.p, max(state.length, J, 1)))


def predict(state: ModelState, x) -> float:
    """alpha + sum_k sum_j beta[k, j] psi_j(x_k)."""
    row = _row(state, x)
    return float(K.predict_point(state.alpha, state._coef, state.length, row, _scratch(state, 0)))


def predict_many(state: ModelState, X) -> np.ndarray:
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    if X.shape[1] != state.p:
        raise DimensionError(f"expected {state.p} covariates, got {X.shape[1]}")
    if X.size and not (np.all(np.isfinite(X)) and X.min() >= 0.0 and X.max() <= 1.0):
        raise DomainError("covariates outside [0, 1]")
    return K.predict_many(state.alpha, state._coef, state.length, X)


def step(state: ModelState, sample: Sample, gamma: float, J: int,
         loss: LossGradient = SQUARED) -> float:
    """Consume one observation in place; return the residual -g(y, f(x))."""
    if gamma < 0 or J < 0:
        raise ValueError("gamma and J must be nonnegative")
    row = _row(state, sample.x)
    state.reserve(J)
    scratch = _scratch(state, J)
    i = state.step + 1
    if loss.kind == "squared" and loss.grad is None:
        pred = K.predict_point(state.alpha, state._coef, state.length, row, scratch)
        alpha, length, fail = K.fold_fsgd(
            state.alpha, state._coef, state.length, row[None, :], np.array([sample.y]),
            np.array([float(gamma)]), np.array([J], dtype=np.int64),
            state.include_intercept, scratch)
        if fail >= 0:
            raise DivergenceError(i)
        r = sample.y - pred
    else:
        pred = K.predict_point(state.alpha, state._coef, state.length, row, scratch)
        r = -loss(sample.y, pred)
        alpha, length, ok = K.apply_residual(state.alpha, state._coef, state.length, row,
                                             gamma * r, J, state.include_intercept, scratch)
        if not ok:
            raise DivergenceError(i)
    state.alpha, state.length, state.step = alpha, length, i
    return float(r)


def fit_stream(state: ModelState, stream: Iterable[Sample], schedule: Schedule,
               loss: LossGradient = SQUARED, snapshot_steps: Sequence[int] = ()
               ) -> tuple[ModelState, dict[int, ModelState]]:
    """Fold ``step`` over ``stream`` with (gamma_i, J_i) = schedule(i).

    Mutates and returns ``state`` together with deep copies taken right after
    the requested step counts.
    """
    wanted = set(int(s) for s in snapshot_steps)
    snaps: dict[int, ModelState] = {}
    for sample in stream:
        i = state.step + 1
        gamma, J = schedule(i)
        step(state, sample, gamma, J, loss)
        if i in wanted:
            snaps[i] = state.copy()
    return state, snaps


def iter_checkpoints(state: ModelState, n: int, at: Sequence[int]) -> Iterator[tuple[int, int]]:
    """Split the next ``n`` steps into blocks ending at each requested count."""
    start = state.step
    stops = sorted(set(int(a) for a in at if start < a <= start + n)) + [start + n]
    lo = start
    for hi in stops:
        if hi > lo:
            yield lo, hi
        lo = hi


def fit_arrays(state: ModelState, X: np.ndarray, y: np.ndarray, schedule: Schedule,
               snapshot_steps: Sequence[int] = (), on_snapshot=None
               ) -> tuple[ModelState, dict[int, ModelState]]:
    """Batched squared-loss equivalent of :func:`fit_stream`.

    ``on_snapshot(i, state)`` is called instead of storing copies when given.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n = X.shape[0]
    if X.ndim != 2 or X.shape[1] != state.p:
        raise DimensionError(f"expected an (n, {state.p}) covariate array")
    if n and not (np.all(np.isfinite(X)) and X.min() >= 0.0 and X.max() <= 1.0):
        raise DomainError("covariates outside [0, 1]")
    if not np.all(np.isfinite(y)):
        raise DomainError("non-finite response")
    snaps: dict[int, ModelState] = {}
    start = state.step
    wanted = set(int(s) for s in snapshot_steps)
    for lo, hi in iter_checkpoints(state, n, snapshot_steps):
        gammas, Js = schedule.arrays(lo + 1, hi - lo)
        if np.any(gammas < 0) or np.any(Js < 0):
            raise ValueError("schedule produced a negative gamma or J")
        Jmax = int(Js.max())
        state.reserve(Jmax)
        scratch = _scratch(state, Jmax)
        a, b = lo - start, hi - start
        alpha, length, fail = K.fold_fsgd(state.alpha, state._coef, state.length,
                                          X[a:b], y[a:b], gammas, Js,
                                          state.include_intercept, scratch)
        if fail >= 0:
            # the kernel stops before committing the bad update
            state.alpha, state.length, state.step = alpha, length, lo + fail
            raise DivergenceError(lo + fail + 1)
        state.alpha, state.length, state.step = alpha, length, hi
        if hi in wanted:
            if on_snapshot is not None:
                on_snapshot(hi, state)
            else:
                snaps[hi] = state.copy()
    return state, snaps


# checkpoints ----------------------------------------------------------------

def dumps(state: ModelState) -> str:
    lines = [
        CKPT_HEADER,
        f"basis {state.basis.kind}",
        f"p {state.p}",
        f"include_intercept {int(state.include_intercept)}",
        f"step {state.step}",
        f"alpha {float(state.alpha)!r}",
        f"length {state.length}",
    ]
    for k in range(state.p):
        vals = " ".join(repr(float(v)) for v in state.beta[k])
        lines.append(f"beta{k + 1} {vals}".rstrip())
    return "\n".join(lines) + "\n"


def loads(text: str) -> ModelState:
    lines = text.splitlines()
    if not lines or lines[0].strip() != CKPT_HEADER:
        got = lines[0].strip() if lines else "<empty>"
        raise CheckpointError(f"unsupported checkpoint header {got!r}; expected {CKPT_HEADER!r}")
    kv: dict[str, str] = {}
    for ln in lines[1:]:
        if not ln.strip():
            continue
        key, _, rest = ln.partition(" ")
        kv[key] = rest.strip()
    try:
        basis = BasisFamily.from_name(kv["basis"])
        p = int(kv["p"])
        state = ModelState.zeros(p, bool(int(kv["include_intercept"])), basis)
        state.step = int(kv["step"])
        length = int(kv["length"])
        rows = []
        for k in range(p):
            vals = kv.get(f"beta{k + 1}", "")
            row = [float(v) for v in vals.split()] if vals else []
            if len(row) != length:
                raise CheckpointError(f"beta{k + 1} has {len(row)} entries, expected {length}")
            rows.append(row)
        beta = np.array(rows, dtype=float).reshape(p, length)
        state.set_coefficients(float(kv["alpha"]), beta)
    except KeyError as e:
        raise CheckpointError(f"missing checkpoint field {e.args[0]!r}") from None
    except ValueError as e:
        if isinstance(e, CheckpointError):
            raise
        raise CheckpointError(f"malformed checkpoint: {e}") from None
    if not (math.isfinite(state.alpha) and np.all(np.isfinite(state.beta))):
        raise CheckpointError("checkpoint holds non-finite coefficients")
    return state


def save(state: ModelState, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(state))


def load(path) -> ModelState:
    with open(path) as fh:
        return loads(fh.read())
