"""Learning-rate / truncation schedules i -> (gamma_i, J_i).

Variants:

* ``fixed_p``     gamma = A/i, J = floor(B i^{1/(2s+1)})
* ``three_stage`` no updates for i <= p/B; then gamma = A1/i, J = ceil(B i/p)
                  up to p^{1+1/(2s)}; then gamma = A2/i, J = ceil(B i^{1/(2s+1)})
* ``polynomial``  gamma = A i^{-(4s+1)/(6s+1)}, J = ceil(i^{1/(6s+1)})
* ``constant``    fixed (gamma, J)
* ``custom``      any callable i -> (gamma, J)

Floors and ceilings snap values within 1e-12 (relative) of an integer to that
integer, so that e.g. 100000**0.2 == 10.000000000000002 counts as 10.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._kernels import SNAP_RTOL

VARIANTS = ("fixed_p", "three_stage", "polynomial", "constant", "custom")


def snap_floor(v: float) -> int:
    r = round(v)
    if abs(v - r) <= SNAP_RTOL * max(1.0, abs(v)):
        return int(r)
    return math.floor(v)


def snap_ceil(v: float) -> int:
    r = round(v)
    if abs(v - r) <= SNAP_RTOL * max(1.0, abs(v)):
        return int(r)
    return math.ceil(v)


def _pow(i: np.ndarray, e: float) -> np.ndarray:
    # numpy's vectorized pow can differ from the scalar libm pow in the last
    # ulp; going through Python floats keeps arrays() and __call__ identical
    return np.fromiter((float(k) ** e for k in i.tolist()), float, count=i.size)


def _snap_arr(v: np.ndarray, op) -> np.ndarray:
    r = np.round(v)
    near = np.abs(v - r) <= SNAP_RTOL * np.maximum(1.0, np.abs(v))
    return np.where(near, r, op(v)).astype(np.int64)


def fixed_p(i: int, A: float, B: float, s: float) -> tuple[float, int]:
    return A / i, snap_floor(B * i ** (1.0 / (2 * s + 1)))


def three_stage(i: int, p: int, A1: float, A2: float, B: float, s: float) -> tuple[float, int]:
    # stages are tested in order; the first one that matches wins
    if i <= p / B:
        return 0.0, 0
    if i <= p ** (1.0 + 1.0 / (2 * s)):
        return A1 / i, snap_ceil(B * i / p)
    return A2 / i, snap_ceil(B * i ** (1.0 / (2 * s + 1)))


def polynomial(i: int, A: float, s: float) -> tuple[float, int]:
    return A * i ** (-(4 * s + 1) / (6 * s + 1)), snap_ceil(i ** (1.0 / (6 * s + 1)))


def power_rule(i: int, A: float, B: float, exponent: float) -> tuple[float, int]:
    """gamma = A/i, J = floor(B i^exponent); e.g. the Sieve-SGD J_i = i^0.21."""
    return A / i, snap_floor(B * i**exponent)


@dataclass(frozen=True)
class Schedule:
    variant: str
    s: float = 2.0
    p: int = 1
    A: float = 1.0
    A1: float = 1.0
    A2: float = 1.0
    B: float = 1.0
    gamma: float = 0.0
    J: int = 0
    rule: Optional[Callable[[int], tuple[float, int]]] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown schedule variant {self.variant!r}")
        if self.variant == "custom" and self.rule is None:
            raise ValueError("custom schedule needs a rule")
        if self.variant == "constant" and (self.gamma < 0 or self.J < 0):
            raise ValueError("constant schedule needs gamma >= 0 and J >= 0")
        if self.variant in ("fixed_p", "three_stage", "polynomial") and not self.s > 0:
            raise ValueError("s must be positive")
        if self.variant == "polynomial" and self.s <= 0.5:
            warnings.warn("polynomial schedule assumes s > 1/2", stacklevel=3)

    # constructors -----------------------------------------------------
    @classmethod
    def fixed(cls, A: float, B: float, s: float, p: int = 1) -> "Schedule":
        return cls("fixed_p", s=s, p=p, A=A, B=B)

    @classmethod
    def staged(cls, p: int, A1: float, A2: float, B: float, s: float) -> "Schedule":
        return cls("three_stage", s=s, p=p, A1=A1, A2=A2, B=B)

    @classmethod
    def poly(cls, A: float, s: float) -> "Schedule":
        return cls("polynomial", s=s, A=A)

    @classmethod
    def const(cls, gamma: float, J: int) -> "Schedule":
        return cls("constant", gamma=gamma, J=J)

    @classmethod
    def custom(cls, rule: Callable[[int], tuple[float, int]]) -> "Schedule":
        return cls("custom", rule=rule)

    # evaluation -------------------------------------------------------
    def __call__(self, i: int) -> tuple[float, int]:
        if i < 1:
            raise ValueError("schedule index starts at 1")
        v = self.variant
        if v == "fixed_p":
            return fixed_p(i, self.A, self.B, self.s)
        if v == "three_stage":
            return three_stage(i, self.p, self.A1, self.A2, self.B, self.s)
        if v == "polynomial":
            return polynomial(i, self.A, self.s)
        if v == "constant":
            return float(self.gamma), int(self.J)
        g, J = self.rule(i)
        return float(g), int(J)

    def arrays(self, start: int, count: int) -> tuple[np.ndarray, np.ndarray]:
        """(gamma_i, J_i) for i = start, ..., start + count - 1."""
        i = np.arange(start, start + count, dtype=np.int64)
        fi = i.astype(float)
        v = self.variant
        if v == "fixed_p":
            return self.A / fi, _snap_arr(self.B * _pow(i, 1.0 / (2 * self.s + 1)), np.floor)
        if v == "polynomial":
            s = self.s
            return (self.A * _pow(i, -(4 * s + 1) / (6 * s + 1)),
                    _snap_arr(_pow(i, 1.0 / (6 * s + 1)), np.ceil))
        if v == "constant":
            return np.full(count, float(self.gamma)), np.full(count, int(self.J), dtype=np.int64)
        pairs = [self(int(k)) for k in i]
        g = np.array([a for a, _ in pairs], dtype=float)
        J = np.array([b for _, b in pairs], dtype=np.int64)
        return g, J

    def max_J(self, upto: int) -> int:
        """Upper bound on J_i for i <= upto (exact for monotone rules)."""
        if upto < 1:
            return 0
        if self.variant == "constant":
            return int(self.J)
        if self.variant in ("fixed_p", "polynomial"):
            return int(self(upto)[1])
        return int(self.arrays(1, upto)[1].max())

    def describe(self) -> str:
        v = self.variant
        if v == "fixed_p":
            return f"fixed_p(A={self.A}, B={self.B}, s={self.s})"
        if v == "three_stage":
            return f"three_stage(p={self.p}, A1={self.A1}, A2={self.A2}, B={self.B}, s={self.s})"
        if v == "polynomial":
            return f"polynomial(A={self.A}, s={self.s})"
        if v == "constant":
            return f"constant(gamma={self.gamma}, J={self.J})"
        return f"custom({self.rule!r})"


def validate(sched: Schedule, assumed_C1: float = 1.0, assumed_C2: float = 1.0,
             M: float = math.sqrt(2.0), n: Optional[int] = None) -> list[str]:
    """List the theorem hypotheses that ``sched`` violates.

    Purely advisory; the simulation presets deliberately use constants that
    violate some of these.
    """
    out = []
    s, p = sched.s, sched.p
    C1, C2 = assumed_C1, assumed_C2
    if sched.variant == "fixed_p":
        if sched.A < 2.0 / C1:
            out.append(f"A={sched.A} < 2/C1={2.0 / C1:.4g}")
        bmax = 1.0 / (2 * p * C2 * M**2 * sched.A**2)
        if sched.B > bmax:
            out.append(f"B={sched.B} exceeds 1/(2 p C2 M^2 A^2)={bmax:.4g}")
    elif sched.variant == "three_stage":
        target = (2 * s + 1) * sched.A2
        if not math.isclose(sched.A1, target, rel_tol=1e-9):
            out.append(f"A1={sched.A1} != (2s+1) A2={target:.4g}")
        if sched.A2 < 2.0 / C1:
            out.append(f"A2={sched.A2} < 2/C1={2.0 / C1:.4g}")
        bmax = 1.0 / (4 * C2 * M**2 * sched.A2**2)
        if sched.B > bmax:
            out.append(f"B={sched.B} exceeds 1/(4 C2 M^2 A2^2)={bmax:.4g}")
        pmin = 1.0 / sched.B ** (2 * s)
        if p < pmin:
            out.append(f"p={p} < 1/B^(2s)={pmin:.4g}; stage ranges overlap")
        if n is not None and n <= p ** (1 + 1 / (2 * s)):
            out.append(f"n={n} does not exceed p^(1+1/(2s))={p ** (1 + 1 / (2 * s)):.4g}")
    elif sched.variant == "polynomial":
        if s <= 0.5:
            out.append(f"s={s} must exceed 1/2")
    return out
