"""Centered orthonormal bases on [0, 1] and coefficient-space utilities.

Only the trigonometric family is shipped.  The constant function is not part
of the indexed family; models carry the intercept separately.

    psi_{2k-1}(x) = sqrt(2) sin(2 pi k x)
    psi_{2k}(x)   = sqrt(2) cos(2 pi k x),   k = 1, 2, ...
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError

SQRT2 = math.sqrt(2.0)
TWO_PI = 2.0 * math.pi

BASIS_KINDS = ("trig",)


@dataclass(frozen=True)
class BasisFamily:
    """A centered, uniformly bounded orthonormal family indexed from j = 1."""

    kind: str = "trig"
    bound_M: float = SQRT2

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {BASIS_KINDS}")
        if not self.bound_M >= 1.0:
            raise ValueError("bound_M must be >= 1")

    @classmethod
    def from_name(cls, name: str) -> "BasisFamily":
        if name in ("trig", "trigonometric", "trigonometric-centered"):
            return cls("trig", SQRT2)
        raise ValueError(f"unknown basis {name!r}")


TRIG = BasisFamily()


def _check_x(x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x={x!r} outside [0, 1]")


def eval(family: BasisFamily, j: int, x: float) -> float:  # noqa: A001 - mirrors the math name
    """Return psi_j(x)."""
    if j < 1:
        raise DomainError(f"basis index must be >= 1, got {j}")
    _check_x(x)
    k = (j + 1) // 2
    ang = TWO_PI * k * x
    if j % 2 == 1:
        return SQRT2 * math.sin(ang)
    return SQRT2 * math.cos(ang)


def eval_prefix(family: BasisFamily, x: float, J: int) -> np.ndarray:
    """Return [psi_1(x), ..., psi_J(x)]."""
    if J < 0:
        raise ValueError("J must be nonnegative")
    _check_x(x)
    return design_matrix(family, np.array([x]), J)[0]


def design_matrix(family: BasisFamily, x, J: int, start: int = 0) -> np.ndarray:
    """Evaluate psi_{start+1}..psi_J at every point of ``x``.

    Returns an array of shape (len(x), J - start).
    """
    x = np.asarray(x, dtype=float)
    if x.size and not (np.all(np.isfinite(x)) and x.min() >= 0.0 and x.max() <= 1.0):
        raise DomainError("points outside [0, 1]")
    lo = start // 2  # pair containing psi_{start+1}
    K = (J + 1) // 2
    freqs = np.arange(lo + 1, K + 1)
    ang = np.multiply.outer(x, TWO_PI * freqs)
    out = np.empty((x.shape[0], 2 * (K - lo)))
    out[:, 0::2] = SQRT2 * np.sin(ang)
    out[:, 1::2] = SQRT2 * np.cos(ang)
    off = start - 2 * lo
    return out[:, off:off + J - start]


def sq_prefix_sums(family: BasisFamily, x: float, Js) -> np.ndarray:
    """Return sum_{j <= J} psi_j(x)^2 for each J in ``Js``.

    Consecutive sine/cosine pairs at the same frequency contribute exactly 2,
    so each prefix costs one sine evaluation at most.
    """
    Js = np.asarray(Js, dtype=np.int64)
    out = 2.0 * (Js // 2)
    odd = Js % 2 == 1
    k = (Js[odd] + 1) // 2
    out = out.astype(float)
    out[odd] += 2.0 * np.sin(TWO_PI * k * x) ** 2
    return out


def sobolev_norm_sq(theta, s: float) -> float:
    """sum_j (j^s theta_j)^2 over a finite coefficient vector."""
    if not s > 0:
        raise ValueError("s must be positive")
    theta = np.asarray(theta, dtype=float)
    j = np.arange(1, theta.size + 1, dtype=float)
    return float(np.sum((j**s * theta) ** 2))


def midpoint_nodes(n_points: int) -> np.ndarray:
    return (np.arange(n_points) + 0.5) / n_points


def integrate(f: Callable, n_points: int = 100_000) -> float:
    """Composite midpoint rule for a vectorized ``f`` over [0, 1]."""
    x = midpoint_nodes(n_points)
    return float(np.mean(f(x)))


def project_coeffs(f: Callable, family: BasisFamily, J: int,
                   quadrature_points: int = 100_000, chunk: int = 64) -> np.ndarray:
    """theta_j = int_0^1 f(x) psi_j(x) dx for j = 1..J by composite midpoint.

    ``f`` must accept a numpy array.  The rule is spectrally accurate for
    smooth periodic integrands and is the reference used to build
    ground-truth coefficient vectors.
    """
    x = midpoint_nodes(quadrature_points)
    fx = np.asarray(f(x), dtype=float)
    theta = np.empty(J)
    for lo in range(0, J, chunk):
        hi = min(J, lo + chunk)
        block = design_matrix(family, x, hi, start=lo)
        theta[lo:hi] = fx @ block / quadrature_points
    return theta
