"""Simulation designs, MSE evaluation and log-log rate fitting.

Randomness comes from counter-based Philox streams keyed by
(seed, replication, purpose), so a replication's data do not depend on how
many replications run or in which process.
"""
from __future__ import annotations

import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import estimator, lepski, sieve
from .basis import TRIG, integrate, project_coeffs
from .errors import DivergenceError
from .estimator import ModelState
from .schedule import Schedule, power_rule

DGPS = ("uniform_cube", "moving_average", "uniform_interval")
TARGETS = ("bernoulli4_additive", "bernoulli4_univariate")

# substream purposes
_DATA, _NOISE, _EVAL = 0, 1, 2


def substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def bernoulli4(x):
    x = np.asarray(x, dtype=float)
    return x**4 - 2 * x**3 + x**2 - 1.0 / 30.0


@dataclass(frozen=True)
class Scenario:
    p: int = 1
    dgp: str = "uniform_cube"
    target: str = "bernoulli4_univariate"
    noise_halfwidth: float = 0.02
    n: int = 100_000
    reps: int = 20
    seed: int = 0
    interval: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.dgp not in DGPS:
            raise ValueError(f"unknown dgp {self.dgp!r}")
        if self.target not in TARGETS:
            raise ValueError(f"unknown target {self.target!r}")
        a, b = self.interval
        if not 0.0 <= a < b <= 1.0:
            raise ValueError("interval must satisfy 0 <= a < b <= 1")
        if self.reps < 1 or self.n < 1 or self.p < 1:
            raise ValueError("p, n and reps must be positive")
        if self.target == "bernoulli4_univariate" and self.p != 1:
            raise ValueError("univariate target needs p = 1")
        if self.noise_halfwidth < 0:
            raise ValueError("noise half-width must be nonnegative")

    @property
    def smoothness(self) -> float:
        # B4 components lie in the order-2 Sobolev ellipsoid of the trig basis
        return 2.0

    @property
    def minimax_slope(self) -> float:
        s = self.smoothness
        return -2 * s / (2 * s + 1)


def moving_average(U: np.ndarray) -> np.ndarray:
    """X^k = (U^{k-1} + U^k) / 2 with U^0 = U^p."""
    U = np.asarray(U, dtype=float)
    return (np.roll(U, 1, axis=-1) + U) / 2.0


def draw_x(scenario: Scenario, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """One covariate vector (size=None) or an (size, p) array."""
    shape = (scenario.p,) if size is None else (size, scenario.p)
    if scenario.dgp == "uniform_cube":
        return rng.random(shape)
    if scenario.dgp == "moving_average":
        return moving_average(rng.random(shape))
    a, b = scenario.interval
    return rng.uniform(a, b, shape)


def draw_noise(halfwidth: float, rng: np.random.Generator, size=None):
    return rng.uniform(-halfwidth, halfwidth, size)


def target_value(scenario: Scenario, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    if scenario.target == "bernoulli4_univariate":
        v = bernoulli4(x[..., 0] if x.ndim else x)
    else:
        v = 5.0 + np.sum(bernoulli4(x), axis=-1)
    return float(v) if np.ndim(v) == 0 else v


def simulate_data(scenario: Scenario, rep: int) -> tuple[np.ndarray, np.ndarray]:
    X = draw_x(scenario, substream(scenario.seed, rep, _DATA), scenario.n)
    eps = draw_noise(scenario.noise_halfwidth, substream(scenario.seed, rep, _NOISE), scenario.n)
    return X, target_value(scenario, X) + eps


# ground truth ---------------------------------------------------------------

@dataclass(frozen=True)
class Truth:
    """Coefficient expansion of the target under the Lebesgue measure."""

    alpha: float
    coeffs: np.ndarray        # (p, cut)
    tail: np.ndarray          # per-component energy beyond ``cut``
    norm_sq: float            # ||f||^2 = alpha^2 + sum of component energies

    @property
    def cut(self) -> int:
        return self.coeffs.shape[1]


@functools.lru_cache(maxsize=8)
def _b4_expansion(cut: int, points: int) -> tuple[np.ndarray, float, float]:
    theta = project_coeffs(bernoulli4, TRIG, cut, points)
    energy = integrate(lambda x: bernoulli4(x) ** 2, points)
    return theta, energy, max(0.0, energy - float(theta @ theta))


def truth_expansion(scenario: Scenario, tail_cut: int = 512,
                    quadrature_points: int = 100_000) -> Truth:
    theta, energy, tail = _b4_expansion(int(tail_cut), int(quadrature_points))
    p = scenario.p
    alpha = 5.0 if scenario.target == "bernoulli4_additive" else 0.0
    coeffs = np.tile(theta, (p, 1))
    return Truth(alpha, coeffs, np.full(p, tail), alpha**2 + p * energy)


def mse_quadrature(state: ModelState, scenario: Scenario, truth: Optional[Truth] = None,
                   tail_cut: int = 512) -> float:
    """||f_hat - f||^2 under the uniform law on [0,1]^p, in coefficient space.

    Orthonormality and centering turn the integral into a sum of squared
    coefficient errors; the target's energy beyond ``tail_cut`` is added as a
    remainder term.
    """
    if scenario.dgp != "uniform_cube":
        raise ValueError("coefficient-space MSE requires the uniform_cube design; "
                         "use mse_monte_carlo")
    if truth is None or truth.cut < state.length:
        cut = max(tail_cut, state.length)
        truth = truth_expansion(scenario, cut)
    err = np.array(truth.coeffs, copy=True)
    err[:, : state.length] -= state.beta
    a = state.alpha - truth.alpha
    return float(a * a + np.sum(err * err) + np.sum(truth.tail))


def mse_monte_carlo(model, scenario: Scenario, m: int = 100_000,
                    rng: Optional[np.random.Generator] = None,
                    X: Optional[np.ndarray] = None) -> tuple[float, float]:
    """Mean of (f_hat(x) - f(x))^2 over m fresh covariate draws, with its
    standard error.

    ``model`` is a ModelState or any callable mapping an (m, p) array to
    predictions.  Passing ``X`` reuses a fixed evaluation sample.
    """
    if X is None:
        if m < 2:
            raise ValueError("need m >= 2")
        X = draw_x(scenario, rng if rng is not None else np.random.default_rng(), m)
    pred = estimator.predict_many(model, X) if isinstance(model, ModelState) else model(X)
    d2 = (np.asarray(pred) - target_value(scenario, X)) ** 2
    return float(d2.mean()), float(d2.std(ddof=1) / math.sqrt(d2.size))


# rate fitting ---------------------------------------------------------------

def fit_slope(ns, values, window: Optional[tuple] = None) -> float:
    """OLS slope of log10(values) on log10(ns), restricted to ``window``."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = np.ones(ns.shape, bool)
    if window is not None:
        lo, hi = window
        keep = (ns >= lo) & (ns <= hi)
    if keep.sum() < 2:
        raise ValueError("need at least two points inside the fit window")
    lx, ly = np.log10(ns[keep]), np.log10(values[keep])
    lx_c = lx - lx.mean()
    return float(lx_c @ (ly - ly.mean()) / (lx_c @ lx_c))


def log_grid(n: int, per_decade: int = 10, start: int = 10) -> list[int]:
    """Roughly log-spaced integers in [start, n], always including n."""
    if n < start:
        return [n]
    k = np.arange(int(math.floor(per_decade * math.log10(start))),
                  int(math.floor(per_decade * math.log10(n))) + 1)
    pts = {int(round(10 ** (v / per_decade))) for v in k}
    pts = {v for v in pts if start <= v <= n}
    pts.add(n)
    return sorted(pts)


@dataclass
class EvalReport:
    eval_points: list
    mse: np.ndarray                       # (reps, len(eval_points))
    window: Optional[tuple] = None
    target_slope: float = -0.8
    label: str = ""
    chosen_s: Optional[np.ndarray] = None  # (reps, len(eval_points)) for Lepski

    @property
    def mse_mean(self) -> np.ndarray:
        return self.mse.mean(axis=0)

    @property
    def mse_stderr(self) -> np.ndarray:
        reps = self.mse.shape[0]
        if reps < 2:
            return np.zeros(self.mse.shape[1])
        return self.mse.std(axis=0, ddof=1) / math.sqrt(reps)

    @property
    def rows(self) -> list[tuple[int, float, float]]:
        return list(zip(self.eval_points, self.mse_mean.tolist(), self.mse_stderr.tolist()))

    @property
    def slope(self) -> float:
        return fit_slope(self.eval_points, self.mse_mean, self.window)

    def results_csv(self, tag: Optional[str] = None) -> str:
        head = "estimator,rep,n,mse" if tag is not None else "rep,n,mse"
        out = [head]
        for r in range(self.mse.shape[0]):
            for n, v in zip(self.eval_points, self.mse[r]):
                row = f"{r},{n},{float(v)!r}"
                out.append(f"{tag},{row}" if tag is not None else row)
        return "\n".join(out) + "\n"

    def summary_csv(self) -> str:
        out = ["n,mse_mean,mse_stderr"]
        out += [f"{n},{m!r},{s!r}" for n, m, s in self.rows]
        out.append(f"slope={self.slope!r},target={self.target_slope!r}")
        return "\n".join(out) + "\n"


# estimators -----------------------------------------------------------------

ESTIMATORS = ("fsgd", "sieve", "lepski")


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "fsgd"
    schedule: Optional[Schedule] = None
    include_intercept: bool = True
    omega: float = 2.0
    averaging: bool = True
    lepski: Optional[lepski.LepskiConfig] = None

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.kind!r}")
        if self.kind == "lepski" and self.lepski is None:
            raise ValueError("lepski estimator needs a LepskiConfig")
        if self.kind != "lepski" and self.schedule is None:
            raise ValueError(f"{self.kind} estimator needs a schedule")


def sieve_schedule(A: float = 3.0, exponent: float = 0.21) -> Schedule:
    """gamma_i = A/i, J_i = floor(i^exponent)."""
    return Schedule.custom(functools.partial(power_rule, A=A, B=1.0, exponent=exponent))


class _Evaluator:
    def __init__(self, scenario: Scenario, rep: int, mc_points: int):
        self.scenario = scenario
        self.truth = None
        self.X = None
        if scenario.dgp == "uniform_cube":
            self.truth = truth_expansion(scenario)
        else:
            self.X = draw_x(scenario, substream(scenario.seed, rep, _EVAL), mc_points)

    def __call__(self, state: ModelState) -> float:
        if self.truth is not None:
            return mse_quadrature(state, self.scenario, self.truth)
        return mse_monte_carlo(state, self.scenario, X=self.X)[0]


def run_replication(scenario: Scenario, est: EstimatorConfig, eval_points: Sequence[int],
                    rep: int, mc_points: int = 100_000, log_s: bool = False):
    """MSE at each eval point for one replication (plus chosen s for Lepski)."""
    X, y = simulate_data(scenario, rep)
    evaluate = _Evaluator(scenario, rep, mc_points)
    idx = {n: t for t, n in enumerate(eval_points)}
    mse = np.full(len(eval_points), np.nan)
    chosen = np.empty(scenario.n) if est.kind == "lepski" else None

    def record(i, st):
        model = st.f_avg if isinstance(st, sieve.SieveState) else st
        mse[idx[i]] = evaluate(model)

    if 0 in idx:
        mse[idx[0]] = evaluate(ModelState.zeros(scenario.p, est.include_intercept))
    try:
        if est.kind == "fsgd":
            st = ModelState.zeros(scenario.p, est.include_intercept)
            estimator.fit_arrays(st, X, y, est.schedule, eval_points, on_snapshot=record)
        elif est.kind == "sieve":
            st = sieve.SieveState.zeros(scenario.p, est.omega, est.include_intercept, est.averaging)
            sieve.fit_arrays(st, X, y, est.schedule, eval_points, on_snapshot=record)
        else:
            st = ModelState.zeros(scenario.p, est.include_intercept)
            lepski.fit_arrays(st, X, y, est.lepski, eval_points, on_snapshot=record,
                              chosen_out=chosen)
    except DivergenceError as e:
        raise DivergenceError(e.step, f"replication {rep}") from None
    if chosen is not None and not log_s:
        chosen = np.array([chosen[n - 1] if n >= 1 else np.nan for n in eval_points])
    return mse, chosen


def _run_rep(args):
    return run_replication(*args)


def run_experiment(scenario: Scenario, est: EstimatorConfig,
                   eval_points: Optional[Sequence[int]] = None,
                   window: Optional[tuple] = None, threads: int = 1,
                   mc_points: int = 100_000, target_slope: Optional[float] = None,
                   label: str = "", log_s: bool = False) -> EvalReport:
    """Stream ``scenario.n`` samples per replication and collect MSE curves.

    ``window`` defaults to the last decade, [n/10, n].
    """
    pts = sorted(set(int(v) for v in (eval_points or log_grid(scenario.n))))
    if pts and (pts[0] < 0 or pts[-1] > scenario.n):
        raise ValueError("eval points must lie in [0, n]")
    if window is None:
        window = (scenario.n / 10.0, scenario.n)
    if target_slope is None:
        target_slope = scenario.minimax_slope
    jobs = [(scenario, est, pts, r, mc_points, log_s) for r in range(scenario.reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_run_rep, jobs))
    else:
        results = [_run_rep(j) for j in jobs]
    mse = np.vstack([m for m, _ in results])
    chosen = None
    if est.kind == "lepski":
        chosen = np.vstack([c for _, c in results])
    return EvalReport(pts, mse, window, target_slope, label, chosen)


def run_p_sweep(base: Scenario, est_for_p, ps: Sequence[int], threads: int = 1,
                mc_points: int = 100_000) -> tuple[list, np.ndarray, float]:
    """Final MSE at n for each p, and the log-log slope of MSE in p."""
    finals = []
    for p in ps:
        sc = replace(base, p=p)
        rep = run_experiment(sc, est_for_p(p), [sc.n], window=(0, math.inf), threads=threads,
                             mc_points=mc_points, target_slope=1.0)
        finals.append(rep.mse[:, -1])
    means = np.array([f.mean() for f in finals])
    return list(ps), means, fit_slope(ps, means)


# presets --------------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    scenario: Scenario
    estimators: dict = field(default_factory=dict)   # kind -> EstimatorConfig
    default: str = "fsgd"
    window: Optional[tuple] = None
    description: str = ""


def _fig1(p, dgp, A, B):
    sc = Scenario(p=p, dgp=dgp, target="bernoulli4_additive", noise_halfwidth=0.02)
    return Preset(sc, {"fsgd": EstimatorConfig("fsgd", Schedule.fixed(A, B, 2.0, p))},
                  description=f"additive B4, p={p}, {dgp}, fixed-p schedule A={A}, B={B}")


def _fig2(p):
    sc = Scenario(p=p, dgp="uniform_cube", target="bernoulli4_additive", noise_halfwidth=0.02)
    return Preset(sc, {"fsgd": EstimatorConfig("fsgd", Schedule.staged(p, 1.0, 5.0, 0.5, 2.0))},
                  description=f"additive B4, p={p}, three-stage schedule A1=1, A2=5, B=0.5")


def _fig34(dgp_interval, w, B, lep_A, lep_B):
    sc = Scenario(p=1, dgp="uniform_interval", target="bernoulli4_univariate",
                  noise_halfwidth=w, interval=dgp_interval)
    if dgp_interval == (0.0, 1.0):
        sc = replace(sc, dgp="uniform_cube")
    return sc, {
        "fsgd": EstimatorConfig("fsgd", Schedule.fixed(3.0, B, 2.0), include_intercept=False),
        "sieve": EstimatorConfig("sieve", sieve_schedule(3.0, 0.21), include_intercept=False,
                                 omega=2.0),
        "lepski": EstimatorConfig("lepski", include_intercept=True,
                                  lepski=lepski.LepskiConfig(0.5, 8.0, lep_A, lep_B)),
    }


def _presets() -> dict[str, Preset]:
    out = {}
    for p in (5, 30, 80):
        out[f"fig1a-p{p}"] = _fig1(p, "uniform_cube", 1.0, 0.5)
    for p, A, B in ((5, 3.0, 0.4), (30, 7.0, 0.4), (80, 15.0, 0.3)):
        out[f"fig1b-p{p}"] = _fig1(p, "moving_average", A, B)
    for p in (5, 30, 80):
        out[f"fig2-p{p}"] = _fig2(p)
    out["fig2"] = out["fig2-p30"]
    sc_a, est_a = _fig34((0.0, 1.0), 0.02, 1.0, 3.0, 3.0)
    sc_b, est_b = _fig34((0.25, 0.75), 0.2, 0.8, 4.0, 2.0)
    out["fig3a"] = Preset(sc_a, est_a, "fsgd", window=(1e3, 1e5),
                          description="univariate B4, X~U[0,1], F-SGD vs Sieve-SGD")
    out["fig3b"] = Preset(sc_b, est_b, "fsgd",
                          description="univariate B4, X~U[0.25,0.75], F-SGD vs Sieve-SGD")
    out["fig4a"] = Preset(sc_a, est_a, "lepski", window=(1e3, 1e5),
                          description="univariate B4, X~U[0,1], Lepski-adaptive F-SGD")
    out["fig4b"] = Preset(sc_b, est_b, "lepski",
                          description="univariate B4, X~U[0.25,0.75], Lepski-adaptive F-SGD")
    out["thm3"] = Preset(sc_b, {"fsgd": EstimatorConfig("fsgd", Schedule.poly(0.1, 2.0),
                                                        include_intercept=False)},
                         description="polynomial schedule on the partial-support design")
    return out


PRESETS = _presets()
