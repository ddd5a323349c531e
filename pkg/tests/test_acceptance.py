"""Desk-scale reproduction of the convergence-rate experiments.

Every check runs at its stated tolerance; a red result here is a finding,
not a flake (all runs are seeded).
"""
import math

import numpy as np
import pytest

from fsgd import basis
from fsgd import estimator as E
from fsgd import sieve as S
from fsgd import simlab as L
from fsgd.estimator import ModelState, Sample
from fsgd.schedule import Schedule

R2 = math.sqrt(2.0)
TARGET = -0.8


def run(name, kind=None, **kw):
    pr = L.PRESETS[name]
    kind = kind or pr.default
    return L.run_experiment(pr.scenario, pr.estimators[kind], window=pr.window, label=kind, **kw)


def within(slope, tol):
    return abs(slope - TARGET) <= tol


@pytest.fixture(scope="module")
def fig3a_fsgd():
    return run("fig3a", "fsgd")


def test_criterion_1_univariate_rate(verdict, fig3a_fsgd):
    rep = fig3a_fsgd
    assert rep.mse.shape[0] >= 20 and rep.window == (1e3, 1e5)
    ok = within(rep.slope, 0.15)
    verdict("criterion 1", ok, f"fig3a F-SGD slope {rep.slope:.3f} over [1e3, 1e5], need -0.8 +/- 0.15")
    assert ok


def test_criterion_2_partial_support(verdict):
    rep = run("fig3b", "fsgd")
    assert rep.mse.shape[0] >= 20
    ok = within(rep.slope, 0.2)
    verdict("criterion 2", ok, f"fig3b F-SGD last-decade slope {rep.slope:.3f}, need -0.8 +/- 0.2")
    assert ok


def test_criterion_3_additive_fixed_p(verdict):
    rep = run("fig1a-p5")
    ok = within(rep.slope, 0.2)
    verdict("criterion 3", ok, f"fig1a p=5 last-decade slope {rep.slope:.3f}, need -0.8 +/- 0.2")
    assert ok


def test_criterion_4_three_stage(verdict):
    pr = L.PRESETS["fig2"]
    sc = pr.scenario
    pts = sorted(set(range(0, 61)) | set(L.log_grid(sc.n)))
    rep = L.run_experiment(sc, pr.estimators["fsgd"], pts)
    norm = L.truth_expansion(sc).norm_sq
    head = rep.mse[:, : pts.index(60) + 1]
    plateau = bool(np.all(head == norm))
    slope_ok = within(rep.slope, 0.2)
    ps, means, p_slope = L.run_p_sweep(
        sc, lambda p: L.EstimatorConfig("fsgd", Schedule.staged(p, 1.0, 5.0, 0.5, 2.0)), [8, 16, 32])
    sweep_ok = abs(p_slope - 1.0) <= 0.3
    ok = plateau and slope_ok and sweep_ok
    verdict("criterion 4", ok,
            f"(i) plateau at ||f||^2={norm:.6g} for i<=60: {'ok' if plateau else 'broken'}; "
            f"(ii) last-decade slope {rep.slope:.3f}, need -0.8 +/- 0.2: {'ok' if slope_ok else 'out'}; "
            f"p-sweep slope {p_slope:.3f}, need 1 +/- 0.3: {'ok' if sweep_ok else 'out'}")
    assert plateau, "stage-i plateau"
    assert sweep_ok, "p-sweep"
    assert slope_ok, "final-decade slope"


def test_criterion_5_lepski(verdict):
    rep = run("fig4a", "lepski")
    assert rep.mse.shape[0] >= 20 and rep.window == (1e3, 1e5)
    ok = within(rep.slope, 0.25)
    s_final = float(rep.chosen_s[:, -1].mean())
    verdict("criterion 5", ok, f"fig4a Lepski slope {rep.slope:.3f} over [1e3, 1e5], need -0.8 +/- 0.25 "
                               f"(mean chosen s at n=1e5: {s_final:.2f})")
    assert ok


def test_criterion_6_sieve_parity(verdict, fig3a_fsgd):
    sv = run("fig3a", "sieve")
    a, b = float(fig3a_fsgd.mse_mean[-1]), float(sv.mse_mean[-1])
    ratio = max(a, b) / min(a, b)
    ok = ratio <= 3.0
    verdict("criterion 6", ok, f"final MSE F-SGD {a:.3e} vs Sieve-SGD {b:.3e}, ratio {ratio:.1f}, need <= 3")
    assert ok


def _psi(x, J):
    return np.array([R2 * (math.sin if j % 2 else math.cos)(2 * math.pi * ((j + 1) // 2) * x)
                     for j in range(1, J + 1)])


def test_criterion_7_property_suites(verdict, tmp_path):
    rng = np.random.default_rng(2024)
    checks = {}

    nodes = basis.midpoint_nodes(100_000)
    Phi = basis.design_matrix(basis.TRIG, nodes, 20)
    grid = basis.design_matrix(basis.TRIG, np.linspace(0, 1, 10_000), 20)
    checks["basis"] = (np.abs(Phi.T @ Phi / nodes.size - np.eye(20)).max() <= 1e-8
                       and np.abs(Phi.mean(axis=0)).max() <= 1e-10
                       and np.abs(grid).max() <= R2 + 1e-12)

    p, st, worst = 2, ModelState.zeros(2), 0.0
    Q = rng.random((100, p))
    for i in range(1, 101):
        x, y, gam, J = rng.random(p), rng.normal(), 1.0 / (i + 1), int(rng.integers(0, 10))
        before = E.predict_many(st, Q)
        r = y - E.predict(st, x)
        E.step(st, Sample(tuple(x), y), gam, J)
        kern = 1 + sum(np.array([_psi(x[k], J) @ _psi(q[k], J) for q in Q]) for k in range(p))
        worst = max(worst, np.abs(E.predict_many(st, Q) - (before + gam * r * kern)).max())
    checks["update equivalence"] = worst <= 1e-12

    sv, gsum, n = S.SieveState.zeros(1), np.zeros(8), 100
    asum = 0.0
    for i in range(1, n + 1):
        S.sieve_step(sv, Sample((rng.random(),), rng.normal()), 1.0 / i, int(rng.integers(0, 9)))
        gsum[: sv.g.length] += sv.g.beta[0]
        asum += sv.g.alpha
    checks["polyak"] = (np.abs(sv.f_avg.beta[0] - gsum[: sv.f_avg.length] / (n + 1)).max() <= 1e-10
                        and abs(sv.f_avg.alpha - asum / (n + 1)) <= 1e-10)

    sc = L.Scenario(p=1)
    m, se = L.mse_monte_carlo(ModelState.zeros(1), sc, 1_000_000, rng)
    checks["mc vs quadrature"] = abs(m - L.mse_quadrature(ModelState.zeros(1), sc)) <= 4 * se

    fit = ModelState.zeros(3)
    E.fit_arrays(fit, rng.random((500, 3)), rng.normal(size=500), Schedule.fixed(1, 1, 2, 3))
    E.save(fit, tmp_path / "c.ckpt")
    checks["checkpoint"] = E.load(tmp_path / "c.ckpt").same_as(fit)

    small = L.Scenario(p=2, target="bernoulli4_additive", n=2000, reps=3, seed=5)
    est = L.EstimatorConfig("fsgd", Schedule.fixed(1, 0.5, 2, 2))
    one, two = L.run_experiment(small, est), L.run_experiment(small, est, threads=2)
    checks["replay"] = one.results_csv() == two.results_csv() == L.run_experiment(small, est).results_csv()

    failed = [k for k, v in checks.items() if not v]
    verdict("criterion 7", not failed, "all property checks hold" if not failed else f"failed: {failed}")
    assert not failed


def test_criterion_8_polynomial_schedule(verdict):
    pr = L.PRESETS["thm3"]
    sc = pr.scenario
    rep = L.run_experiment(sc, pr.estimators["fsgd"], [0] + L.log_grid(sc.n))
    init, final = float(rep.mse_mean[0]), float(rep.mse_mean[-1])
    ok = np.all(np.isfinite(rep.mse)) and final < 0.5 * init
    verdict("criterion 8", ok, f"polynomial schedule, {sc.n} steps: final MSE {final:.3e} vs "
                               f"0.5 x initial {0.5 * init:.3e}")
    assert ok
