import math

import numpy as np
import pytest

from fsgd import estimator as E
from fsgd.errors import CheckpointError, DimensionError, DivergenceError, DomainError
from fsgd.estimator import LossGradient, ModelState, Sample
from fsgd.schedule import Schedule

R2 = math.sqrt(2.0)


def psi_row(x, J):
    """Plain-python trig prefix, independent of the package kernels."""
    out = []
    for j in range(1, J + 1):
        k = (j + 1) // 2
        out.append(R2 * (math.sin if j % 2 else math.cos)(2 * math.pi * k * x))
    return np.array(out)


def fn_eval(alpha, beta, x):
    return alpha + sum(float(beta[k] @ psi_row(x[k], len(beta[k]))) for k in range(len(x)))


def test_predict_examples():
    st = ModelState.zeros(1)
    assert E.predict(st, [0.3]) == 0.0
    st.set_coefficients(0.5, [[R2 / 2]])
    assert E.predict(st, [0.25]) == pytest.approx(1.5, abs=1e-15)


def test_step_example():
    st = ModelState.zeros(1)
    r = E.step(st, Sample((0.25,), 1.0), 0.5, 1)
    assert r == 1.0 and st.alpha == 0.5 and st.step == 1
    np.testing.assert_allclose(st.beta, [[0.5 * R2]], rtol=1e-15)


def test_one_step_closed_form_at_training_point():
    # f_1(x) = gamma y (1 + sum_j psi_j(x)^2) at x = X_1
    x, y, g, J = 0.37, 0.8, 0.2, 5
    st = ModelState.zeros(1)
    E.step(st, Sample((x,), y), g, J)
    want = g * y * (1 + float(psi_row(x, J) @ psi_row(x, J)))
    assert E.predict(st, [x]) == pytest.approx(want, abs=1e-12)


def test_zero_gamma_zero_J_no_intercept_is_noop():
    rng = np.random.default_rng(0)
    st = ModelState.zeros(2, include_intercept=False)
    E.fit_arrays(st, rng.random((20, 2)), rng.normal(size=20), Schedule.fixed(0.5, 2, 1))
    before = st.copy()
    E.step(st, Sample((0.1, 0.9), 3.0), 0.0, 0)
    assert st.step == before.step + 1
    assert st.alpha == before.alpha and st.beta.tobytes() == before.beta.tobytes()


def test_intercept_disabled_keeps_alpha_zero():
    rng = np.random.default_rng(1)
    st = ModelState.zeros(3, include_intercept=False)
    E.fit_arrays(st, rng.random((200, 3)), rng.normal(size=200) + 4, Schedule.fixed(1, 1, 2, 3))
    assert st.alpha == 0.0
    with pytest.raises(ValueError):
        st.set_coefficients(1.0, np.zeros((3, 2)))


def test_one_step_homogeneity():
    for c in (2.0, -3.5, 0.125):
        a, b = ModelState.zeros(2), ModelState.zeros(2)
        E.step(a, Sample((0.2, 0.7), 0.9), 0.3, 4)
        E.step(b, Sample((0.2, 0.7), 0.9 * c), 0.3, 4)
        np.testing.assert_allclose(b.beta, c * a.beta, rtol=1e-15, atol=0)
        assert b.alpha == pytest.approx(c * a.alpha, rel=1e-15)


def test_representation_equivalence():
    """Coefficient update vs the functional recursion at 100 random points."""
    rng = np.random.default_rng(7)
    p = 3
    st = ModelState.zeros(p)
    queries = rng.random((100, p))
    worst = 0.0
    for i in range(1, 101):
        x, y = rng.random(p), rng.normal()
        gamma, J = 1.0 / (i + 2), int(rng.integers(0, 12))
        before = np.array([E.predict(st, q) for q in queries])
        r = y - E.predict(st, x)
        E.step(st, Sample(tuple(x), y), gamma, J)
        kern = np.array([1 + sum(float(psi_row(x[k], J) @ psi_row(q[k], J)) for k in range(p))
                         for q in queries])
        want = before + gamma * r * kern
        got = np.array([E.predict(st, q) for q in queries])
        worst = max(worst, np.abs(got - want).max())
    assert worst <= 1e-12


def test_predict_matches_independent_evaluator():
    rng = np.random.default_rng(8)
    st = ModelState.zeros(2)
    E.fit_arrays(st, rng.random((300, 2)), rng.normal(size=300), Schedule.fixed(2, 1.5, 1, 2))
    X = rng.random((50, 2))
    want = [fn_eval(st.alpha, st.beta, x) for x in X]
    np.testing.assert_allclose(E.predict_many(st, X), want, atol=1e-12)


def test_truncation_discipline():
    rng = np.random.default_rng(9)
    st = ModelState.zeros(2)
    Js = rng.integers(0, 9, size=60)
    for J in Js:
        E.step(st, Sample(tuple(rng.random(2)), rng.normal()), 0.1, int(J))
    assert st.length == Js.max()
    tail = st._coef[:, st.length:]
    assert np.all(tail == 0.0)


def test_fit_stream_base_cases():
    st, snaps = E.fit_stream(ModelState.zeros(1), [], Schedule.const(0.5, 1))
    assert st.step == 0 and snaps == {}
    a, b = ModelState.zeros(1), ModelState.zeros(1)
    E.fit_stream(a, [Sample((0.3,), 0.4)], Schedule.const(0.5, 1))
    E.step(b, Sample((0.3,), 0.4), 0.5, 1)
    assert a.same_as(b)


def test_fit_stream_learns_psi1():
    rng = np.random.default_rng(10)
    X = rng.random((1000, 1))
    y = R2 * np.sin(2 * np.pi * X[:, 0])
    st = ModelState.zeros(1, include_intercept=False)
    sched = Schedule.custom(lambda i: (3.0 / i, 1))
    E.fit_stream(st, (Sample(tuple(x), v) for x, v in zip(X, y)), sched)
    # reference fold: one coefficient, beta += gamma (y - beta psi1) psi1
    b = 0.0
    for i, (x, v) in enumerate(zip(X[:, 0], y), start=1):
        ps = R2 * math.sin(2 * math.pi * x)
        b += 3.0 / i * (v - b * ps) * ps
    assert st.beta[0, 0] == pytest.approx(b, abs=1e-12)
    # coefficient-space MSE: the only nonzero target coefficient is theta_1 = 1
    assert (st.beta[0, 0] - 1.0) ** 2 < 1e-3


def test_fit_arrays_equals_fit_stream_bitwise():
    rng = np.random.default_rng(11)
    X, y = rng.random((3000, 2)), rng.normal(size=3000)
    for sched in (Schedule.fixed(3, 1, 2, 2), Schedule.staged(2, 1, 5, 0.5, 2), Schedule.poly(0.1, 2)):
        a, b = ModelState.zeros(2), ModelState.zeros(2)
        _, sa = E.fit_stream(a, (Sample(tuple(x), v) for x, v in zip(X, y)), sched,
                             snapshot_steps=[5, 100, 2999])
        _, sb = E.fit_arrays(b, X, y, sched, snapshot_steps=[5, 100, 2999])
        assert a.same_as(b)
        assert sorted(sa) == sorted(sb) == [5, 100, 2999]
        assert all(sa[k].same_as(sb[k]) for k in sa)


def test_replay_determinism():
    rng = np.random.default_rng(12)
    X, y = rng.random((2000, 3)), rng.normal(size=2000)
    runs = []
    for _ in range(2):
        st = ModelState.zeros(3)
        E.fit_arrays(st, X, y, Schedule.fixed(1, 0.5, 2, 3))
        runs.append(st)
    assert runs[0].same_as(runs[1])


def test_resume_matches_uninterrupted():
    rng = np.random.default_rng(13)
    X, y = rng.random((1000, 1)), rng.normal(size=1000)
    sched = Schedule.fixed(3, 1, 2)
    full = ModelState.zeros(1)
    E.fit_arrays(full, X, y, sched)
    part = ModelState.zeros(1)
    E.fit_arrays(part, X[:400], y[:400], sched)
    part = E.loads(E.dumps(part))
    E.fit_arrays(part, X[400:], y[400:], sched)
    assert part.same_as(full)


def test_checkpoint_round_trip_exact(tmp_path):
    st = ModelState.zeros(2)
    st.set_coefficients(1 / 3, np.array([[5e-324, -1.7976931348623157e308, np.pi], [0.1, -0.0, 2**-60]]))
    st.step = 77
    path = tmp_path / "m.ckpt"
    E.save(st, path)
    back = E.load(path)
    assert back.same_as(st)
    assert path.read_text().startswith("fsgd-ckpt v1\n")


@pytest.mark.parametrize("text", [
    "", "fsgd-ckpt v2\n", "fsgd-ckpt v1\nbasis trig\np 1\n",
    "fsgd-ckpt v1\nbasis trig\np 1\ninclude_intercept 1\nstep 0\nalpha 0.0\nlength 2\nbeta1 1.0\n",
    "fsgd-ckpt v1\nbasis trig\np 1\ninclude_intercept 1\nstep 0\nalpha nan\nlength 0\nbeta1\n",
])
def test_checkpoint_rejects(text):
    with pytest.raises(CheckpointError):
        E.loads(text)


def test_errors():
    st = ModelState.zeros(2)
    with pytest.raises(DimensionError):
        E.predict(st, [0.5])
    with pytest.raises(DomainError):
        Sample((1.5, 0.2), 0.0)
    with pytest.raises(DomainError):
        Sample((0.5,), float("inf"))
    with pytest.raises(DivergenceError) as ei:
        E.fit_arrays(st, np.full((5, 2), 0.25), np.ones(5), Schedule.const(1e308, 3))
    assert ei.value.step >= 1
    assert np.all(np.isfinite(st.beta)) and math.isfinite(st.alpha)


def test_custom_loss_matches_squared():
    a, b = ModelState.zeros(1), ModelState.zeros(1)
    sq = LossGradient("custom", lambda u, v: -(u - v))
    for x, y in ((0.1, 0.5), (0.6, -0.2), (0.9, 0.3)):
        E.step(a, Sample((x,), y), 0.4, 3)
        E.step(b, Sample((x,), y), 0.4, 3, sq)
    np.testing.assert_allclose(b.beta, a.beta, atol=1e-15)
    assert b.alpha == pytest.approx(a.alpha, abs=1e-15)
