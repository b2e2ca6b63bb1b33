import numpy as np
import pytest

from fegkit.analysis import bound_sfeg
from fegkit.core import FegError, ParameterRangeError, evaluate_operator
from fegkit.problems import make_bilinear, random_negative_comonotone
from fegkit.solvers import feg_schedule, resume, run_feg
from fegkit.stochastic import (
    NoiseModel,
    VarianceSchedule,
    check_noise_bounds,
    check_potential_floor,
    constant_schedule,
    doubled,
    expected_potential_gap_floor,
    monte_carlo_report,
    noise_inner_products,
    noisy_eval,
    run_sfeg,
    sample_traces,
    schedule_for_epsilon,
    zero_schedule,
)


def test_epsilon_schedule_entries():
    s = schedule_for_epsilon(0.6, 5)
    assert s[0] == pytest.approx(0.1)
    assert s[1] == pytest.approx(0.1) and s[1.5] == pytest.approx(0.05)
    assert s[4] == pytest.approx(0.025) and s[4.5] == pytest.approx(0.02)
    with pytest.raises(FegError, match="no entry"):
        s[0.5]
    with pytest.raises(FegError):
        s[5]
    with pytest.raises(ParameterRangeError):
        schedule_for_epsilon(0.0, 5)


def test_schedule_validation():
    with pytest.raises(ParameterRangeError):
        VarianceSchedule({0: -0.1})
    with pytest.raises(ValueError):
        doubled(0.25)
    assert constant_schedule(0.3)[17.5] == 0.3


def test_zero_noise_is_exact():
    p = make_bilinear(2.0)
    nm = NoiseModel(zero_schedule(), seed=3)
    z = np.array([0.3, -1.2])
    assert np.array_equal(noisy_eval(p, nm, z, 2.5), evaluate_operator(p.operator, z))


def test_zero_noise_sfeg_equals_feg():
    p = random_negative_comonotone(4, 4, -0.05)
    z0 = np.linspace(-1, 1, 4)
    a = run_sfeg(p, NoiseModel(zero_schedule()), z0, 60)
    b = run_feg(p, z0, 60, rho=0.0)
    assert all(np.array_equal(x, y) for x, y in zip(a.iterates, b.iterates))


@pytest.mark.parametrize("family", ["gaussian_iid", "rademacher_scaled"])
def test_noise_moments(family):
    d, s, n = 3, 0.5, 100_000
    nm = NoiseModel(constant_schedule(s), seed=11, family=family)
    X = np.array([nm.draw(t, 1.5, d) for t in range(n)])
    se = X.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(X.mean(axis=0)) <= 4 * se)
    sq = (X**2).sum(axis=1)
    assert abs(sq.mean() - s) <= 4 * sq.std(ddof=1) / np.sqrt(n)


def test_noise_replay_and_independence():
    nm = NoiseModel(constant_schedule(1.0), seed=5)
    assert np.array_equal(nm.draw(7, 3.5, 4), nm.draw(7, 3.5, 4))
    assert not np.array_equal(nm.draw(7, 3.5, 4), nm.draw(8, 3.5, 4))
    assert not np.array_equal(nm.draw(7, 3.0, 4), nm.draw(7, 3.5, 4))
    assert not np.array_equal(nm.draw(7, 3.5, 4), NoiseModel(constant_schedule(1.0), seed=6).draw(7, 3.5, 4))
    with pytest.raises(ValueError):
        NoiseModel(constant_schedule(1.0), family="cauchy")


def test_sfeg_replay_order_independent():
    p = make_bilinear(1.0)
    nm = NoiseModel(constant_schedule(0.2), seed=2)
    fwd = sample_traces(p, nm, [1.0, 0.0], 20, 4)
    back = [run_sfeg(p, nm, [1.0, 0.0], 20, trial=t) for t in reversed(range(4))][::-1]
    for a, b in zip(fwd, back):
        assert all(np.array_equal(x, y) for x, y in zip(a.iterates, b.iterates))


def test_sfeg_resume_and_oracle_calls():
    p = make_bilinear(1.0)
    nm = NoiseModel(constant_schedule(0.2), seed=2)
    full = run_sfeg(p, nm, [1.0, 0.0], 30)
    part = resume(run_sfeg(p, nm, [1.0, 0.0], 12), 18)
    assert all(np.array_equal(x, y) for x, y in zip(full.iterates, part.iterates))
    assert full.oracle_calls == part.oracle_calls == 1 + 2 * 29


def test_floor_at_zero():
    sched = feg_schedule(1.0, 0.0)
    assert expected_potential_gap_floor(sched, 1.0, {0: 0.4}, 0) == pytest.approx(-1.5 * 0.4)
    assert expected_potential_gap_floor(sched, 1.0, zero_schedule(), 7) == 0.0


def test_epsilon_schedule_mean_below_bound():
    p = make_bilinear(1.0)
    K = 20
    for eps in (0.1, 1.0):
        nm = NoiseModel(schedule_for_epsilon(eps, K), seed=1)
        traces = sample_traces(p, nm, [1.0, 0.0], K, 400)
        bounds = [None] + [bound_sfeg(1.0, 1.0, nm.schedule, k) for k in range(1, K + 1)]
        assert all(r["pass"] for r in monte_carlo_report(traces, bounds))


def test_constant_noise_accumulates():
    p = make_bilinear(1.0)
    nm = NoiseModel(constant_schedule(0.1), seed=1)
    traces = sample_traces(p, nm, [1.0, 0.0], 30, 300)
    rows = monte_carlo_report(traces, [None] * 31, ks=[30])
    assert rows[0]["mean_grad_norm_sq"] > 0.05 and rows[0]["pass"] is None


def test_noise_inner_products_and_floor():
    # S-FEG needs monotone (rho = 0) problems; bilinear is the canonical case
    p = make_bilinear(1.0)
    sched = schedule_for_epsilon(0.5, 15)
    traces = sample_traces(p, NoiseModel(sched, seed=9), [1.0, 0.0], 15, 800)
    ip = noise_inner_products(traces)
    assert ip["first"].shape == (800,) and ip["half"].shape == (800, 14)
    assert all(r["pass"] for r in check_noise_bounds(traces, 1.0, sched))
    assert all(r["pass"] for r in check_potential_floor(traces, sched))
