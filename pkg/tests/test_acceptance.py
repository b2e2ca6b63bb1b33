"""Acceptance checks 1-9. Each prints a single PASS/FAIL line with timing."""

import time

import numpy as np
import pytest

from fegkit.analysis import (
    bound_eag_c,
    bound_eag_v,
    bound_feg,
    bound_fega,
    certify_potential,
    check_span,
)
from fegkit.problems import (
    make_bilinear,
    make_scaled_identity,
    make_worst_case_smooth,
    random_negative_comonotone,
)
from fegkit.solvers import run_eag, run_eg, run_eg_plus, run_feg, run_feg_a
from fegkit.stochastic import (
    NoiseModel,
    check_noise_bounds,
    constant_schedule,
    monte_carlo_report,
    run_sfeg,
    sample_traces,
    schedule_for_epsilon,
    zero_schedule,
)


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail, elapsed):
        with capsys.disabled():
            print(f"\n[acceptance {n}] {'PASS' if ok else 'FAIL'}: {detail} ({elapsed:.2f} s)")
        assert ok, detail
    return _report


def _random_suite():
    """20 seeded negative-comonotone quadratics, d in {2,4,6}, rho in {-0.05,-0.1}."""
    out = []
    for seed in range(20):
        d = (2, 4, 6)[seed % 3]
        rho = (-0.05, -0.1)[seed % 2]
        p = random_negative_comonotone(seed, d, rho)
        z0 = np.random.default_rng(1000 + seed).uniform(-1.0, 1.0, d)
        out.append((f"random-nc(seed={seed},d={d},rho={rho})", p, z0))
    return out


def _sweep_problems():
    probs = [("bilinear", make_bilinear(1.0), np.array([1.0, 0.0]))]
    for mu in (1.0, 2.0):
        probs.append((f"scaled-identity(mu={mu})", make_scaled_identity(mu), np.array([1.0, -0.5])))
    return probs + _random_suite()


_SWEEP = {}


def _sweep_runs():
    if not _SWEEP:
        t0 = time.perf_counter()
        runs = [(name, p, run_feg(p, z0, 10**4)) for name, p, z0 in _sweep_problems()]
        _SWEEP["runs"], _SWEEP["elapsed"] = runs, time.perf_counter() - t0
    return _SWEEP["runs"], _SWEEP["elapsed"]


_SFEG = {}


def _sfeg_traces(key):
    if key not in _SFEG:
        p = make_bilinear(1.0)
        sched = constant_schedule(0.1) if key == "const" else schedule_for_epsilon(key, 30)
        t0 = time.perf_counter()
        traces = sample_traces(p, NoiseModel(sched, seed=20240), [1.0, 0.0], 30, 2000)
        _SFEG[key] = (sched, traces, time.perf_counter() - t0)
    return _SFEG[key]


def test_criterion_1_exact_trajectory(report):
    t0 = time.perf_counter()
    tr = run_feg(make_bilinear(1.0), [1.0, 0.0], 4 * 25 + 2, rho=0.0)
    errs = [np.max(np.abs(tr.iterates[1] - [1.0, 1.0])), np.max(np.abs(tr.iterates[2] - [0.0, 1.0]))]
    rel = []
    for l in range(26):
        k = 4 * l + 2
        errs.append(np.max(np.abs(tr.iterates[k] - [0.0, 1.0 / (2 * l + 1)])))
        target = 1.0 / (2 * l + 1) ** 2
        rel.append(abs(tr.grad_norm_sq[k] - target) / target)
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 1e-12 and max(rel) <= 1e-10 and elapsed < 1.0
    report(1, ok, f"max coord err {max(errs):.1e}, max rel grad err {max(rel):.1e}", elapsed)


def test_criterion_2_feg_bound_sweep(report):
    runs, elapsed = _sweep_runs()
    worst, bad = 0.0, []
    for name, p, tr in runs:
        rho = p.comonotone
        D = float(np.linalg.norm(tr.z0 - p.solution))
        for k in range(1, 10**4 + 1):
            b = bound_feg(p.lipschitz, rho, D, k)
            g = tr.grad_norm_sq[k]
            worst = max(worst, g / b)
            if g > (1 + 1e-9) * b:
                bad.append((name, k))
    ok = not bad and elapsed < 30.0 and all(tr.iterations == 10**4 for _, _, tr in runs)
    report(2, ok, f"{len(runs)} problems x 1e4 iters, max ratio to bound {worst:.6f}, violations {len(bad)}",
           elapsed)


def test_criterion_3_potential(report):
    runs, _ = _sweep_runs()
    t0 = time.perf_counter()
    bad = []
    for name, p, tr in runs:
        cert = certify_potential(tr, p)
        V = cert.V
        mono = all(V[k] <= V[k - 1] + 1e-9 * (1 + abs(V[k - 1])) for k in range(1, len(V)))
        chain = V[1] <= 1e-9 and all(v <= V[1] + 1e-9 * (1 + abs(V[1])) for v in V[1:])
        if not (cert.passed and mono and chain):
            bad.append(name)
    elapsed = time.perf_counter() - t0
    report(3, not bad, f"{len(runs)} runs, monotone and V_k <= V_1 <= 0; failing: {bad or 'none'}", elapsed)


def test_criterion_4_fega(report):
    t0 = time.perf_counter()
    probs = [("bilinear", make_bilinear(1.0), np.array([1.0, 0.0]))] + _random_suite()
    bad, total_shrinks = [], 0
    for delta in (0.1, 0.5):
        for name, p, z0 in probs:
            L, rho = p.lipschitz, p.comonotone
            tr = run_feg_a(p.operator, z0, 10.0 / L, 10.0 / L, delta, 10**3, problem=p)
            total_shrinks += tr.params["total_shrinks"]
            tau_ok = min(tr.step_tau) > (1 - delta) / L - 1e-9
            eta_ok = min(tr.step_eta) > (1 - delta) ** 2 / L + (1 - delta) * 2 * rho - 1e-9
            late = [s for s in tr.shrinks[100:] if s != (0, 0)]
            D = float(np.linalg.norm(z0 - p.solution))
            bound_ok = all(tr.grad_norm_sq[k] <= (1 + 1e-9) * bound_fega(L, rho, delta, D, k)
                           for k in range(1, tr.iterations + 1))
            if not (tau_ok and eta_ok and not late and bound_ok and tr.iterations == 10**3):
                bad.append((name, delta))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 10.0
    report(4, ok, f"{2 * len(probs)} runs, {total_shrinks} shrinks total, failing: {bad or 'none'}", elapsed)


def test_criterion_5_sfeg(report):
    ks = [5, 10, 20, 30]
    elapsed, lines, ok = 0.0, [], True
    for eps in (0.1, 1.0):
        sched, traces, dt = _sfeg_traces(eps)
        elapsed += dt
        bounds = [None] + [4.0 / k**2 + eps for k in range(1, 31)]
        rows = monte_carlo_report(traces, bounds, ks=ks, band=4.0)
        ok &= all(r["pass"] for r in rows)
        lines.append(f"eps={eps}: max mean-bound {max(r['mean_grad_norm_sq'] - r['bound'] for r in rows):+.3g}")
    _, traces, dt = _sfeg_traces("const")
    elapsed += dt
    mean30 = float(np.mean([t.grad_norm_sq[30] for t in traces]))
    ok &= mean30 > 4.0 / 30**2 + 0.05
    ok &= elapsed < 60.0
    report(5, ok, "; ".join(lines) + f"; constant sigma2=0.1 mean at k=30 {mean30:.3f}", elapsed)


def test_criterion_6_noise_inner_products(report):
    t0 = time.perf_counter()
    ok, n = True, 0
    for eps in (0.1, 1.0):
        sched, traces, _ = _sfeg_traces(eps)
        rows = check_noise_bounds(traces, 1.0, sched, band=4.0)
        n += len(rows)
        ok &= all(r["pass"] for r in rows)
    elapsed = time.perf_counter() - t0
    report(6, ok, f"{n} inner-product expectations checked over 2000 trials", elapsed)


def test_criterion_7_span_stall(report):
    t0 = time.perf_counter()
    p = make_worst_case_smooth(1.0, 1.0)
    z0 = [0.0, 0.0]
    traces = {
        "feg": run_feg(p, z0, 100, rho=0.0),
        "feg-a": run_feg_a(p.operator, z0, 1.0, 1.0, 0.5, 100, problem=p),
        "s-feg": run_sfeg(p, NoiseModel(zero_schedule()), z0, 100),
        "eg": run_eg(p, z0, 100),
        "eg+": run_eg_plus(p, z0, 100),
        "eag-c": run_eag(p, z0, 100, variant="C"),
        "eag-v": run_eag(p, z0, 100, variant="V"),
    }
    bad = [m for m, tr in traces.items()
           if len(tr.grad_norm_sq) != 101 or any(g != 2.0 for g in tr.grad_norm_sq)
           or not check_span(tr, p.operator)]
    elapsed = time.perf_counter() - t0
    report(7, not bad, f"{len(traces)} methods stall at ||Fz||^2 = 2; failing: {bad or 'none'}", elapsed)


def test_criterion_8_constant_comparison(report):
    t0 = time.perf_counter()
    ks = list(range(4, 10**4)) + [10**5, 10**6, 10**8]
    viol = [k for k in ks
            if not bound_feg(1.0, 0.0, 1.0, k) <= (4 / 27) * (1 + 1e-12) * bound_eag_v(1.0, 1.0, k)]
    ratio = bound_feg(1.0, 0.0, 1.0, 10**8) / bound_eag_v(1.0, 1.0, 10**8)
    elapsed = time.perf_counter() - t0
    report(8, not viol,
           f"{len(viol)} of {len(ks)} k violate the finite-k inequality; "
           f"asymptotic ratio {ratio:.8f} vs 4/27 = {4 / 27:.8f}", elapsed)


def test_criterion_9_baselines(report):
    t0 = time.perf_counter()
    p = make_bilinear(1.0)
    z0 = [1.0, 0.0]
    K = 10**3
    traces = {
        "eg+": run_eg_plus(p, z0, K, alpha=0.5, beta=0.5),
        "eag-c": run_eag(p, z0, K, variant="C"),
        "eag-v": run_eag(p, z0, K, variant="V"),
    }
    bad = []
    for name, tr in traces.items():
        best = np.minimum.accumulate(tr.grad_norm_sq)
        if np.any(np.diff(best) > 0) or not best[-1] < 1e-3 * best[0]:
            bad.append(name)
    for name in ("eag-c", "eag-v"):
        tr = traces[name]
        if any(tr.grad_norm_sq[k] > bound_eag_c(1.0, 1.0, k) for k in range(len(tr.grad_norm_sq))):
            bad.append(name + " bound")
    elapsed = time.perf_counter() - t0
    report(9, not bad, f"best-iterate decrease and 260/(k+1)^2 bound; failing: {bad or 'none'}", elapsed)
