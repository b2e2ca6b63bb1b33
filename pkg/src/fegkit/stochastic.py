"""Noisy oracles, the epsilon variance schedule, S-FEG and Monte Carlo checks.

Half-indices are written as reals: 0, 1, 1.5, 2, ... with k + 0.5 standing for
the half-iterate z_{k+1/2}. Noise for a query is drawn from a generator keyed
by (seed, trial, 2 * half_index), so trials are independent, replayable and
can run in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import (
    FegError,
    ParameterRangeError,
    ProblemSpec,
    evaluate_operator,
    inner,
    sqnorm,
)
from .solvers import (
    StepSchedule,
    Trace,
    _anchored_update,
    _feg_coefficients,
    _push,
    _require_lipschitz,
    _stationary,
    _start,
    anchor_beta,
)

FAMILIES = ("gaussian_iid", "rademacher_scaled")
SE_BAND = 4.0


def doubled(half_index) -> int:
    """2 * half_index as a nonnegative int; rejects anything off the half-integer grid."""
    h = 2.0 * float(half_index)
    if h < 0 or h != math.floor(h):
        raise ValueError(f"half_index must be a nonnegative multiple of 1/2, got {half_index}")
    return int(h)


@dataclass(frozen=True)
class VarianceSchedule:
    """Total noise variance per half-index; ``default`` covers indices not in ``table``."""

    table: Dict[int, float] = field(default_factory=dict)
    default: Optional[float] = None
    name: str = "custom"

    def __post_init__(self):
        vals = list(self.table.values()) + ([self.default] if self.default is not None else [])
        for v in vals:
            if not (v >= 0 and math.isfinite(v)):
                raise ParameterRangeError(f"variances must be finite and nonnegative, got {v}")

    def __getitem__(self, half_index) -> float:
        h = doubled(half_index)
        if h in self.table:
            return self.table[h]
        if self.default is None:
            raise FegError(f"variance schedule {self.name!r} has no entry for index {h / 2}")
        return self.default


def schedule_for_epsilon(eps: float, K: int) -> VarianceSchedule:
    """s_0 = eps/6, s_k = eps/(6k) and s_{k+1/2} = eps/(6(k+1)) for 1 <= k < K."""
    if not eps > 0:
        raise ParameterRangeError(f"eps must be positive, got {eps}")
    if K < 1:
        raise ValueError("K must be at least 1")
    table = {0: eps / 6.0}
    for k in range(1, K):
        table[2 * k] = eps / (6.0 * k)
        table[2 * k + 1] = eps / (6.0 * (k + 1))
    return VarianceSchedule(table, name=f"eps={eps}")


def constant_schedule(sigma2: float) -> VarianceSchedule:
    return VarianceSchedule(default=float(sigma2), name=f"constant={sigma2}")


def zero_schedule() -> VarianceSchedule:
    return VarianceSchedule(default=0.0, name="zero")


@dataclass(frozen=True)
class NoiseModel:
    schedule: VarianceSchedule
    seed: int = 0
    family: str = "gaussian_iid"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def draw(self, trial: int, half_index, d: int) -> np.ndarray:
        """The noise vector for one query; each coordinate has variance s/d."""
        h = doubled(half_index)
        s = self.schedule[half_index]
        if s == 0.0:
            return np.zeros(d)
        rng = np.random.default_rng([self.seed, trial, h])
        scale = math.sqrt(s / d)
        if self.family == "gaussian_iid":
            return scale * rng.standard_normal(d)
        return scale * np.where(rng.random(d) < 0.5, -1.0, 1.0)


def noisy_eval(F, noise: NoiseModel, z, half_index, trial: int = 0) -> np.ndarray:
    """F z plus the keyed noise draw for (seed, trial, half_index)."""
    op = F.operator if isinstance(F, ProblemSpec) else F
    Fz = evaluate_operator(op, z)
    return Fz + noise.draw(trial, half_index, op.dim)


def run_sfeg(problem: ProblemSpec, noise: NoiseModel, z0, K: int, trial: int = 0) -> Trace:
    """S-FEG: the FEG update at rho = 0 with noisy operator values.

    At k = 0 the half point equals z_0, so a single noisy query at index 0 is
    used for both sub-steps. ``grad_norm_sq`` holds noise-free values.
    """
    L = _require_lipschitz(problem, "S-FEG")
    if K < 1:
        raise ValueError("K must be at least 1")
    tr = _start("s-feg", problem.operator, z0, problem,
                {"L": L, "noise": noise, "trial": int(trial)})
    return _advance_sfeg(tr, K)


def _advance_sfeg(tr: Trace, extra: int) -> Trace:
    op = tr.operator
    L, noise, trial = tr.params["L"], tr.params["noise"], tr.params["trial"]
    alpha = 1.0 / L
    z0 = tr.z0
    for _ in range(extra):
        if _stationary(tr):
            break
        k = tr.iterations
        z_k = tr.iterates[-1]
        g_k = tr.last_value + noise.draw(trial, k, op.dim)
        beta = anchor_beta(k)
        c_half, c_full = _feg_coefficients(alpha, beta, 0.0)
        if k == 0:
            half_eval = lambda z: g_k  # noqa: E731
            calls = 1
        else:
            half_eval = lambda z: evaluate_operator(op, z, k) + noise.draw(trial, k + 0.5, op.dim)  # noqa: E731
            calls = 2
        z_half, _, z_next = _anchored_update(op, z_k, z0, g_k, k, beta, alpha, c_half, c_full,
                                             half_eval=half_eval)
        Fz_next = evaluate_operator(op, z_next, k + 1)
        tr.oracle_calls += calls
        _push(tr, z_half, z_next, Fz_next)
    return tr


def expected_potential_gap_floor(sched: StepSchedule, L: float, sigmas, k: int) -> float:
    """Lower bound on E[V_k] - E[V_{k+1}] for S-FEG (b_k = k)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if not L > 0:
        raise ParameterRangeError("L must be positive")
    if k == 0:
        a0 = sched.alpha(0)
        return -(L * L * a0**3 / 2.0 + L * a0 * a0) * sigmas[0]
    alpha, beta = sched.alpha(k), sched.beta(k)
    coef = k * alpha * (1.0 + 2.0 * L * alpha) / (2.0 * beta)
    return -coef * ((1.0 - beta) * sigmas[k] + sigmas[k + 0.5] / (1.0 - beta))


# Monte Carlo -----------------------------------------------------------------

def _mean_se(x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    se = x.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(x.shape[1:])
    return x.mean(axis=0), se


def sample_traces(problem: ProblemSpec, noise: NoiseModel, z0, K: int, trials: int) -> List[Trace]:
    """S-FEG traces for trials 0..trials-1, in trial order."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    return [run_sfeg(problem, noise, z0, K, trial=t) for t in range(trials)]


def monte_carlo_report(traces: Sequence[Trace], bounds: Sequence[Optional[float]],
                       ks: Optional[Sequence[int]] = None, band: float = SE_BAND) -> List[dict]:
    """{k, mean_grad_norm_sq, stderr, bound, pass} for each requested k.

    ``pass`` is mean <= bound + band * stderr, or None where there is no bound.
    """
    G = np.array([t.grad_norm_sq for t in traces])
    mean, se = _mean_se(G)
    ks = range(1, G.shape[1]) if ks is None else ks
    rows = []
    for k in ks:
        b = bounds[k]
        ok = None if b is None else bool(mean[k] <= b + band * se[k])
        rows.append({"k": int(k), "mean_grad_norm_sq": float(mean[k]), "stderr": float(se[k]),
                     "bound": b, "pass": ok})
    return rows


def noise_inner_products(traces: Sequence[Trace]) -> Dict[str, np.ndarray]:
    """Per-trial <F z_1, xi_0>, <F z_{k+1/2}, xi_k> and <F z_{k+1}, xi_{k+1/2}>.

    The noise is regenerated from its key, so nothing has to be recorded
    during the run. Rows are trials; columns of the k-indexed arrays are
    k = 1..K-1.
    """
    e0, e_half, e_full = [], [], []
    for tr in traces:
        op, noise, trial = tr.operator, tr.params["noise"], tr.params["trial"]
        d, K = op.dim, tr.iterations
        F = [evaluate_operator(op, z) for z in tr.iterates]
        e0.append(inner(F[1], noise.draw(trial, 0, d)))
        rh, rf = [], []
        for k in range(1, K):
            Fh = evaluate_operator(op, tr.half_iterates[k])
            rh.append(inner(Fh, noise.draw(trial, k, d)))
            rf.append(inner(F[k + 1], noise.draw(trial, k + 0.5, d)))
        e_half.append(rh)
        e_full.append(rf)
    return {"first": np.array(e0), "half": np.array(e_half), "full": np.array(e_full)}


def check_noise_bounds(traces: Sequence[Trace], L: float, sigmas, band: float = SE_BAND) -> List[dict]:
    """Compare the Monte Carlo noise inner products with their bounds (alpha = 1/L)."""
    alpha = 1.0 / L
    ip = noise_inner_products(traces)
    rows = []
    m, se = _mean_se(ip["first"][:, None])
    bnd = L * alpha * sigmas[0]
    rows.append({"which": "first", "k": 0, "mean": float(m[0]), "stderr": float(se[0]), "bound": bnd,
                 "pass": bool(abs(m[0]) <= bnd + band * se[0])})
    for name, key in (("half", "half"), ("full", "full")):
        m, se = _mean_se(ip[key])
        for i in range(m.shape[0]):
            k = i + 1
            beta = anchor_beta(k)
            if name == "half":
                bnd = L * (1.0 - beta) * alpha * sigmas[k]
            else:
                bnd = L * alpha * sigmas[k + 0.5]
            rows.append({"which": name, "k": k, "mean": float(m[i]), "stderr": float(se[i]),
                         "bound": bnd, "pass": bool(abs(m[i]) <= bnd + band * se[i])})
    return rows


def potential_gaps(traces: Sequence[Trace]) -> np.ndarray:
    """V_k - V_{k+1} per trial under the rho = 0 FEG ledger; rows are trials."""
    from .analysis import potential_ledger
    from .solvers import feg_schedule

    tr0 = traces[0]
    L, K = tr0.params["L"], tr0.iterations
    led = potential_ledger(feg_schedule(L, 0.0), lambda k: L, K)
    out = []
    for tr in traces:
        z0 = tr.iterates[0]
        V = []
        for k, z in enumerate(tr.iterates):
            Fz = evaluate_operator(tr.operator, z)
            V.append(led.a[k] * sqnorm(Fz) - led.b[k] * inner(Fz, z0 - z))
        out.append(np.diff(V) * -1.0)
    return np.array(out)


def check_potential_floor(traces: Sequence[Trace], sigmas, band: float = SE_BAND) -> List[dict]:
    """Monte Carlo mean of V_k - V_{k+1} against its floor, for k = 0..K-1."""
    from .solvers import feg_schedule

    L = traces[0].params["L"]
    sched = feg_schedule(L, 0.0)
    gaps = potential_gaps(traces)
    mean, se = _mean_se(gaps)
    rows = []
    for k in range(gaps.shape[1]):
        floor = expected_potential_gap_floor(sched, L, sigmas, k)
        rows.append({"k": k, "mean_gap": float(mean[k]), "stderr": float(se[k]), "floor": floor,
                     "pass": bool(mean[k] >= floor - band * se[k])})
    return rows
