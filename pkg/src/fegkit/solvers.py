"""The anchored two-time-scale extragradient engine and the named methods.

Every method produces a :class:`Trace`. Runs are deterministic, and
:func:`resume` continues a trace so that ``run(K1)`` followed by
``resume(extra=K2)`` matches ``run(K1 + K2)`` bitwise.
"""

from __future__ import annotations

import copy
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .core import (
    STATIONARY_TOL,
    FegError,
    OperatorHandle,
    ParameterRangeError,
    ProblemSpec,
    as_point,
    evaluate_operator,
    inner,
    sqnorm,
    vector_combine,
)

log = logging.getLogger(__name__)

MAX_SHRINKS = 10**6
# backtracking tests tolerate this many ulps of the operands, so differences
# that are pure rounding noise cannot trigger a shrink
ROUND_SLACK = 16.0 * np.finfo(np.float64).eps
METHODS = ("feg", "feg-a", "s-feg", "eg", "eg+", "eag-c", "eag-v")


class StopReason(str, enum.Enum):
    MAX_ITERS = "max_iters"
    STATIONARY = "stationary"
    ERROR = "error"


@dataclass(frozen=True)
class StepSchedule:
    """Coefficient sequences (alpha_k, beta_k, rho_k) of the anchored engine."""

    alpha: Callable[[int], float]
    beta: Callable[[int], float]
    rho_seq: Callable[[int], float]


def anchor_beta(k: int) -> float:
    return 1.0 / (k + 1)


def feg_schedule(L: float, rho: float) -> StepSchedule:
    step = 1.0 / L
    return StepSchedule(lambda k: step, anchor_beta, lambda k: rho)


def fega_schedule(taus: Sequence[float], etas: Sequence[float]) -> StepSchedule:
    """Schedule realised by an adaptive run: alpha_k = tau_k, rho_k = (eta_k - tau_k)/2."""
    taus, etas = list(taus), list(etas)
    return StepSchedule(
        lambda k: taus[k],
        anchor_beta,
        lambda k: (etas[k] - taus[k]) / 2.0,
    )


@dataclass
class Trace:
    method: str
    operator: OperatorHandle
    iterates: List[np.ndarray]
    half_iterates: List[np.ndarray] = field(default_factory=list)
    grad_norm_sq: List[float] = field(default_factory=list)
    step_tau: Optional[List[float]] = None
    step_eta: Optional[List[float]] = None
    oracle_calls: int = 0
    stop_reason: StopReason = StopReason.MAX_ITERS
    problem: Optional[ProblemSpec] = None
    params: dict = field(default_factory=dict)
    # EAG-V step sizes and backtracking counters (i_k, j_k).
    alpha_seq: Optional[List[float]] = None
    shrinks: Optional[List[tuple]] = None
    last_value: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def z0(self) -> np.ndarray:
        return self.iterates[0]

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    def copy(self) -> "Trace":
        out = copy.copy(self)
        for name in ("iterates", "half_iterates", "grad_norm_sq", "step_tau", "step_eta",
                     "alpha_seq", "shrinks"):
            val = getattr(self, name)
            if val is not None:
                setattr(out, name, list(val))
        out.params = dict(self.params)
        return out


def _frozen(z):
    z = np.asarray(z, dtype=np.float64)
    z.setflags(write=False)
    return z


def _start(method, op, z0, problem, params) -> Trace:
    z0 = as_point(z0, op.dim)
    Fz0 = evaluate_operator(op, z0, 0)
    tr = Trace(method, op, [z0], problem=problem, params=params)
    tr.grad_norm_sq.append(sqnorm(Fz0))
    tr.last_value = Fz0
    return tr


ANCHORED = ("feg", "feg-a", "s-feg", "eag-c", "eag-v")


def _stationary(trace: Trace) -> bool:
    """Stop once ||Fz_k|| < STATIONARY_TOL and the next update cannot move z_k.

    Anchored methods are pulled back toward z_0 from any stationary point
    other than z_0 itself, so for them the iterate must also sit on the anchor.
    """
    if math.sqrt(trace.grad_norm_sq[-1]) >= STATIONARY_TOL:
        return False
    if trace.method in ANCHORED and np.linalg.norm(trace.iterates[-1] - trace.z0) >= STATIONARY_TOL:
        return False
    trace.stop_reason = StopReason.STATIONARY
    return True


def _push(trace: Trace, z_half, z_next, Fz_next):
    trace.half_iterates.append(_frozen(z_half))
    trace.iterates.append(_frozen(z_next))
    trace.grad_norm_sq.append(sqnorm(Fz_next))
    trace.last_value = Fz_next


def _anchored_update(op, z_k, z_0, Fz_k, k, beta, alpha, c_half, c_full, half_eval=None):
    """One anchored extragradient step with explicit coefficients.

    z_half = z_k + beta (z_0 - z_k) - c_half Fz_k
    z_next = z_k + beta (z_0 - z_k) - alpha F z_half - c_full Fz_k

    ``half_eval`` replaces the exact evaluation at z_half (noisy oracles).
    """
    diff = z_0 - z_k
    z_half = vector_combine([(1.0, z_k), (beta, diff), (-c_half, Fz_k)])
    if half_eval is None:
        Fz_half = evaluate_operator(op, z_half, k)
    else:
        Fz_half = half_eval(z_half)
    z_next = vector_combine([(1.0, z_k), (beta, diff), (-alpha, Fz_half), (-c_full, Fz_k)])
    return z_half, Fz_half, z_next


def _feg_coefficients(alpha, beta, rho):
    return (1.0 - beta) * (alpha + 2.0 * rho), (1.0 - beta) * 2.0 * rho


def class_feg_step(z_k, z_0, F, k: int, sched: StepSchedule):
    """Return (z_half, z_next) of the anchored engine at index ``k``.

    Evaluates the operator exactly twice: once at ``z_k`` (reused in both
    sub-steps) and once at the half point.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    op = F.operator if isinstance(F, ProblemSpec) else F
    z_k = np.asarray(z_k, dtype=np.float64)
    Fz_k = evaluate_operator(op, z_k, k)
    alpha, beta, rho = sched.alpha(k), sched.beta(k), sched.rho_seq(k)
    c_half, c_full = _feg_coefficients(alpha, beta, rho)
    z_half, _, z_next = _anchored_update(op, z_k, np.asarray(z_0, dtype=np.float64), Fz_k, k,
                                         beta, alpha, c_half, c_full)
    return z_half, z_next


# FEG -----------------------------------------------------------------------

def _require_lipschitz(problem: ProblemSpec, method: str) -> float:
    if problem.lipschitz is None:
        raise ParameterRangeError(f"{method} needs a declared Lipschitz constant")
    return float(problem.lipschitz)


def run_feg(problem: ProblemSpec, z0, K: int, rho: Optional[float] = None) -> Trace:
    """FEG: alpha_k = 1/L, beta_k = 1/(k+1), rho_k = rho.

    ``rho`` defaults to the problem's declared comonotonicity and must exceed
    -1/(2L).
    """
    L = _require_lipschitz(problem, "FEG")
    if rho is None:
        rho = problem.comonotone
    if rho is None:
        raise ParameterRangeError("FEG needs a comonotonicity parameter rho")
    rho = float(rho)
    if not rho > -1.0 / (2.0 * L):
        raise ParameterRangeError(f"rho={rho} must exceed -1/(2L)={-1.0 / (2.0 * L)}")
    if K < 1:
        raise ValueError("K must be at least 1")
    tr = _start("feg", problem.operator, z0, problem, {"L": L, "rho": rho})
    return _advance_feg(tr, K)


def _advance_feg(tr: Trace, extra: int) -> Trace:
    op = tr.operator
    sched = feg_schedule(tr.params["L"], tr.params["rho"])
    z0 = tr.z0
    for _ in range(extra):
        if _stationary(tr):
            break
        k = tr.iterations
        alpha, beta, rho = sched.alpha(k), sched.beta(k), sched.rho_seq(k)
        c_half, c_full = _feg_coefficients(alpha, beta, rho)
        z_half, _, z_next = _anchored_update(op, tr.iterates[-1], z0, tr.last_value, k,
                                             beta, alpha, c_half, c_full)
        Fz_next = evaluate_operator(op, z_next, k + 1)
        tr.oracle_calls += 2
        _push(tr, z_half, z_next, Fz_next)
    return tr


# FEG-A ---------------------------------------------------------------------

def run_feg_a(F, z0, tau_init: float, eta_init: float, delta: float, K: int,
              problem: Optional[ProblemSpec] = None) -> Trace:
    """FEG with backtracking on tau (local 1/tau-Lipschitz) and eta (local comonotonicity).

    No problem constants are used. ``F`` may be an operator handle or a
    problem; every operator evaluation, rejected candidates included, is
    counted in ``oracle_calls``.
    """
    if isinstance(F, ProblemSpec):
        problem, F = F, F.operator
    if not (tau_init > 0 and eta_init > 0):
        raise ParameterRangeError("tau_init and eta_init must be positive")
    if not 0.0 < delta < 1.0:
        raise ParameterRangeError(f"delta must lie in (0, 1), got {delta}")
    if K < 1:
        raise ValueError("K must be at least 1")
    params = {"tau_init": float(tau_init), "eta_init": float(eta_init), "delta": float(delta),
              "total_shrinks": 0}
    tr = _start("feg-a", F, z0, problem, params)
    tr.oracle_calls = 1
    tr.step_tau, tr.step_eta, tr.shrinks = [], [], []
    if _stationary(tr):
        return tr

    z0, Fz0 = tr.z0, tr.last_value
    shrink = 1.0 - delta
    i = 0
    while True:
        tau = tau_init * shrink**i
        z_hat = vector_combine([(1.0, z0), (-tau, Fz0)])
        Fz_hat = evaluate_operator(F, z_hat, 0)
        tr.oracle_calls += 1
        if _lipschitz_ok(tau, z_hat, z0, Fz_hat, Fz0):
            break
        i += 1
        _count_shrinks(tr, 1, tau)
    tr.step_tau.append(tau)
    tr.step_eta.append(float(eta_init))
    tr.shrinks.append((i, 0))
    _push(tr, z0, z_hat, Fz_hat)
    return _advance_feg_a(tr, K - 1)


def _lipschitz_ok(tau, z, w, Fz, Fw) -> bool:
    """tau ||Fz - Fw|| <= ||z - w||, up to the rounding in forming either side."""
    nz = np.linalg.norm
    slack = ROUND_SLACK * (nz(z) + nz(w) + tau * (nz(Fz) + nz(Fw)))
    return tau * nz(Fz - Fw) <= nz(z - w) + slack


def _comonotone_ok(c, z, w, Fz, Fw) -> bool:
    """<Fz - Fw, z - w> >= c ||Fz - Fw||^2, up to rounding."""
    nz = np.linalg.norm
    dF, dz = Fz - Fw, z - w
    sF, sz = nz(Fz) + nz(Fw), nz(z) + nz(w)
    slack = ROUND_SLACK * (nz(dF) * sz + nz(dz) * sF + abs(c) * nz(dF) * sF)
    return inner(dF, dz) >= c * sqnorm(dF) - slack


def _count_shrinks(tr: Trace, n: int, *steps):
    tr.params["total_shrinks"] += n
    if tr.params["total_shrinks"] > MAX_SHRINKS or min(steps) < 1e-300:
        tr.stop_reason = StopReason.ERROR
        raise FegError("operator violates assumptions at achievable step sizes "
                       f"({tr.params['total_shrinks']} backtracking shrinks)")


def _advance_feg_a(tr: Trace, extra: int) -> Trace:
    if not tr.step_tau or not tr.step_eta:
        raise FegError("FEG-A trace is missing its tau/eta state")
    op = tr.operator
    shrink = 1.0 - tr.params["delta"]
    z0 = tr.z0
    for _ in range(extra):
        if _stationary(tr):
            break
        k = tr.iterations
        z_k, Fz_k = tr.iterates[-1], tr.last_value
        beta = anchor_beta(k)
        tau_prev, eta_prev = tr.step_tau[-1], tr.step_eta[-1]
        i = j = 0
        while True:
            tau = tau_prev * shrink**i
            eta = eta_prev * shrink**j
            z_half, Fz_half, z_next = _anchored_update(
                op, z_k, z0, Fz_k, k, beta, tau, (1.0 - beta) * eta, (1.0 - beta) * (eta - tau))
            Fz_next = evaluate_operator(op, z_next, k + 1)
            tr.oracle_calls += 2
            searching = False
            if not _lipschitz_ok(tau, z_next, z_half, Fz_next, Fz_half):
                i += 1
                searching = True
            if not _comonotone_ok((eta - tau) / 2.0, z_next, z_k, Fz_next, Fz_k):
                j += 1
                searching = True
            if not searching:
                break
            _count_shrinks(tr, 1, tau, eta)
        tr.step_tau.append(tau)
        tr.step_eta.append(eta)
        tr.shrinks.append((i, j))
        _push(tr, z_half, z_next, Fz_next)
    return tr


# EG / EG+ ------------------------------------------------------------------

def run_eg_plus(problem: ProblemSpec, z0, K: int, alpha: Optional[float] = None,
                beta: float = 0.5) -> Trace:
    """EG+: z_half = z_k - (alpha/beta) F z_k, z_next = z_k - alpha F z_half.

    Defaults to alpha = 1/(2L), beta = 1/2; beta = 1 gives plain extragradient.
    """
    if alpha is None:
        alpha = 1.0 / (2.0 * _require_lipschitz(problem, "EG+"))
    if not alpha > 0:
        raise ParameterRangeError("alpha must be positive")
    if not 0.0 < beta <= 1.0:
        raise ParameterRangeError(f"beta must lie in (0, 1], got {beta}")
    if K < 1:
        raise ValueError("K must be at least 1")
    method = "eg" if beta == 1.0 else "eg+"
    tr = _start(method, problem.operator, z0, problem, {"alpha": float(alpha), "beta": float(beta)})
    return _advance_eg_plus(tr, K)


def run_eg(problem: ProblemSpec, z0, K: int, alpha: Optional[float] = None) -> Trace:
    """Plain extragradient with step 1/L unless ``alpha`` is given."""
    if alpha is None:
        alpha = 1.0 / _require_lipschitz(problem, "EG")
    return run_eg_plus(problem, z0, K, alpha=alpha, beta=1.0)


def _advance_eg_plus(tr: Trace, extra: int) -> Trace:
    op = tr.operator
    alpha, beta = tr.params["alpha"], tr.params["beta"]
    for _ in range(extra):
        if _stationary(tr):
            break
        k = tr.iterations
        z_k, Fz_k = tr.iterates[-1], tr.last_value
        z_half = vector_combine([(1.0, z_k), (-(alpha / beta), Fz_k)])
        Fz_half = evaluate_operator(op, z_half, k)
        z_next = vector_combine([(1.0, z_k), (-alpha, Fz_half)])
        Fz_next = evaluate_operator(op, z_next, k + 1)
        tr.oracle_calls += 2
        _push(tr, z_half, z_next, Fz_next)
    return tr


# EAG -----------------------------------------------------------------------

EAG_V_ALPHA0 = 0.618


def eag_v_steps(L: float, n: int, start: Optional[List[float]] = None) -> List[float]:
    """First ``n`` EAG-V step sizes, optionally extending an existing prefix."""
    alphas = list(start) if start else [EAG_V_ALPHA0 / L]
    while len(alphas) < n:
        k = len(alphas) - 1
        a = alphas[-1]
        t = a * a * L * L
        if t >= 1.0:
            raise FegError(f"EAG-V recursion breaks down at k={k}: alpha^2 L^2 = {t}")
        ratio = (k + 2) ** 2 / ((k + 1) * (k + 3))
        alphas.append(a / (1.0 - t) * (1.0 - ratio * t))
    return alphas


def run_eag(problem: ProblemSpec, z0, K: int, variant: str = "C") -> Trace:
    """Extra anchored gradient with beta_k = 1/(k+2).

    Variant ``C`` uses alpha_k = 1/(8L); variant ``V`` uses the recursive
    step-size rule started from 0.618/L.
    """
    L = _require_lipschitz(problem, "EAG")
    variant = variant.upper()
    if variant not in ("C", "V"):
        raise ValueError(f"unknown EAG variant {variant!r}")
    if K < 1:
        raise ValueError("K must be at least 1")
    tr = _start(f"eag-{variant.lower()}", problem.operator, z0, problem, {"L": L, "variant": variant})
    if variant == "V":
        tr.alpha_seq = eag_v_steps(L, K)
    return _advance_eag(tr, K)


def _advance_eag(tr: Trace, extra: int) -> Trace:
    op = tr.operator
    L = tr.params["L"]
    z0 = tr.z0
    if tr.params["variant"] == "V":
        tr.alpha_seq = eag_v_steps(L, tr.iterations + extra, tr.alpha_seq)
    for _ in range(extra):
        if _stationary(tr):
            break
        k = tr.iterations
        alpha = tr.alpha_seq[k] if tr.alpha_seq is not None else 1.0 / (8.0 * L)
        beta = 1.0 / (k + 2)
        z_half, _, z_next = _anchored_update(op, tr.iterates[-1], z0, tr.last_value, k,
                                             beta, alpha, alpha, 0.0)
        Fz_next = evaluate_operator(op, z_next, k + 1)
        tr.oracle_calls += 2
        _push(tr, z_half, z_next, Fz_next)
    return tr


# dispatch ------------------------------------------------------------------

def resume(trace: Trace, extra: int) -> Trace:
    """Continue ``trace`` for ``extra`` more iterations; the input is left untouched."""
    if extra < 0:
        raise ValueError("extra must be nonnegative")
    out = trace.copy()
    if trace.stop_reason != StopReason.MAX_ITERS:
        return out
    if out.last_value is None:
        out.last_value = evaluate_operator(out.operator, out.iterates[-1])
    method = trace.method
    if method == "feg":
        return _advance_feg(out, extra)
    if method == "feg-a":
        return _advance_feg_a(out, extra)
    if method in ("eg", "eg+"):
        return _advance_eg_plus(out, extra)
    if method in ("eag-c", "eag-v"):
        return _advance_eag(out, extra)
    if method == "s-feg":
        from .stochastic import _advance_sfeg

        return _advance_sfeg(out, extra)
    raise ValueError(f"cannot resume a trace from method {method!r}")
