"""Certificates for traces: potential ledger, rate-bound oracles, estimators, span test."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .core import (
    FegError,
    OperatorHandle,
    ParameterRangeError,
    ProblemSpec,
    evaluate_operator,
    inner,
    sqnorm,
)
from .solvers import StepSchedule, Trace, feg_schedule, fega_schedule

log = logging.getLogger(__name__)

CERT_TOL = 1e-9
ALGEBRA_TOL = 1e-12
SPAN_TOL = 1e-8
DEGENERATE = 1e-12


# potential ledger ------------------------------------------------------------

@dataclass
class PotentialLedger:
    """Coefficients a_k, b_k of V_k = a_k ||Fz_k||^2 - b_k <Fz_k, z_0 - z_k>.

    ``V`` is filled in by :func:`certify_potential`.
    """

    a: List[float]
    b: List[float]
    V: List[float] = field(default_factory=list)

    def __len__(self):
        return len(self.a)


def _const(value):
    return lambda k: value


def potential_ledger(sched: StepSchedule, L_seq: Callable[[int], float], K: int) -> PotentialLedger:
    """a_k and b_k for 0 <= k <= K, with b_k built by its recursion."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    alpha0, L0 = sched.alpha(0), L_seq(0)
    a = [alpha0 * (L0 * L0 * alpha0 * alpha0 - 1.0) / 2.0]
    b = [0.0]
    bk = 1.0
    for k in range(1, K + 1):
        if k > 1:
            bk = bk / (1.0 - sched.beta(k - 1))
        beta, alpha, rho = sched.beta(k), sched.alpha(k), sched.rho_seq(k)
        a.append(bk * (1.0 - beta) / (2.0 * beta) * (alpha + 2.0 * rho) - bk * rho)
        b.append(bk)
    return PotentialLedger(a, b)


def potential_coefficients(sched: StepSchedule, L_seq, k: int):
    """Return (a_k, b_k)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if not callable(L_seq):
        L_seq = _const(float(L_seq))
    led = potential_ledger(sched, L_seq, k)
    return led.a[k], led.b[k]


def check_schedule_admissible(sched: StepSchedule, L_seq, K: int, tol: float = ALGEBRA_TOL) -> bool:
    """Check the hypotheses on (alpha, beta, rho) required by the potential lemma.

    beta_0 = 1, beta_k in (0, 1) and alpha_k in (0, 1/L_k] for k >= 1, alpha_0 > 0,
    and the coupling inequality between consecutive indices, for 0 <= k < K.
    """
    if not callable(L_seq):
        L_seq = _const(float(L_seq))
    if abs(sched.beta(0) - 1.0) > tol or not sched.alpha(0) > 0:
        return False

    def level(k, shrink):
        beta = sched.beta(k)
        c = (1.0 - beta) if shrink else 1.0
        return c / (2.0 * beta) * (sched.alpha(k) + 2.0 * sched.rho_seq(k)) - sched.rho_seq(k)

    for k in range(K):
        if k >= 1:
            beta, alpha = sched.beta(k), sched.alpha(k)
            if not (0.0 < beta < 1.0):
                return False
            if not (alpha > 0 and alpha <= (1.0 / L_seq(k)) * (1.0 + tol)):
                return False
        lhs, rhs = level(k + 1, True), level(k, False)
        if lhs > rhs + tol * (1.0 + abs(rhs)):
            return False
    return True


def schedule_of(trace: Trace):
    """(schedule, L_seq, last usable k) behind a trace from the anchored family, or None."""
    if trace.method == "feg":
        L, rho = trace.params["L"], trace.params["rho"]
        return feg_schedule(L, rho), _const(L), trace.iterations
    if trace.method == "s-feg":
        L = trace.params["L"]
        return feg_schedule(L, 0.0), _const(L), trace.iterations
    if trace.method == "feg-a":
        taus, etas = trace.step_tau or [], trace.step_eta or []
        if not taus:
            return None
        # a_k needs (tau_k, eta_k), which exist only for k below the final index.
        return fega_schedule(taus, etas), (lambda k: 1.0 / taus[k]), len(taus) - 1
    return None


def evaluate_potential(trace: Trace, ledger: PotentialLedger, problem=None, k: int = 0) -> float:
    """V_k from a fresh operator evaluation at z_k."""
    if not 0 <= k < min(len(trace.iterates), len(ledger)):
        raise IndexError(f"potential index {k} out of range")
    op = problem.operator if isinstance(problem, ProblemSpec) else (problem or trace.operator)
    z0, zk = trace.iterates[0], trace.iterates[k]
    Fz = evaluate_operator(op, zk, k)
    return ledger.a[k] * sqnorm(Fz) - ledger.b[k] * inner(Fz, z0 - zk)


@dataclass
class PotentialCertificate:
    passed: bool
    V: List[float]
    conditions_ok: List[bool]
    monotone_ok: List[bool]
    admissible: bool
    notes: List[str] = field(default_factory=list)


def _le(lhs, rhs, tol):
    return lhs <= rhs + tol * (1.0 + abs(rhs))


def certify_potential(trace: Trace, problem=None, tol: float = CERT_TOL) -> Optional[PotentialCertificate]:
    """Check V_k <= V_{k-1} along a trace from the anchored family.

    The per-step Lipschitz and comonotonicity conditions are checked from the
    iterates. Where they fail the step is logged and skipped rather than
    counted against the certificate; the global assumptions can be violated
    at rounding scale without the iteration being wrong. Returns None for
    methods outside the anchored family.
    """
    found = schedule_of(trace)
    if found is None:
        return None
    sched, L_seq, last = found
    op = problem.operator if isinstance(problem, ProblemSpec) else (problem or trace.operator)
    last = min(last, trace.iterations)
    ledger = potential_ledger(sched, L_seq, last)
    F = [evaluate_operator(op, trace.iterates[k], k) for k in range(last + 1)]
    z0 = trace.iterates[0]
    V = [ledger.a[k] * sqnorm(F[k]) - ledger.b[k] * inner(F[k], z0 - trace.iterates[k])
         for k in range(last + 1)]
    ledger.V = V
    admissible = check_schedule_admissible(sched, L_seq, max(last, 1))
    cond, mono, notes = [], [], []
    for k in range(last):
        z, zn = trace.iterates[k], trace.iterates[k + 1]
        if k == 0:
            ok = _le(np.linalg.norm(F[1] - F[0]), L_seq(0) * np.linalg.norm(zn - z), tol)
        else:
            zh = trace.half_iterates[k]
            Fh = evaluate_operator(op, zh, k)
            lip = _le(np.linalg.norm(F[k + 1] - Fh), L_seq(k) * np.linalg.norm(zn - zh), tol)
            dF = F[k + 1] - F[k]
            lhs, rhs = inner(dF, zn - z), sched.rho_seq(k) * sqnorm(dF)
            como = lhs >= rhs - tol * (1.0 + abs(lhs) + abs(rhs))
            ok = lip and como
        cond.append(ok)
        if not ok:
            notes.append(f"step {k}: per-step condition violated, monotonicity not asserted")
            log.info("potential certificate: per-step condition fails at k=%d", k)
            mono.append(True)
            continue
        mono.append(_le(V[k + 1], V[k], tol))
    passed = admissible and all(mono)
    if not admissible:
        notes.append("schedule is not admissible")
    return PotentialCertificate(passed, V, cond, mono, admissible, notes)


# rate bounds -----------------------------------------------------------------

def _check_common(L, D, k):
    if not L > 0:
        raise ParameterRangeError(f"L must be positive, got {L}")
    if D < 0:
        raise ParameterRangeError(f"D must be nonnegative, got {D}")
    if k < 1:
        raise ParameterRangeError(f"k must be a positive integer, got {k}")


def bound_feg(L: float, rho: float, D: float, k: int) -> float:
    """4 D^2 / ((1/L + 2 rho)^2 k^2)."""
    _check_common(L, D, k)
    if not rho > -1.0 / (2.0 * L):
        raise ParameterRangeError(f"rho={rho} must exceed -1/(2L)")
    return 4.0 * D * D / ((1.0 / L + 2.0 * rho) ** 2 * k * k)


def bound_fega(L: float, rho: float, delta: float, D: float, k: int) -> float:
    """4 D^2 / (((k-1)(1-delta)+1)^2 ((1-delta)/L + 2 rho)^2)."""
    _check_common(L, D, k)
    if not 0.0 <= delta < 1.0:
        raise ParameterRangeError(f"delta must lie in [0, 1), got {delta}")
    if not rho > -(1.0 - delta) / (2.0 * L):
        raise ParameterRangeError(f"rho={rho} must exceed -(1-delta)/(2L)")
    lead = (k - 1) * (1.0 - delta) + 1.0
    return 4.0 * D * D / (lead**2 * ((1.0 - delta) / L + 2.0 * rho) ** 2)


def _variance(sigmas, half_index):
    s = float(sigmas[half_index])
    if s < 0 or not math.isfinite(s):
        raise ParameterRangeError(f"variance at {half_index} must be finite and nonnegative, got {s}")
    return s


def bound_sfeg(L: float, D: float, sigmas, k: int) -> float:
    """4 L^2 D^2/k^2 + (6/k^2)[s_0 + sum_{l=1}^{k-1} (l^2 s_l + (l+1)^2 s_{l+1/2})].

    ``sigmas`` maps a half-index (0, 1, 1.5, ...) to a total variance.
    """
    _check_common(L, D, k)
    acc = _variance(sigmas, 0)
    for l in range(1, k):
        acc += l * l * _variance(sigmas, l) + (l + 1) ** 2 * _variance(sigmas, l + 0.5)
    return 4.0 * L * L * D * D / (k * k) + 6.0 * acc / (k * k)


def bound_sfeg_series(L: float, D: float, sigmas, K: int) -> List[float]:
    """bound_sfeg for k = 1..K with a running sum."""
    _check_common(L, D, K)
    out, acc = [], _variance(sigmas, 0)
    for k in range(1, K + 1):
        if k > 1:
            l = k - 1
            acc += l * l * _variance(sigmas, l) + (l + 1) ** 2 * _variance(sigmas, l + 0.5)
        out.append(4.0 * L * L * D * D / (k * k) + 6.0 * acc / (k * k))
    return out


def bound_eag_c(L: float, D: float, k: int) -> float:
    """260 L^2 D^2 / (k+1)^2, valid for k >= 0."""
    _check_common(L, D, k + 1)
    return 260.0 * L * L * D * D / (k + 1) ** 2


def bound_eag_v(L: float, D: float, k: int) -> float:
    """27 L^2 D^2 / ((k+1)(k+2)), valid for k >= 0."""
    _check_common(L, D, k + 1)
    return 27.0 * L * L * D * D / ((k + 1) * (k + 2))


def bound_halpern(rho: float, D: float, k: int) -> float:
    """D^2 / (rho^2 k^2): the quoted Halpern rate for rho-cocoercive operators (rate only)."""
    if not rho > 0:
        raise ParameterRangeError("the Halpern rate needs rho > 0")
    _check_common(1.0, D, k)
    return D * D / (rho * rho * k * k)


def bound_series(trace: Trace, problem: Optional[ProblemSpec] = None, sigmas=None) -> List[Optional[float]]:
    """Rate bound for each index of ``trace``; None where no bound applies."""
    problem = problem or trace.problem
    n = len(trace.iterates)
    none = [None] * n
    if problem is None or problem.solution is None or problem.lipschitz is None:
        return none
    D = float(np.linalg.norm(trace.iterates[0] - problem.solution))
    L = float(problem.lipschitz)
    m = trace.method
    if m == "feg":
        rho = trace.params["rho"]
        return [None] + [bound_feg(L, rho, D, k) for k in range(1, n)]
    if m == "feg-a":
        rho, delta = problem.comonotone, trace.params["delta"]
        if rho is None or not rho > -(1.0 - delta) / (2.0 * L):
            return none
        return [None] + [bound_fega(L, rho, delta, D, k) for k in range(1, n)]
    if m == "eag-c":
        return [bound_eag_c(L, D, k) for k in range(n)]
    if m == "eag-v":
        return [bound_eag_v(L, D, k) for k in range(n)]
    if m == "s-feg" and sigmas is not None and n > 1:
        return [None] + bound_sfeg_series(L, D, sigmas, n - 1)
    return none


def certify_bound(trace: Trace, bounds, tol: float = CERT_TOL) -> Optional[bool]:
    """True when every defined bound holds with relative slack ``tol``; None if none apply."""
    checked = [(g, b) for g, b in zip(trace.grad_norm_sq, bounds) if b is not None]
    if not checked:
        return None
    return all(g <= (1.0 + tol) * b for g, b in checked)


# estimators ------------------------------------------------------------------

@dataclass(frozen=True)
class PairSampler:
    """Seeded uniform pairs in the box [low, high]^dim."""

    seed: int
    dim: int
    low: float = -3.0
    high: float = 3.0

    def __call__(self, n: int):
        rng = np.random.default_rng(self.seed)
        Z = rng.uniform(self.low, self.high, (n, self.dim))
        W = rng.uniform(self.low, self.high, (n, self.dim))
        return zip(Z, W)


def estimate_lipschitz(F: OperatorHandle, sampler, n: int) -> float:
    """max ||Fz - Fz'|| / ||z - z'|| over ``n`` sampled pairs."""
    if n < 1:
        raise ValueError("n must be at least 1")
    best, used = 0.0, 0
    for z, w in sampler(n):
        dz = np.linalg.norm(z - w)
        if dz < DEGENERATE:
            continue
        used += 1
        best = max(best, float(np.linalg.norm(evaluate_operator(F, z) - evaluate_operator(F, w))) / dz)
    if used == 0:
        raise FegError("all sampled pairs were degenerate")
    return best


def estimate_comonotonicity(F: OperatorHandle, sampler, n: int) -> float:
    """min <Fz - Fz', z - z'> / ||Fz - Fz'||^2 over ``n`` sampled pairs."""
    if n < 1:
        raise ValueError("n must be at least 1")
    best, used = math.inf, 0
    for z, w in sampler(n):
        dF = evaluate_operator(F, z) - evaluate_operator(F, w)
        nf = sqnorm(dF)
        if math.sqrt(nf) < DEGENERATE:
            continue
        used += 1
        best = min(best, inner(dF, z - w) / nf)
    if used == 0:
        raise FegError("all sampled pairs were degenerate")
    return best


# span ------------------------------------------------------------------------

def check_span(trace: Trace, F: Optional[OperatorHandle] = None, tol: float = SPAN_TOL) -> bool:
    """True when every iterate and half-iterate lies in z_0 + span of earlier operator values.

    The spanning set for a point of index t (integer or half-integer) is F at
    every stored point of index at most t.
    """
    op = F.operator if isinstance(F, ProblemSpec) else (F or trace.operator)
    z0 = trace.iterates[0]
    if z0.size > 16:
        raise ValueError("check_span is meant for dimension at most 16")
    points = [(0.0, trace.iterates[0])]
    for k in range(1, len(trace.iterates)):
        if k - 1 < len(trace.half_iterates):
            points.append((k - 0.5, trace.half_iterates[k - 1]))
        points.append((float(k), trace.iterates[k]))
    values = [evaluate_operator(op, z) for _, z in points]
    for i, (_, z) in enumerate(points):
        r = z - z0
        nr = float(np.linalg.norm(r))
        G = np.column_stack(values[: i + 1])
        coef, *_ = np.linalg.lstsq(G, r, rcond=None)
        if np.linalg.norm(G @ coef - r) > tol * (1.0 + nr):
            return False
    return True


# report ----------------------------------------------------------------------

def certificate_report(trace: Trace, bounds=None, potential: Optional[PotentialCertificate] = None,
                       tol: float = CERT_TOL) -> List[dict]:
    """Per-k records {k, grad_norm_sq, bound, V, pass_flags}."""
    bounds = bounds if bounds is not None else [None] * len(trace.iterates)
    V = potential.V if potential is not None else []
    rows = []
    for k, g in enumerate(trace.grad_norm_sq):
        b = bounds[k] if k < len(bounds) else None
        flags = {"bound": None if b is None else bool(g <= (1.0 + tol) * b)}
        if potential is not None and 1 <= k <= len(potential.monotone_ok):
            flags["potential"] = bool(potential.monotone_ok[k - 1])
        else:
            flags["potential"] = None
        rows.append({"k": k, "grad_norm_sq": g, "bound": b, "V": V[k] if k < len(V) else None,
                     "pass_flags": flags})
    return rows


def dump_certificate_json(rows: List[dict], path) -> None:
    from .bench import atomic_write

    atomic_write(path, json.dumps(rows, indent=1))
