"""Test-problem catalog: bilinear, worst-case smooth, quadratic minimax."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .core import (
    DimensionError,
    FegError,
    OperatorHandle,
    ParameterRangeError,
    ProblemSpec,
)

log = logging.getLogger(__name__)

PSD_TOL = 1e-10
SYMMETRY_TOL = 1e-12
POWER_ITERS = 200
POWER_TOL = 1e-12
MAX_RESAMPLES = 100


def make_bilinear(L: float) -> ProblemSpec:
    """f(x, y) = L x y, so F(x, y) = (L y, -L x)."""
    if not L > 0:
        raise ParameterRangeError(f"L must be positive, got {L}")
    L = float(L)

    def F(z):
        return np.array([L * z[1], -L * z[0]])

    return ProblemSpec(
        OperatorHandle(F, 2),
        lipschitz=L,
        comonotone=0.0,
        solution=np.zeros(2),
        label="bilinear",
        params={"L": L},
    )


def make_worst_case_smooth(L: float, R: float) -> ProblemSpec:
    """Piecewise-quadratic f(x, y) = h(x - y) on which span methods from 0 stall.

    With s = x - y and r = sqrt(R/L) the operator is (h'(s), h'(s)), where
    h'(s) is -L s - sqrt(LR) on [-r, 0), L s - sqrt(LR) on [0, r) and zero
    outside. Because f only depends on x - y, the operator's Jacobian is
    h'' [[1, -1], [1, -1]] with norm 2|h''|, so the declared Lipschitz
    constant is 2L.
    """
    if not (L > 0 and R > 0):
        raise ParameterRangeError(f"L and R must be positive, got L={L}, R={R}")
    L, R = float(L), float(R)
    r = math.sqrt(R / L)
    q = math.sqrt(L * R)

    def slope(s):
        if s < -r:
            return 0.0
        if s < 0.0:
            return -L * s - q
        if s < r:
            return L * s - q
        # s == r is not covered by either printed region; h'(r) = 0 by continuity.
        return 0.0

    def F(z):
        g = slope(z[0] - z[1])
        return np.array([g, g])

    return ProblemSpec(
        OperatorHandle(F, 2),
        lipschitz=2.0 * L,
        comonotone=None,
        solution=None,
        label="worst-case",
        params={"L": L, "R": R},
    )


@dataclass(frozen=True)
class QuadraticMinimax:
    """f(x, y) = 1/2 x'Ax + x'By - 1/2 y'Cy."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        dx, dy = B.shape
        if A.shape != (dx, dx) or C.shape != (dy, dy):
            raise DimensionError(f"inconsistent blocks: A{A.shape}, B{B.shape}, C{C.shape}")
        for name, S in (("A", A), ("C", C)):
            if np.max(np.abs(S - S.T), initial=0.0) > SYMMETRY_TOL:
                raise ValueError(f"{name} is not symmetric")
        for name, S in (("A", A), ("B", B), ("C", C)):
            S.setflags(write=False)
            object.__setattr__(self, name, S)

    @property
    def dx(self) -> int:
        return self.B.shape[0]

    @property
    def dy(self) -> int:
        return self.B.shape[1]

    def operator_matrix(self) -> np.ndarray:
        """[[A, B], [-B', C]], the matrix of F."""
        return np.block([[self.A, self.B], [-self.B.T, self.C]])

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "QuadraticMinimax":
        try:
            return cls(data["A"], data["B"], data["C"])
        except KeyError as exc:
            raise ValueError(f"quadratic description is missing block {exc}") from None

    @classmethod
    def load(cls, path) -> "QuadraticMinimax":
        return cls.from_dict(json.loads(Path(path).read_text()))


def spectral_norm(M: np.ndarray, iters: int = POWER_ITERS, tol: float = POWER_TOL) -> float:
    """Largest singular value of ``M`` by power iteration on M'M.

    Power iteration approaches from below and can stall when the top two
    singular values are close, so the result is cross-checked against a dense
    SVD and the SVD value wins on disagreement.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[1]
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = M.T @ (M @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            lam = 0.0
            break
        v = w / new
        done = abs(new - lam) <= tol * new
        lam = new
        if done:
            break
    est = math.sqrt(lam)
    exact = float(np.linalg.norm(M, 2)) if M.size else 0.0
    if abs(est - exact) > 1e-10 * max(exact, 1.0):
        log.debug("power iteration gave %.17g, SVD %.17g; using SVD", est, exact)
        return exact
    return max(est, exact)


def make_quadratic(q: QuadraticMinimax, comonotone=None, label: str = "quadratic") -> ProblemSpec:
    M = q.operator_matrix()
    M.setflags(write=False)
    d = M.shape[0]

    def F(z):
        return M @ z

    L = spectral_norm(M)
    nonsingular = np.linalg.matrix_rank(M) == d
    return ProblemSpec(
        OperatorHandle(F, d),
        lipschitz=L if L > 0 else None,
        comonotone=comonotone,
        solution=np.zeros(d) if nonsingular else None,
        label=label,
        params={"quadratic": q},
    )


def make_scaled_identity(mu: float, d: int = 2) -> ProblemSpec:
    """F(z) = mu z: 1/mu-cocoercive with L = mu."""
    if not mu > 0:
        raise ParameterRangeError(f"mu must be positive, got {mu}")
    n = d // 2
    q = QuadraticMinimax(mu * np.eye(d - n), np.zeros((d - n, n)), mu * np.eye(n))
    return make_quadratic(q, comonotone=1.0 / mu, label="scaled-identity")


def check_interaction_dominance(q: QuadraticMinimax, alpha: float, eta: float) -> bool:
    """Test the alpha-interaction-dominance condition for a quadratic.

    Checks A + B(eta I + C)^-1 B' >= alpha I and C + B'(eta I + A)^-1 B >= alpha I.
    When it holds, F is (-1/eta)-comonotone.
    """
    if alpha < 0:
        raise ParameterRangeError("alpha must be nonnegative")
    gamma = spectral_norm(q.operator_matrix())
    if not eta > gamma:
        raise ParameterRangeError(f"eta={eta} must exceed the smoothness constant {gamma:.6g}")
    A, B, C = q.A, q.B, q.C
    try:
        T1 = A + B @ np.linalg.solve(eta * np.eye(q.dy) + C, B.T)
        T2 = C + B.T @ np.linalg.solve(eta * np.eye(q.dx) + A, B)
    except np.linalg.LinAlgError as exc:
        raise FegError(f"singular shifted block: {exc}") from None
    for T in (T1, T2):
        T = 0.5 * (T + T.T)
        if np.linalg.eigvalsh(T)[0] < alpha - PSD_TOL:
            return False
    return True


def quadratic_comonotonicity(q: QuadraticMinimax) -> float:
    """Exact best rho for a linear operator with nonsingular matrix M.

    rho = min_v v'Sv / v'M'Mv with S the symmetric part of M, i.e. the smallest
    generalized eigenvalue of (S, M'M).
    """
    M = q.operator_matrix()
    S = 0.5 * (M + M.T)
    return float(scipy.linalg.eigh(S, M.T @ M, eigvals_only=True)[0])


def _random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def _random_block(rng, n, low, high, neg):
    lam = rng.uniform(low, high, n)
    lam[0] = -neg
    Q = _random_orthogonal(rng, n)
    S = (Q * lam) @ Q.T
    return 0.5 * (S + S.T)


def random_negative_comonotone(seed: int, d: int, rho_target: float) -> ProblemSpec:
    """Seeded quadratic whose operator is certified rho_target-comonotone.

    Both A and C get one negative eigenvalue, so f is nonconvex-nonconcave.
    The negative parts are kept below the interaction strength of B so that
    interaction dominance with eta = -1/rho_target holds; the certificate is
    then checked explicitly.
    """
    if d < 2 or d % 2:
        raise ParameterRangeError(f"d must be an even integer >= 2, got {d}")
    if not rho_target < 0:
        raise ParameterRangeError(f"rho_target must be negative, got {rho_target}")
    eta = -1.0 / rho_target
    scale = min(1.0, 0.4 * eta)
    n = d // 2
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_RESAMPLES):
        s = scale * rng.uniform(0.4, 0.7, n)
        B = (_random_orthogonal(rng, n) * s) @ _random_orthogonal(rng, n).T
        budget = 0.9 * s.min() ** 2 / (eta + 0.4 * scale)
        A = _random_block(rng, n, 0.0, 0.4 * scale, budget * rng.uniform(0.3, 1.0))
        C = _random_block(rng, n, 0.0, 0.4 * scale, budget * rng.uniform(0.3, 1.0))
        q = QuadraticMinimax(A, B, C)
        try:
            ok = check_interaction_dominance(q, 0.0, eta)
        except (ParameterRangeError, FegError):
            ok = False
        if not ok:
            continue
        prob = make_quadratic(q, comonotone=float(rho_target), label="random-nc")
        if prob.solution is None or not prob.feg_admissible():
            continue
        prob.params.update(seed=seed, d=d, rho=float(rho_target), attempts=attempt + 1)
        return prob
    raise FegError(f"no certified problem after {MAX_RESAMPLES} draws (seed={seed}, d={d}, rho={rho_target})")


def problem_from_label(label: str, **params) -> ProblemSpec:
    """Build a cataloged problem from its CLI label.

    Labels: ``bilinear`` (L), ``worst-case`` (L, R), ``scaled-identity`` (mu, d),
    ``random-nc`` (seed, d, rho) and ``quadratic:<json file>`` (rho optional).
    """
    if label == "bilinear":
        return make_bilinear(params.get("L", 1.0))
    if label == "worst-case":
        return make_worst_case_smooth(params.get("L", 1.0), params.get("R", 1.0))
    if label == "scaled-identity":
        return make_scaled_identity(params.get("mu", 1.0), int(params.get("d", 2)))
    if label == "random-nc":
        return random_negative_comonotone(
            int(params.get("seed", 1)), int(params.get("d", 2)), params.get("rho", -0.1)
        )
    if label.startswith("quadratic:"):
        q = QuadraticMinimax.load(label.split(":", 1)[1])
        return make_quadratic(q, comonotone=params.get("rho"))
    raise ValueError(f"unknown problem label {label!r}")
