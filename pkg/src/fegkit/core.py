"""Points, saddle-gradient operators and the problem container.

A point is a 1-D ``float64`` numpy array. Operators map points to points and
must be deterministic; every other module goes through
:func:`evaluate_operator` so dimension and finiteness checks live in one place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

# ||Fz|| below this counts as a stationary point; solvers stop there.
STATIONARY_TOL = 1e-14
# ||F z_*|| allowed for a declared solution.
SOLUTION_TOL = 1e-12


class FegError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(FegError, ValueError):
    pass


class NonFiniteError(FegError, FloatingPointError):
    """A non-finite value appeared; ``index`` is the first bad coordinate."""

    def __init__(self, message: str, index: Optional[int] = None, k: Optional[int] = None):
        super().__init__(message)
        self.index = index
        self.k = k


class ParameterRangeError(FegError, ValueError):
    pass


def as_point(values, dim: Optional[int] = None) -> np.ndarray:
    """Copy ``values`` into a read-only finite float64 vector."""
    z = np.array(values, dtype=np.float64).reshape(-1)
    if z.size == 0:
        raise DimensionError("a point needs at least one coordinate")
    if dim is not None and z.size != dim:
        raise DimensionError(f"expected dimension {dim}, got {z.size}")
    _check_finite(z, "point")
    z.setflags(write=False)
    return z


def _check_finite(z: np.ndarray, what: str, k: Optional[int] = None) -> None:
    bad = ~np.isfinite(z)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        where = f" at iteration {k}" if k is not None else ""
        raise NonFiniteError(f"non-finite {what} coordinate {i} ({z[i]}){where}", index=i, k=k)


def vector_combine(pairs: Sequence[Tuple[float, np.ndarray]]) -> np.ndarray:
    """Return ``sum(c * p for c, p in pairs)`` accumulated left to right.

    The summation order is fixed so repeated calls are bitwise reproducible.
    """
    if len(pairs) == 0:
        raise ValueError("vector_combine needs at least one term")
    c0, p0 = pairs[0]
    acc = float(c0) * np.asarray(p0, dtype=np.float64)
    for c, p in pairs[1:]:
        p = np.asarray(p, dtype=np.float64)
        if p.shape != acc.shape:
            raise DimensionError(f"dimension mismatch: {p.shape} vs {acc.shape}")
        acc = acc + float(c) * p
    return acc


@dataclass(frozen=True)
class OperatorHandle:
    """A saddle-gradient operator ``F = (grad_x f, -grad_y f)`` on R^dim."""

    eval: Callable[[np.ndarray], np.ndarray]
    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise DimensionError("operator dimension must be positive")

    def __call__(self, z):
        return self.eval(z)


@dataclass(frozen=True)
class ProblemSpec:
    operator: OperatorHandle
    lipschitz: Optional[float] = None
    comonotone: Optional[float] = None
    solution: Optional[np.ndarray] = None
    label: str = ""
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.lipschitz is not None and not self.lipschitz > 0:
            raise ParameterRangeError(f"Lipschitz constant must be positive, got {self.lipschitz}")
        if self.solution is not None:
            sol = as_point(self.solution, self.operator.dim)
            object.__setattr__(self, "solution", sol)
            res = float(np.linalg.norm(evaluate_operator(self, sol)))
            if res > SOLUTION_TOL:
                raise ValueError(f"declared solution has ||F z*|| = {res:.3e}")

    @property
    def dim(self) -> int:
        return self.operator.dim

    def feg_admissible(self) -> bool:
        """True when both constants are declared and rho > -1/(2L)."""
        if self.lipschitz is None or self.comonotone is None:
            return False
        return self.comonotone > -1.0 / (2.0 * self.lipschitz)


def _operator_of(problem_or_op):
    if isinstance(problem_or_op, ProblemSpec):
        return problem_or_op.operator
    return problem_or_op


def evaluate_operator(problem, z, k: Optional[int] = None) -> np.ndarray:
    """Evaluate ``F z`` with dimension and finiteness checks.

    ``problem`` may be a :class:`ProblemSpec` or a bare :class:`OperatorHandle`.
    """
    op = _operator_of(problem)
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size != op.dim:
        raise DimensionError(f"expected a point of dimension {op.dim}, got shape {z.shape}")
    _check_finite(z, "input", k)
    out = np.asarray(op.eval(z), dtype=np.float64).reshape(-1)
    if out.size != op.dim:
        raise DimensionError(f"operator returned dimension {out.size}, expected {op.dim}")
    _check_finite(out, "operator output", k)
    return out


def inner(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.dot(u, v))


def sqnorm(u: np.ndarray) -> float:
    return float(np.dot(u, u))

