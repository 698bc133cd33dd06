"""Covariance structures, the sparse linear regression law, and the
adversarial coefficient constructions that defeat marginal screening.

Variable indices in this module are 1-based (``x1 .. xp``), matching the
usual way the predictors are named.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

AR1 = "ar1"
EQUICORRELATED = "equicorrelated"
IDENTITY = "identity"
DENSE = "dense"

KINDS = (AR1, EQUICORRELATED, IDENTITY, DENSE)

MAX_DENSE_P = 4096
MAX_SOLVER_DIM = 64
SINGULAR_RTOL = 1e-12


class SingularMatrixError(ValueError):
    """Raised when elimination meets a pivot that is zero to working precision."""

    def __init__(self, step: int, pivot: float):
        self.step = step
        self.pivot = pivot
        super().__init__(
            f"matrix is singular to working precision at pivot step {step} "
            f"(largest available pivot {pivot:.3g})"
        )


@dataclass(frozen=True, eq=False)
class CovarianceStructure:
    """Symbolic description of a p x p predictor correlation matrix.

    Use the constructors :meth:`ar1`, :meth:`equicorrelated`,
    :meth:`identity` and :meth:`dense` rather than building one directly.
    """

    kind: str
    p: int
    rho: float | None = None
    matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p!r}")
        if self.kind in (AR1, EQUICORRELATED):
            if self.rho is None or not (0.0 < self.rho < 1.0):
                raise ValueError(f"{self.kind} needs 0 < rho < 1, got {self.rho!r}")
        if self.kind == DENSE:
            _check_dense(self.matrix, self.p)

    @classmethod
    def ar1(cls, rho: float, p: int) -> "CovarianceStructure":
        return cls(AR1, int(p), float(rho))

    @classmethod
    def equicorrelated(cls, rho: float, p: int) -> "CovarianceStructure":
        return cls(EQUICORRELATED, int(p), float(rho))

    @classmethod
    def identity(cls, p: int) -> "CovarianceStructure":
        return cls(IDENTITY, int(p))

    @classmethod
    def dense(cls, matrix) -> "CovarianceStructure":
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"dense covariance must be square, got shape {m.shape}")
        m.setflags(write=False)
        return cls(DENSE, m.shape[0], None, m)

    @property
    def is_structured(self) -> bool:
        return self.kind != DENSE

    def with_p(self, p: int) -> "CovarianceStructure":
        """Same structure at another dimension (structured kinds only)."""
        if self.kind == DENSE:
            if p != self.p:
                raise ValueError("a dense covariance cannot be resized")
            return self
        return CovarianceStructure(self.kind, int(p), self.rho)

    def signature(self) -> str:
        """Stable text identity, used for equality and config hashing."""
        if self.kind == DENSE:
            digest = hashlib.sha256(np.ascontiguousarray(self.matrix).tobytes()).hexdigest()
            return f"dense(p={self.p},sha256={digest[:16]})"
        if self.kind == IDENTITY:
            return f"identity(p={self.p})"
        return f"{self.kind}(rho={self.rho!r},p={self.p})"

    def __eq__(self, other):
        if not isinstance(other, CovarianceStructure):
            return NotImplemented
        return self.signature() == other.signature()

    def __hash__(self):
        return hash(self.signature())


def _check_dense(matrix, p):
    if matrix is None:
        raise ValueError("dense covariance needs a matrix")
    if p > MAX_DENSE_P:
        raise ValueError(f"dense covariance limited to p <= {MAX_DENSE_P}, got {p}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("dense covariance has non-finite entries")
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12):
        raise ValueError("dense covariance is not symmetric")
    if not np.allclose(np.diag(matrix), 1.0, rtol=0.0, atol=1e-12):
        raise ValueError("dense covariance must have unit diagonal")
    try:
        np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise ValueError("dense covariance is not positive definite") from None


def covariance_entry(structure: CovarianceStructure, i: int, j: int) -> float:
    """Entry (i, j) of R, 1-based."""
    p = structure.p
    if not (1 <= i <= p and 1 <= j <= p):
        raise IndexError(f"index ({i}, {j}) out of range for p={p}")
    if structure.kind == AR1:
        return structure.rho ** abs(i - j)
    if i == j:
        return 1.0
    if structure.kind == EQUICORRELATED:
        return structure.rho
    if structure.kind == IDENTITY:
        return 0.0
    return float(structure.matrix[i - 1, j - 1])


def covariance_columns(structure: CovarianceStructure, columns) -> np.ndarray:
    """Columns of R (1-based indices) as a p x len(columns) array, O(p) each."""
    cols = np.asarray(columns, dtype=int)
    p = structure.p
    if structure.kind == DENSE:
        return np.array(structure.matrix[:, cols - 1])
    rows = np.arange(1, p + 1)[:, None]
    if structure.kind == AR1:
        return structure.rho ** np.abs(rows - cols[None, :]).astype(float)
    out = (rows == cols[None, :]).astype(float)
    if structure.kind == EQUICORRELATED:
        out = structure.rho + (1.0 - structure.rho) * out
    return out


def dense_matrix(structure: CovarianceStructure) -> np.ndarray:
    """Materialize R. Meant for oracles and small p."""
    if structure.kind == DENSE:
        return np.array(structure.matrix)
    return covariance_columns(structure, np.arange(1, structure.p + 1))


def spectral_bound(structure: CovarianceStructure) -> float:
    """Upper bound on the largest eigenvalue of R.

    Exact for the equicorrelated, identity and dense kinds; for AR(1) this is
    the supremum of the spectral density, (1 + rho) / (1 - rho), which holds
    for every p.
    """
    if structure.kind == EQUICORRELATED:
        return 1.0 + (structure.p - 1) * structure.rho
    if structure.kind == AR1:
        return (1.0 + structure.rho) / (1.0 - structure.rho)
    if structure.kind == IDENTITY:
        return 1.0
    return float(np.linalg.eigvalsh(structure.matrix)[-1])


def solve_linear_system(A, b) -> np.ndarray:
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    Intended for the tiny systems of the coefficient constructions. A pivot
    smaller than ``1e-12`` times the largest row norm of ``A`` raises
    :class:`SingularMatrixError`.
    """
    a = np.array(A, dtype=float)
    x = np.array(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"A must be square, got shape {a.shape}")
    m = a.shape[0]
    if m > MAX_SOLVER_DIM:
        raise ValueError(f"system too large ({m} > {MAX_SOLVER_DIM})")
    if x.shape != (m,):
        raise ValueError(f"b has shape {x.shape}, expected ({m},)")
    a0, b0 = a.copy(), x.copy()

    scale = np.abs(a).sum(axis=1).max() if m else 0.0
    tol = SINGULAR_RTOL * scale
    for k in range(m):
        piv = k + int(np.argmax(np.abs(a[k:, k])))
        if not abs(a[piv, k]) > tol:
            raise SingularMatrixError(k + 1, abs(a[piv, k]))
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
            x[[k, piv]] = x[[piv, k]]
        factors = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(factors, a[k, k:])
        x[k + 1:] -= factors * x[k]
    for k in range(m - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]

    resid = np.max(np.abs(a0 @ x - b0), initial=0.0)
    if resid > 1e-10 * (1.0 + np.max(np.abs(b0), initial=0.0)):
        raise SingularMatrixError(m, resid)
    return x


def solve_ar1_beta(rho: float, a: float) -> dict[int, float]:
    """Coefficients on x1 and x3 that zero out Cov(y, x1) under AR(1).

    With every other coefficient zero, the returned pair gives
    ``Cov(y, x1) = 0`` and ``Cov(y, x2) = a``.
    """
    if not (0.0 < rho < 1.0):
        raise ValueError(f"rho must lie in (0, 1), got {rho!r}")
    if a == 0 or not math.isfinite(a):
        raise ValueError("a must be finite and nonzero, otherwise beta = 0")
    b1, b3 = solve_linear_system([[1.0, rho**2], [rho, rho]], [0.0, a])
    return {1: float(b1), 3: float(b3)}


def equi_system(rho: float) -> np.ndarray:
    """The 5 x 5 matrix mapping (beta1..beta5) to the target covariances.

    Rows 1-4 give Cov(y, xi) for the important variables; row 5 gives the
    common covariance rho * sum(beta) of every xj with j > 5.
    """
    m = np.full((5, 5), float(rho))
    m[np.arange(4), np.arange(4)] = 1.0
    return m


def solve_equi_beta(rho: float, important_cov: float = 1.0,
                    unimportant_cov: float = 4.0) -> dict[int, float]:
    """Coefficients on x1..x5 under equicorrelation such that x1..x4 have
    covariance ``important_cov`` with y while every null xj (j > 5) has
    ``unimportant_cov``."""
    if not (0.0 <= rho <= 1.0):
        raise ValueError(f"rho must lie in (0, 1), got {rho!r}")
    rhs = [important_cov] * 4 + [unimportant_cov]
    beta = solve_linear_system(equi_system(rho), rhs)
    return {i + 1: float(v) for i, v in enumerate(beta)}


@dataclass(frozen=True)
class RegressionModel:
    """``y = intercept + sum_i beta_i x_i + noise_sd * eps`` with x ~ N(0, R).

    ``coefficients`` maps 1-based indices to the nonzero betas; explicit zeros
    are dropped.
    """

    coefficients: Mapping[int, float]
    covariance: CovarianceStructure
    noise_sd: float = 1.0
    intercept: float = 0.0

    def __post_init__(self):
        items = []
        for idx, val in dict(self.coefficients).items():
            if int(idx) != idx:
                raise ValueError(f"coefficient index {idx!r} is not an integer")
            idx, val = int(idx), float(val)
            if not 1 <= idx <= self.covariance.p:
                raise ValueError(
                    f"coefficient index {idx} outside [1, {self.covariance.p}]")
            if not math.isfinite(val):
                raise ValueError(f"coefficient {idx} is not finite")
            if val != 0.0:
                items.append((idx, val))
        object.__setattr__(self, "coefficients", dict(sorted(items)))
        if not (self.noise_sd >= 0 and math.isfinite(self.noise_sd)):
            raise ValueError(f"noise_sd must be finite and >= 0, got {self.noise_sd!r}")
        if not math.isfinite(self.intercept):
            raise ValueError("intercept must be finite")

    @property
    def p(self) -> int:
        return self.covariance.p

    @property
    def support(self) -> np.ndarray:
        return np.fromiter(self.coefficients.keys(), dtype=int,
                           count=len(self.coefficients))

    @property
    def support_values(self) -> np.ndarray:
        return np.fromiter(self.coefficients.values(), dtype=float,
                           count=len(self.coefficients))

    def beta_vector(self) -> np.ndarray:
        beta = np.zeros(self.p)
        beta[self.support - 1] = self.support_values
        return beta

    def with_p(self, p: int) -> "RegressionModel":
        return RegressionModel(self.coefficients, self.covariance.with_p(p),
                               self.noise_sd, self.intercept)

    def signature(self) -> str:
        coefs = ",".join(f"{i}:{v!r}" for i, v in self.coefficients.items())
        return (f"model(beta0={self.intercept!r},beta={{{coefs}}},"
                f"sigma={self.noise_sd!r},R={self.covariance.signature()})")

    def __hash__(self):
        return hash(self.signature())

    def __eq__(self, other):
        if not isinstance(other, RegressionModel):
            return NotImplemented
        return self.signature() == other.signature()


@dataclass(frozen=True, eq=False)
class MarginalMoments:
    cov_y_x: np.ndarray
    var_y: float
    cor_y_x: np.ndarray


def marginal_moments(model: RegressionModel) -> MarginalMoments:
    """Population Cov(y, xi), Var(y) and Cor(y, xi).

    ``Cov(y, x) = R beta`` is assembled column by column over the support, so
    structured covariances are never materialized.
    """
    support = model.support
    cov = covariance_columns(model.covariance, support) @ model.support_values \
        if support.size else np.zeros(model.p)
    var_y = float(model.support_values @ cov[support - 1]) + model.noise_sd**2
    if not var_y > 0:
        raise ValueError("degenerate model: Var(y) is zero")
    cor = np.clip(cov / math.sqrt(var_y), -1.0, 1.0)
    return MarginalMoments(cov, var_y, cor)


def example1_model(p: int, rho: float = 0.25, a: float = 3.0,
                   sigma: float = 1.0) -> RegressionModel:
    """AR(1) design where x1 is important yet uncorrelated with y."""
    if p < 3:
        raise ValueError("the AR(1) construction needs p >= 3")
    return RegressionModel(solve_ar1_beta(rho, a),
                           CovarianceStructure.ar1(rho, p), sigma)


def example2_model(p: int, rho: float = 0.1, sigma: float = 1.0,
                   important_cov: float = 1.0,
                   unimportant_cov: float = 4.0) -> RegressionModel:
    """Equicorrelated design where x1..x4 are dominated by every null xj."""
    if p < 5:
        raise ValueError("the equicorrelation construction needs p >= 5")
    beta = solve_equi_beta(rho, important_cov, unimportant_cov)
    return RegressionModel(beta, CovarianceStructure.equicorrelated(rho, p), sigma)
