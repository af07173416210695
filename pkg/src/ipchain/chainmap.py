"""Chain mapping of a bosonic bath.

A coupling weight ``h^2(omega)`` is discretised with composite Gauss-Legendre
quadrature, the Jacobi (three-term recurrence) coefficients of its orthonormal
polynomials are extracted with the Stieltjes/Lanczos procedure, and the
resulting tridiagonal bath matrix is diagonalised to recover star couplings and
the time-dependent interaction-picture couplings ``d_n(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from .errors import ConfigurationError, DomainError, NumericalBreakdown

PANEL_ORDER = 16


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True, eq=False)
class ChainCoefficients:
    """On-site frequencies ``omegas[n]`` and couplings ``kappas[n]``.

    ``kappas[0]`` couples the system to chain mode 0; ``kappas[1:]`` are the
    nearest-neighbour hoppings.
    """

    omegas: np.ndarray
    kappas: np.ndarray

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float)
        kappas = np.asarray(self.kappas, dtype=float)
        if omegas.ndim != 1 or omegas.shape != kappas.shape or len(omegas) == 0:
            raise DomainError("omegas and kappas must be 1-d arrays of equal, non-zero length")
        if not (np.all(np.isfinite(omegas)) and np.all(np.isfinite(kappas))):
            raise DomainError("chain coefficients must be finite")
        if np.any(kappas[1:] <= 0) or kappas[0] < 0:
            raise DomainError("chain hoppings must be positive")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "kappas", kappas)

    @property
    def n_modes(self) -> int:
        return len(self.omegas)

    @property
    def kappa0(self) -> float:
        return float(self.kappas[0])

    def recurrence_abc(self):
        """``(A, B, C)`` of ``p_{n+1} = (C_n x - A_n) p_n - B_n p_{n-1}`` for n < N."""
        nxt = self.kappas[1:]
        return self.omegas[:-1] / nxt, self.kappas[:-1] / nxt, 1.0 / nxt

    def polynomials(self, x):
        """Orthonormal polynomials ``p_0..p_N`` evaluated at ``x``, rows indexed by n."""
        x = np.asarray(x, dtype=float)
        out = np.zeros((self.n_modes,) + x.shape)
        out[0] = 1.0 / self.kappa0
        a, b, c = self.recurrence_abc()
        prev = np.zeros_like(x)
        for n in range(self.n_modes - 1):
            out[n + 1] = (c[n] * x - a[n]) * out[n] - b[n] * prev
            prev = out[n]
        return out

    def truncated(self, n_modes: int) -> "ChainCoefficients":
        return ChainCoefficients(self.omegas[:n_modes], self.kappas[:n_modes])


@dataclass(frozen=True, eq=False)
class StarDecomposition:
    """Eigen-decomposition ``M = P^T diag(lambdas) P`` of the bath matrix.

    Rows of ``P`` are eigenvectors, so the normal modes are ``a = P b``.
    """

    lambdas: np.ndarray
    P: np.ndarray
    kappa0: float

    @property
    def n_modes(self) -> int:
        return len(self.lambdas)

    def reconstruct(self) -> np.ndarray:
        return self.P.T @ (self.lambdas[:, None] * self.P)


def default_num_points(n_modes: int) -> int:
    return max(2000, 20 * n_modes)


def discretize_measure(weight, num_points: int, n_modes: int | None = None) -> QuadratureRule:
    """Composite Gauss-Legendre rule on ``weight.domain`` with weights ``w_i h^2(x_i)``.

    ``num_points`` is rounded up to a whole number of 16-point panels.  When
    ``n_modes`` is given the rule must have at least ``2 * n_modes`` points.
    """
    num_points = int(num_points)
    if num_points < 2 or (n_modes is not None and num_points < 2 * n_modes):
        raise ConfigurationError(
            f"{num_points} quadrature points cannot resolve {n_modes} chain modes",
            key="quad_points",
        )
    lo, hi = weight.domain
    if not hi > lo:
        raise DomainError(f"empty weight domain [{lo}, {hi}]")
    order = min(PANEL_ORDER, num_points)
    panels = math.ceil(num_points / order)
    x, w = leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    base = (half[:, None] * w[None, :]).ravel()
    density = weight.h2(nodes)
    if np.any(density < 0) or not np.all(np.isfinite(density)):
        raise DomainError("coupling weight must be finite and non-negative on its domain")
    return QuadratureRule(nodes, base * density)


def stieltjes_recurrence(rule: QuadratureRule, N: int) -> ChainCoefficients:
    """Jacobi coefficients of the discrete measure for chain modes ``0..N``.

    Lanczos on ``diag(nodes)`` started from ``sqrt(weights)``, which is the
    discretised Stieltjes procedure, with two passes of full
    reorthogonalisation per step.
    """
    n_modes = N + 1
    if N < 0 or 2 * n_modes > len(rule):
        raise ConfigurationError(
            f"chain with {n_modes} modes needs at least {2 * n_modes} quadrature points, "
            f"rule has {len(rule)}",
            key="N",
        )
    total = rule.total_weight
    if not total > 0:
        raise NumericalBreakdown("measure has zero total weight", index=0)
    x = rule.nodes
    Q = np.zeros((n_modes, len(x)))
    omegas = np.zeros(n_modes)
    kappas = np.zeros(n_modes)
    kappas[0] = math.sqrt(total)
    Q[0] = np.sqrt(rule.weights) / kappas[0]
    for n in range(n_modes):
        r = x * Q[n]
        omegas[n] = Q[n] @ r
        if n == N:
            break
        r -= omegas[n] * Q[n]
        if n > 0:
            r -= kappas[n] * Q[n - 1]
        for _ in range(2):
            r -= Q[: n + 1].T @ (Q[: n + 1] @ r)
        beta = float(np.linalg.norm(r))
        if not (beta > 0 and math.isfinite(beta)):
            raise NumericalBreakdown(f"Stieltjes recurrence broke down at n={n + 1}", index=n + 1)
        kappas[n + 1] = beta
        Q[n + 1] = r / beta
    if not np.all(np.isfinite(omegas)):
        raise NumericalBreakdown("non-finite on-site frequency", index=int(np.argmin(np.isfinite(omegas))))
    return ChainCoefficients(omegas, kappas)


def chain_coefficients(weight, N: int, num_points: int | None = None) -> ChainCoefficients:
    n_modes = N + 1
    if num_points is None:
        num_points = default_num_points(n_modes)
    return stieltjes_recurrence(discretize_measure(weight, num_points, n_modes), N)


def build_tridiagonal(coeffs: ChainCoefficients) -> np.ndarray:
    """Bath matrix with ``omegas`` on the diagonal and ``kappas[1:]`` off it."""
    off = coeffs.kappas[1:]
    return np.diag(coeffs.omegas) + np.diag(off, 1) + np.diag(off, -1)


def diagonalize_tridiagonal(M, kappa0: float = 1.0) -> StarDecomposition:
    """Sorted eigenfrequencies and orthogonal ``P`` with ``M = P^T diag(lambdas) P``.

    Each eigenvector is signed so that its first non-negligible entry is positive.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError("bath matrix must be square")
    if not np.allclose(M, M.T, atol=0.0, rtol=0.0):
        raise DomainError("bath matrix must be symmetric")
    if np.any(np.triu(M, 2) != 0):
        raise DomainError("bath matrix must be tridiagonal")
    diag = np.diag(M).copy()
    off = np.diag(M, 1).copy()
    if len(diag) == 1:
        lambdas, vecs = diag, np.ones((1, 1))
    else:
        try:
            lambdas, vecs = linalg.eigh_tridiagonal(diag, off)
        except linalg.LinAlgError as exc:
            raise NumericalBreakdown(f"tridiagonal eigensolver failed: {exc}") from exc
    P = vecs.T.copy()
    scale = np.max(np.abs(P), axis=1, keepdims=True)
    significant = np.abs(P) > 1e-12 * scale
    first = np.argmax(significant, axis=1)
    signs = np.sign(P[np.arange(len(P)), first])
    P *= signs[:, None]
    return StarDecomposition(lambdas, P, float(kappa0))


def star_decomposition(coeffs: ChainCoefficients) -> StarDecomposition:
    return diagonalize_tridiagonal(build_tridiagonal(coeffs), coeffs.kappa0)


def couplings_star(dec: StarDecomposition) -> np.ndarray:
    """Star couplings ``g_k = kappa0 * P[k, 0]`` paired with ``dec.lambdas``."""
    return dec.kappa0 * dec.P[:, 0]


def couplings_ic(dec: StarDecomposition, t):
    """Interaction-picture couplings ``d_n(t) = kappa0 * [exp(-i M t)]_{0n}``.

    ``t`` may be a scalar (returns shape ``(N+1,)``) or a 1-d array of times
    (returns shape ``(len(t), N+1)``).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("coupling times must be non-negative")
    phases = np.exp(-1j * np.multiply.outer(t, dec.lambdas))
    return dec.kappa0 * (phases * dec.P[:, 0]) @ dec.P
