"""Brute-force state-vector propagation for small instances.

The chain Hamiltonian is built as a sparse matrix on the full product space
(spin first, then chain modes 0..N) and propagated exactly through its
eigendecomposition.  These results are the ground truth the MPS schemes are
compared against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from . import chainmap
from .errors import ConfigurationError, NumericalBreakdown
from .propagate import SpinBosonSystem, annihilation, number_op

MAX_DIMENSION = 2_000_000
# above this the eigendecomposition is replaced by sparse exponential actions
DENSE_EIGH_LIMIT = 6000


@dataclass(eq=False)
class DenseModel:
    hamiltonian: sp.csr_matrix
    psi0: np.ndarray
    dims: tuple

    @property
    def dimension(self) -> int:
        return self.hamiltonian.shape[0]

    def up_projector_mask(self) -> np.ndarray:
        # spin is the most significant tensor factor: |up> is the first half
        mask = np.zeros(self.dimension, dtype=bool)
        mask[: self.dimension // 2] = True
        return mask


def _embed(dims, factors: dict):
    out = sp.identity(1, format="csr")
    for site, d in enumerate(dims):
        op = factors.get(site)
        out = sp.kron(out, sp.identity(d, format="csr") if op is None else sp.csr_matrix(op), format="csr")
    return out


def _guard(dims):
    dimension = int(np.prod(dims, dtype=np.int64))
    if dimension > MAX_DIMENSION:
        raise ConfigurationError(f"dense model dimension {dimension} exceeds {MAX_DIMENSION}", key="local_dim")
    return dimension


def _initial(dims):
    psi0 = np.zeros(int(np.prod(dims)), dtype=complex)
    psi0[0] = 1.0  # |up> (x) |0 ... 0>
    return psi0


def dense_hamiltonian(coeffs: chainmap.ChainCoefficients, sys: SpinBosonSystem, N: int, d_b: int) -> DenseModel:
    """Truncated chain Hamiltonian with ``d_b`` levels per mode on modes ``0..N``."""
    if coeffs.n_modes < N + 1:
        raise ConfigurationError(f"need {N + 1} chain modes, coefficients have {coeffs.n_modes}", key="N")
    dims = (sys.dim,) + (d_b,) * (N + 1)
    _guard(dims)
    b = annihilation(d_b)
    n = number_op(d_b)
    h = _embed(dims, {0: sys.H_s})
    h = h + coeffs.kappas[0] * _embed(dims, {0: sys.A_s, 1: b + b.T})
    for mode in range(N + 1):
        h = h + coeffs.omegas[mode] * _embed(dims, {mode + 1: n})
    for mode in range(1, N + 1):
        hop = _embed(dims, {mode: b, mode + 1: b.T})
        h = h + coeffs.kappas[mode] * (hop + hop.T)
    return DenseModel(sp.csr_matrix(h), _initial(dims), dims)


def dense_star_hamiltonian(dec: chainmap.StarDecomposition, sys: SpinBosonSystem, d_b: int) -> DenseModel:
    """Star-geometry Hamiltonian with ``d_b`` levels per normal mode."""
    dims = (sys.dim,) + (d_b,) * dec.n_modes
    _guard(dims)
    b = annihilation(d_b)
    n = number_op(d_b)
    g = chainmap.couplings_star(dec)
    h = _embed(dims, {0: sys.H_s})
    for k in range(dec.n_modes):
        h = h + g[k] * _embed(dims, {0: sys.A_s, k + 1: b + b.T})
        h = h + dec.lambdas[k] * _embed(dims, {k + 1: n})
    return DenseModel(sp.csr_matrix(h), _initial(dims), dims)


def propagate_states(model: DenseModel, times) -> np.ndarray:
    """``exp(-i H t) psi0`` for every ``t``; rows are states."""
    times = np.asarray(times, dtype=float)
    if model.dimension <= DENSE_EIGH_LIMIT:
        try:
            w, v = np.linalg.eigh(model.hamiltonian.toarray())
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown(f"oracle eigensolver failed: {exc}") from exc
        coeffs = v.conj().T @ model.psi0
        return (np.exp(-1j * np.multiply.outer(times, w)) * coeffs) @ v.T
    h = model.hamiltonian.tocsc()
    return np.array([expm_multiply(-1j * t * h, model.psi0) for t in times])


def exact_populations(model: DenseModel, times) -> np.ndarray:
    """Spin-up population ``||P_up psi(t)||^2`` at each time."""
    states = propagate_states(model, times)
    return np.sum(np.abs(states[:, model.up_projector_mask()]) ** 2, axis=1)


def rk4_populations(model: DenseModel, times, dt: float) -> np.ndarray:
    """Classical fixed-step RK4 reference, used to cross-check the eigendecomposition."""
    h = model.hamiltonian
    psi = model.psi0.copy()
    t_now = 0.0
    mask = model.up_projector_mask()
    out = []

    def f(x):
        return -1j * (h @ x)

    for target in np.asarray(times, dtype=float):
        n = int(round((target - t_now) / dt))
        step = (target - t_now) / n if n else 0.0
        for _ in range(n):
            k1 = f(psi)
            k2 = f(psi + 0.5 * step * k1)
            k3 = f(psi + 0.5 * step * k2)
            k4 = f(psi + step * k3)
            psi = psi + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t_now = target
        out.append(np.sum(np.abs(psi[mask]) ** 2))
    return np.array(out)


def interaction_picture_populations(dec: chainmap.StarDecomposition, sys: SpinBosonSystem, d_b: int, times, rtol=1e-11):
    """Spin-up population under the time-dependent interaction-picture chain Hamiltonian.

    Each chain mode keeps ``d_b`` levels, exactly the truncation the IC scheme
    works in; the time-ordered evolution is integrated with DOP853.
    """
    n_modes = dec.n_modes
    dims = (sys.dim,) + (d_b,) * n_modes
    _guard(dims)
    b = annihilation(d_b)
    h_s = _embed(dims, {0: sys.H_s})
    lowering = [_embed(dims, {0: sys.A_s, n + 1: b}) for n in range(n_modes)]
    psi0 = _initial(dims)

    def rhs(t, psi):
        d = chainmap.couplings_ic(dec, t)
        out = h_s @ psi
        for n, low in enumerate(lowering):
            out = out + d[n] * (low @ psi) + np.conj(d[n]) * (low.T @ psi)
        return -1j * out

    times = np.asarray(times, dtype=float)
    sol = solve_ivp(rhs, (0.0, float(times[-1])), psi0, method="DOP853", t_eval=times, rtol=rtol, atol=rtol * 1e-2)
    if not sol.success:
        raise NumericalBreakdown(f"interaction-picture integration failed: {sol.message}")
    half = len(psi0) // 2
    return np.sum(np.abs(sol.y[:half]) ** 2, axis=0)
