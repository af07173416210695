"""Trotterised propagation of the spin-boson model in three geometries.

``C``  Schroedinger-picture chain: nearest-neighbour gates, even/odd splitting.
``S``  Schroedinger-picture star: the spin is swapped through the star modes.
``IC`` interaction-picture chain: time-dependent spin-mode couplings ``d_n(t)``,
       again applied by swapping the spin along the chain.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import chainmap
from .errors import ConfigurationError, DomainError, IpchainError, SimulationError
from .mps import DEFAULT_MAX_BOND, TwoSiteGate, VidalMPS, product_state
from .spectral import SpectralDensityModel, ThermalizedWeight

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
PROJ_UP = np.array([[1.0, 0.0], [0.0, 0.0]])


def annihilation(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)


def number_op(d: int) -> np.ndarray:
    return np.diag(np.arange(d, dtype=float))


class Scheme(str, Enum):
    C = "C"
    IC = "IC"
    S = "S"


class StarOrdering(str, Enum):
    ABS_FREQUENCY_ASCENDING = "AbsFrequencyAscending"


@dataclass(frozen=True)
class SpinBosonSystem:
    """Zero-bias spin, ``H_s = delta * sigma_x`` coupled to the bath through ``sigma_z``."""

    delta: float = 1.0

    dim = 2

    @property
    def H_s(self) -> np.ndarray:
        return self.delta * SIGMA_X

    @property
    def A_s(self) -> np.ndarray:
        return SIGMA_Z


@dataclass(frozen=True)
class BathParameters:
    """Physical parameters in units of ``delta`` (``eta = eta0*delta`` and so on)."""

    eta0: float = 1.0
    omega0: float = 0.25
    T0: float = 1.0
    delta: float = 1.0
    omega_max: float | None = None
    quad_points: int | None = None

    @property
    def system(self) -> SpinBosonSystem:
        return SpinBosonSystem(self.delta)

    def weight(self) -> ThermalizedWeight:
        model = SpectralDensityModel(eta=self.eta0 * self.delta, omega_c=self.omega0 * self.delta)
        return ThermalizedWeight.from_temperature(model, self.T0 * self.delta, self.omega_max)

    def chain(self, N: int) -> chainmap.ChainCoefficients:
        if self.eta0 == 0:
            # the measure vanishes; keep the chain shape of unit coupling, detach it
            shape = dataclasses.replace(self, eta0=1.0).chain(N)
            return chainmap.ChainCoefficients(shape.omegas, np.concatenate([[0.0], shape.kappas[1:]]))
        return chainmap.chain_coefficients(self.weight(), N, self.quad_points)


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme = Scheme.IC
    N: int = 60
    local_dim: int = 10
    dt: float = 5e-2
    t_final: float = math.pi
    sv_threshold: float = 1e-3
    max_bond: int = DEFAULT_MAX_BOND
    star_ordering: StarOrdering = StarOrdering.ABS_FREQUENCY_ASCENDING
    record_stride: int = 1
    record_occupations: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "scheme", Scheme(self.scheme))
            object.__setattr__(self, "star_ordering", StarOrdering(self.star_ordering))
        except ValueError as exc:
            raise ConfigurationError(str(exc), key="scheme") from exc
        checks = [
            ("dt", self.dt > 0),
            ("local_dim", self.local_dim >= 2),
            ("N", self.N >= 0),
            ("t_final", self.t_final >= 0),
            ("sv_threshold", self.sv_threshold >= 0),
            ("max_bond", self.max_bond >= 1),
            ("record_stride", self.record_stride >= 1),
        ]
        for key, ok in checks:
            if not ok:
                raise ConfigurationError(f"invalid value {getattr(self, key)!r}", key=key)

    @property
    def n_steps(self) -> int:
        """Number of steps, counting a shorter closing step that lands on ``t_final``."""
        return max(0, math.ceil(self.t_final / self.dt - 1e-9))

    def step_sizes(self) -> list:
        """Full steps of ``dt``, then (if needed) one remainder step ending exactly at ``t_final``."""
        n = self.n_steps
        if n == 0:
            return []
        last = self.t_final - (n - 1) * self.dt
        return [self.dt] * (n - 1) + [last if last < self.dt * (1 - 1e-9) else self.dt]


def is_hermitian(h, tol=1e-12) -> bool:
    diff = h - h.conj().T
    if sp.issparse(diff):
        return diff.nnz == 0 or float(abs(diff).max()) <= tol
    return float(np.max(np.abs(diff), initial=0.0)) <= tol


def _expm_hermitian(h: np.ndarray, tau: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * tau)) @ v.conj().T


def gate_from_hamiltonian(h, tau: float, dims=None) -> TwoSiteGate:
    """``exp(-i h tau)`` from the Hermitian eigendecomposition of ``h``.

    A sparse ``h`` is split into its decoupled blocks first, so gates of
    number-conserving terms stay sparse and cheap to build.
    """
    n = h.shape[0]
    if dims is None:
        d = math.isqrt(n)
        if d * d != n:
            raise DomainError("dims must be given for non-square local dimensions")
        dims = (d, d)
    if not is_hermitian(h):
        raise DomainError("gate generator is not Hermitian")
    if not sp.issparse(h):
        return TwoSiteGate(_expm_hermitian(np.asarray(h, dtype=complex), tau), tuple(dims))
    h = sp.csr_matrix(h)
    n_blocks, labels = connected_components(h, directed=False)
    rows, cols, vals = [], [], []
    dense = h.toarray() if n_blocks == 1 else None
    for block in range(n_blocks):
        idx = np.flatnonzero(labels == block)
        sub = dense if dense is not None else h[idx][:, idx].toarray()
        g = _expm_hermitian(sub.astype(complex), tau)
        rr, cc = np.meshgrid(idx, idx, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(g.ravel())
    g = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return TwoSiteGate(g, tuple(dims))


def spin_mode_hamiltonian(sys: SpinBosonSystem, d_b: int, coupling, omega=0.0, spin_weight=0.0):
    """``spin_weight*H_s + A_s (x) (c b + c* b^dag) + omega b^dag b`` on (spin, mode)."""
    b = annihilation(d_b)
    mode = coupling * b + np.conj(coupling) * b.T
    h = np.kron(sys.A_s, mode) + omega * np.kron(np.eye(2), number_op(d_b))
    if spin_weight:
        h = h + spin_weight * np.kron(sys.H_s, np.eye(d_b))
    return h.astype(complex)


def mode_mode_hamiltonian(d_b: int, hopping: float, omega_left: float, omega_right: float):
    """``hopping (b_r^dag b_l + h.c.) + omega_l n_l + omega_r n_r``; sparse, number conserving."""
    b = sp.csr_matrix(annihilation(d_b))
    n = sp.csr_matrix(number_op(d_b))
    eye = sp.identity(d_b, format="csr")
    h = hopping * (sp.kron(b, b.T) + sp.kron(b.T, b))
    h = h + omega_left * sp.kron(n, eye) + omega_right * sp.kron(eye, n)
    return sp.csr_matrix(h)


@dataclass
class StepReport:
    discarded_weight: float = 0.0
    max_bond: int = 1

    def add(self, report):
        self.discarded_weight += report.discarded_weight
        self.max_bond = max(self.max_bond, report.bond_dim)


class ChainStepper:
    """Second-order even/odd splitting of the truncated chain Hamiltonian.

    Sites are (spin, mode 0, ..., mode N).  Each site's on-site term is shared
    equally among the bonds touching it.
    """

    def __init__(self, coeffs: chainmap.ChainCoefficients, sys: SpinBosonSystem, d_b: int, dt: float):
        self.coeffs, self.sys, self.d_b, self.dt = coeffs, sys, d_b, dt
        n_modes = coeffs.n_modes
        hams = self.bond_hamiltonians()
        self.gates = {}
        for bond, h in enumerate(hams):
            dims = (2, d_b) if bond == 0 else (d_b, d_b)
            tau = dt if bond % 2 == 0 else dt / 2
            self.gates[bond] = gate_from_hamiltonian(h, tau, dims)
        self.n_bonds = n_modes

    def bond_hamiltonians(self):
        omegas, kappas, d_b = self.coeffs.omegas, self.coeffs.kappas, self.d_b
        last = len(omegas) - 1

        def share(mode):
            return 1.0 if mode == last else 0.5  # mode 0..N-1 touch two bonds

        hams = [spin_mode_hamiltonian(self.sys, d_b, kappas[0], omega=share(0) * omegas[0], spin_weight=1.0)]
        for n in range(1, len(omegas)):
            left_share = 0.5
            hams.append(mode_mode_hamiltonian(d_b, kappas[n], left_share * omegas[n - 1], share(n) * omegas[n]))
        return hams

    def step(self, state: VidalMPS, t: float = 0.0) -> StepReport:
        report = StepReport()
        odd = range(1, self.n_bonds, 2)
        even = range(0, self.n_bonds, 2)
        for bonds in (odd, even, odd):
            for bond in bonds:
                report.add(state.apply_two_site_gate(bond, self.gates[bond]))
        return report


class _SwapSweepStepper:
    """Forward sweep carrying the spin to the far end, mirrored sweep back.

    Subclasses provide ``_terms(t)``: per mode position ``j`` the (spin, mode)
    Hamiltonians used on the forward and on the backward sweep.
    """

    def __init__(self, sys: SpinBosonSystem, d_b: int, dt: float, n_modes: int):
        self.sys, self.d_b, self.dt, self.n_modes = sys, d_b, dt, n_modes

    def _sweep(self, state: VidalMPS, forward, backward) -> StepReport:
        tau = self.dt / 2
        dims = (2, self.d_b)
        last = self.n_modes - 1
        report = StepReport()
        for j in range(last):
            report.add(state.apply_two_site_gate(j, gate_from_hamiltonian(forward[j], tau, dims), swap=True))
        middle = gate_from_hamiltonian(backward[last], tau, dims) @ gate_from_hamiltonian(forward[last], tau, dims)
        report.add(state.apply_two_site_gate(last, middle))
        for j in range(last - 1, -1, -1):
            gate = gate_from_hamiltonian(backward[j], tau, dims).swapped()
            report.add(state.apply_two_site_gate(j, gate, swap=True))
        return report


class StarStepper(_SwapSweepStepper):
    """Star geometry, modes ordered by ascending ``|lambda_k|`` away from the spin.

    Each mode's free term ``lambda_k a^dag a`` is folded into its spin-mode gate.
    """

    def __init__(self, dec: chainmap.StarDecomposition, sys, d_b, dt, ordering=StarOrdering.ABS_FREQUENCY_ASCENDING):
        super().__init__(sys, d_b, dt, dec.n_modes)
        if StarOrdering(ordering) is not StarOrdering.ABS_FREQUENCY_ASCENDING:
            raise ConfigurationError(f"unsupported star ordering {ordering}", key="star_ordering")
        self.order = np.argsort(np.abs(dec.lambdas), kind="stable")
        self.lambdas = dec.lambdas[self.order]
        self.couplings = chainmap.couplings_star(dec)[self.order]
        self.terms = [
            spin_mode_hamiltonian(sys, d_b, g, omega=lam, spin_weight=1.0 if j == 0 else 0.0)
            for j, (g, lam) in enumerate(zip(self.couplings, self.lambdas))
        ]

    def step(self, state: VidalMPS, t: float = 0.0) -> StepReport:
        return self._sweep(state, self.terms, self.terms)


class InteractionChainStepper(_SwapSweepStepper):
    """Interaction-picture chain; couplings ``d_n`` evaluated at ``t+dt/4`` forward, ``t+3dt/4`` back."""

    def __init__(self, dec: chainmap.StarDecomposition, sys, d_b, dt):
        super().__init__(sys, d_b, dt, dec.n_modes)
        self.dec = dec

    def terms_at(self, t: float):
        d = chainmap.couplings_ic(self.dec, t)
        return [
            spin_mode_hamiltonian(self.sys, self.d_b, d[n], spin_weight=1.0 if n == 0 else 0.0)
            for n in range(self.n_modes)
        ]

    def step(self, state: VidalMPS, t: float = 0.0) -> StepReport:
        return self._sweep(state, self.terms_at(t + self.dt / 4), self.terms_at(t + 3 * self.dt / 4))


def step_chain_schrodinger(state, coeffs, sys, dt):
    return ChainStepper(coeffs, sys, state.site_dims[1], dt).step(state)


def step_star(state, dec, sys, dt):
    return StarStepper(dec, sys, state.site_dims[1], dt).step(state)


def step_chain_interaction(state, dec, sys, t, dt):
    return InteractionChainStepper(dec, sys, state.site_dims[1], dt).step(state, t)


@dataclass
class TrajectoryRecord:
    """Observables at the recorded times; ``occupations`` rows follow ``mode_labels``."""

    scheme: Scheme
    times: list = field(default_factory=list)
    population_up: list = field(default_factory=list)
    norm_sq: list = field(default_factory=list)
    max_bond: list = field(default_factory=list)
    discarded_cum: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    bond_profiles: list = field(default_factory=list)
    occupations: list = field(default_factory=list)
    mode_labels: list = field(default_factory=list)
    svd_seconds: float = 0.0
    wall_seconds: float = 0.0
    final_state: VidalMPS | None = None

    def as_arrays(self):
        return np.asarray(self.times), np.asarray(self.population_up)


def make_stepper(config: SchemeConfig, coeffs: chainmap.ChainCoefficients, sys: SpinBosonSystem):
    if config.scheme is Scheme.C:
        return ChainStepper(coeffs, sys, config.local_dim, config.dt)
    dec = chainmap.star_decomposition(coeffs)
    if config.scheme is Scheme.S:
        return StarStepper(dec, sys, config.local_dim, config.dt, config.star_ordering)
    return InteractionChainStepper(dec, sys, config.local_dim, config.dt)


def initial_state(config: SchemeConfig, n_modes: int) -> VidalMPS:
    dims = [2] + [config.local_dim] * n_modes
    return product_state(dims, [0] * len(dims), max_bond=config.max_bond, sv_threshold=config.sv_threshold)


def run(config: SchemeConfig, bath: BathParameters | None = None, coeffs=None, system=None) -> TrajectoryRecord:
    """Propagate ``|up> (x) |0...0>`` for ``config.n_steps`` steps of ``config.dt``.

    Chain coefficients are computed from ``bath`` unless given explicitly, and
    ``system`` replaces the bath's own spin (useful for the ``delta = 0`` limit,
    where ``delta`` can no longer serve as the energy unit).
    Raises :class:`SimulationError` carrying the partial record if a step fails.
    """
    bath = bath if bath is not None else BathParameters()
    sys = system if system is not None else bath.system
    if coeffs is None:
        coeffs = bath.chain(config.N)
    elif coeffs.n_modes != config.N + 1:
        raise ConfigurationError(f"coefficients describe {coeffs.n_modes} modes, config asks for {config.N + 1}", key="N")
    started = time.perf_counter()
    stepper = make_stepper(config, coeffs, sys)
    state = initial_state(config, coeffs.n_modes)
    record = TrajectoryRecord(config.scheme)
    if config.scheme is Scheme.S:
        record.mode_labels = [f"star{k}" for k in stepper.order]
    else:
        record.mode_labels = [f"chain{n}" for n in range(coeffs.n_modes)]
    n_op = number_op(config.local_dim)

    discarded = 0.0
    step_ms = 0.0

    def observe(t):
        record.times.append(t)
        record.population_up.append(state.local_expectation(0, PROJ_UP))
        record.norm_sq.append(state.norm_squared())
        record.max_bond.append(state.max_bond_dim())
        record.discarded_cum.append(discarded)
        record.wall_ms.append(step_ms)
        record.bond_profiles.append(state.bond_profile())
        if config.record_occupations:
            record.occupations.append([state.local_expectation(i, n_op) for i in range(1, state.n_sites)])

    observe(0.0)
    steps = config.step_sizes()
    t = 0.0
    for k, h in enumerate(steps):
        tick = time.perf_counter()
        try:
            if h != config.dt:
                stepper = make_stepper(dataclasses.replace(config, dt=h), coeffs, sys)
            report = stepper.step(state, t)
        except IpchainError as exc:
            record.svd_seconds = state.svd_seconds
            raise SimulationError(f"step {k} failed: {exc}", step=k, record=record) from exc
        step_ms = (time.perf_counter() - tick) * 1e3
        discarded += report.discarded_weight
        if state.site_dims[0] != sys.dim:
            raise SimulationError(f"spin not restored to site 0 after step {k}", step=k, record=record)
        t = config.t_final if k + 1 == len(steps) else (k + 1) * config.dt
        if (k + 1) % config.record_stride == 0 or k + 1 == len(steps):
            observe(t)
    record.svd_seconds = state.svd_seconds
    record.wall_seconds = time.perf_counter() - started
    record.final_state = state
    return record
