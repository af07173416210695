import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from ipchain.errors import DomainError
from ipchain import mps
from ipchain.mps import TwoSiteGate, VidalMPS, product_state, truncated_svd
from ipchain.propagate import PROJ_UP, SIGMA_X, SIGMA_Z, gate_from_hamiltonian, number_op


def random_unitary(n, rng):
    return unitary_group.rvs(n, random_state=rng)


def apply_dense(psi, dims, bond, gate, swap=False):
    """State-vector reference for a two-site gate (plus optional leg swap)."""
    dims = list(dims)
    d1, d2 = dims[bond], dims[bond + 1]
    left = int(np.prod(dims[:bond]))
    right = int(np.prod(dims[bond + 2 :]))
    t = psi.reshape(left, d1 * d2, right)
    t = np.einsum("ij,ajb->aib", gate, t).reshape(left, d1, d2, right)
    if swap:
        t = t.transpose(0, 2, 1, 3)
        dims[bond], dims[bond + 1] = d2, d1
    return t.reshape(-1), dims


def dense_expectation(psi, dims, site, op):
    left = int(np.prod(dims[:site]))
    right = int(np.prod(dims[site + 1 :]))
    t = psi.reshape(left, dims[site], right)
    return np.einsum("aib,ij,ajb->", t.conj(), op, t).real


def test_product_state_basics():
    state = product_state([2, 10, 10], [0, 0, 0])
    assert state.bond_profile() == [1, 1]
    assert state.norm_squared() == pytest.approx(1.0)
    assert state.local_expectation(0, PROJ_UP) == 1.0
    assert state.local_expectation(0, SIGMA_Z) == 1.0
    assert state.local_expectation(1, number_op(10)) == 0.0
    assert len(state.svals) == state.n_sites - 1


def test_product_state_populations_of_own_basis_state():
    state = product_state([3, 4], [2, 1])
    assert state.local_expectation(0, np.diag([0, 0, 1.0])) == 1.0
    assert state.local_expectation(1, np.diag([0, 1.0, 0, 0])) == 1.0


def test_product_state_index_out_of_range():
    with pytest.raises(DomainError):
        product_state([2], [3])


def test_identity_gate_leaves_state_unchanged():
    rng = np.random.default_rng(1)
    state = product_state([2, 3, 3], [0, 1, 2])
    state.apply_two_site_gate(0, TwoSiteGate(random_unitary(6, rng), (2, 3)))
    before = state.to_dense()
    report = state.apply_two_site_gate(1, TwoSiteGate.identity(3, 3))
    assert report.discarded_weight == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(state.to_dense(), before, atol=1e-13)


def test_swap_twice_restores_state():
    rng = np.random.default_rng(2)
    state = product_state([2, 4, 3], [0, 0, 0])
    state.apply_two_site_gate(0, TwoSiteGate(random_unitary(8, rng), (2, 4)))
    state.apply_two_site_gate(1, TwoSiteGate(random_unitary(12, rng), (4, 3)))
    before = state.to_dense()
    state.apply_two_site_gate(1, TwoSiteGate.identity(4, 3), swap=True)
    assert state.site_dims == [2, 3, 4]
    state.apply_two_site_gate(1, TwoSiteGate.identity(3, 4), swap=True)
    assert state.site_dims == [2, 4, 3]
    np.testing.assert_allclose(state.to_dense(), before, atol=1e-12)


def test_random_gate_on_two_sites_matches_dense():
    rng = np.random.default_rng(3)
    u = random_unitary(4, rng)
    state = product_state([2, 2], [0, 0])
    report = state.apply_two_site_gate(0, TwoSiteGate(u, (2, 2)))
    psi0 = np.zeros(4)
    psi0[0] = 1
    expected, _ = apply_dense(psi0, [2, 2], 0, u)
    np.testing.assert_allclose(state.to_dense(), expected, atol=1e-12)
    assert abs(state.norm_squared() - 1) < 1e-12
    assert report.bond_dim <= 2


def test_gate_dimension_mismatch():
    state = product_state([2, 3], [0, 0])
    with pytest.raises(DomainError):
        state.apply_two_site_gate(0, TwoSiteGate.identity(2, 2))
    with pytest.raises(DomainError):
        state.apply_two_site_gate(1, TwoSiteGate.identity(2, 3))


def test_local_expectation_dimension_mismatch():
    with pytest.raises(DomainError):
        product_state([2, 3], [0, 0]).local_expectation(1, np.eye(2))


def test_free_spin_rotation():
    # exp(-i delta sigma_x t) at t = pi/4: P_up = cos^2 = 1/2, <sigma_z> = 0
    state = product_state([2, 2], [0, 0])
    gate = gate_from_hamiltonian(np.kron(SIGMA_X, np.eye(2)), math.pi / 4)
    state.apply_two_site_gate(0, gate)
    assert state.local_expectation(0, SIGMA_Z) == pytest.approx(0.0, abs=1e-14)
    assert state.local_expectation(0, PROJ_UP) == pytest.approx(0.5, abs=1e-14)


def test_bond_profile_locality():
    rng = np.random.default_rng(4)
    state = product_state([2, 3, 3, 3], [0, 0, 0, 0])
    state.apply_two_site_gate(2, TwoSiteGate(random_unitary(9, rng), (3, 3)))
    profile = state.bond_profile()
    assert profile[:2] == [1, 1]
    assert profile[2] > 1


def test_truncation_accounting():
    rng = np.random.default_rng(5)
    state = product_state([4, 4, 4], [0, 0, 0], sv_threshold=0.2)
    untruncated = product_state([4, 4, 4], [0, 0, 0])
    gates = [TwoSiteGate(random_unitary(16, rng), (4, 4)) for _ in range(3)]
    for bond, g in zip([0, 1, 0], gates):
        untruncated.apply_two_site_gate(bond, g)
    # Schmidt values of the next bond-1 update, taken from the untruncated twin
    state = untruncated.copy()
    state.sv_threshold = 0.2
    psi, dims = apply_dense(state.to_dense(), state.site_dims, 1, gates[0].dense())
    s = np.linalg.svd(psi.reshape(dims[0] * dims[1], dims[2]), compute_uv=False)
    report = state.apply_two_site_gate(1, gates[0])
    retained = np.sum(s[s >= 0.2] ** 2)
    assert report.discarded_weight == pytest.approx(1 - retained, abs=1e-12)
    assert report.bond_dim == np.count_nonzero(s >= 0.2)
    assert np.sum(state.svals[1] ** 2) == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.diff(state.svals[1]) <= 0)


def test_max_bond_cap():
    rng = np.random.default_rng(6)
    state = product_state([4, 4, 4], [0, 0, 0], max_bond=2)
    state.apply_two_site_gate(0, TwoSiteGate(random_unitary(16, rng), (4, 4)))
    state.apply_two_site_gate(1, TwoSiteGate(random_unitary(16, rng), (4, 4)))
    assert max(state.bond_profile()) <= 2


def test_norm_conservation_and_gauge_without_truncation():
    rng = np.random.default_rng(8)
    dims = [2, 3, 3, 2]
    state = product_state(dims, [0] * 4, sv_threshold=0.0, max_bond=10**6)
    for _ in range(20):
        bond = int(rng.integers(0, 3))
        d1, d2 = state.site_dims[bond], state.site_dims[bond + 1]
        state.apply_two_site_gate(bond, TwoSiteGate(random_unitary(d1 * d2, rng), (d1, d2)), swap=bool(rng.integers(2)))
    assert abs(state.norm_squared() - 1) < 1e-10
    assert state.gauge_residual() < 1e-8


@settings(max_examples=25, deadline=None)
@given(
    dims=st.sampled_from([(2, 2, 2), (2, 3, 4), (2, 4, 4), (2, 4, 3), (3, 2, 2)]),
    seed=st.integers(0, 2**32 - 1),
    swaps=st.lists(st.booleans(), min_size=10, max_size=10),
)
def test_random_sequences_match_state_vector(dims, seed, swaps):
    rng = np.random.default_rng(seed)
    state = product_state(list(dims), [0, 0, 0], sv_threshold=0.0, max_bond=10**6)
    psi = np.zeros(int(np.prod(dims)), dtype=complex)
    psi[0] = 1
    cur = list(dims)
    for swap in swaps:
        bond = int(rng.integers(0, 2))
        d1, d2 = cur[bond], cur[bond + 1]
        u = random_unitary(d1 * d2, rng)
        state.apply_two_site_gate(bond, TwoSiteGate(u, (d1, d2)), swap=swap)
        psi, cur = apply_dense(psi, cur, bond, u, swap)
    assert state.site_dims == cur
    for site, d in enumerate(cur):
        op = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        op = op + op.conj().T
        assert state.local_expectation(site, op) == pytest.approx(dense_expectation(psi, cur, site, op), abs=1e-9)
    assert abs(abs(np.vdot(state.to_dense(), psi)) - 1) < 1e-9


def test_sparse_gate_equivalent_to_dense():
    import scipy.sparse as sp

    rng = np.random.default_rng(9)
    u = random_unitary(9, rng)
    a = product_state([2, 3, 3], [0, 1, 2])
    a.apply_two_site_gate(0, TwoSiteGate(random_unitary(6, rng), (2, 3)))
    b = a.copy()
    a.apply_two_site_gate(1, TwoSiteGate(u, (3, 3)))
    b.apply_two_site_gate(1, TwoSiteGate(sp.csr_matrix(u), (3, 3)))
    np.testing.assert_allclose(a.to_dense(), b.to_dense(), atol=1e-13)


def test_gate_swapped_conjugates_by_swap():
    rng = np.random.default_rng(10)
    g = TwoSiteGate(random_unitary(6, rng), (2, 3))
    swap = np.zeros((6, 6))
    for i in range(2):
        for j in range(3):
            swap[j * 2 + i, i * 3 + j] = 1
    np.testing.assert_allclose(g.swapped().dense(), swap @ g.dense() @ swap.T, atol=1e-15)
    assert g.swapped().dims == (3, 2)


def test_vidal_requires_consistent_bonds():
    with pytest.raises(DomainError):
        VidalMPS([np.ones((1, 2, 1))], [np.ones(1)])


def matrix_with_spectrum(s, shape, rng):
    u = np.linalg.qr(rng.normal(size=(shape[0], len(s))) + 1j * rng.normal(size=(shape[0], len(s))))[0]
    v = np.linalg.qr(rng.normal(size=(shape[1], len(s))) + 1j * rng.normal(size=(shape[1], len(s))))[0]
    return (u * s) @ v.conj().T


@pytest.mark.parametrize("n_large", [10, 100])
def test_truncated_svd_resolves_values_above_threshold(n_large):
    rng = np.random.default_rng(21)
    spectrum = np.concatenate([np.linspace(1.0, 0.01, n_large), 1e-5 * 0.5 ** np.arange(200)])
    theta = matrix_with_spectrum(spectrum, (400, 300), rng)
    u, s, vh = truncated_svd(theta, 1e-3, 1000)
    assert len(s) > n_large
    assert np.max(np.abs(s[:n_large] - spectrum[:n_large])) < 1e-10
    k = n_large
    assert np.linalg.norm((u[:, :k] * s[:k]) @ vh[:k] - best_rank_approximation(theta, k)) < 1e-9


def best_rank_approximation(theta, k):
    u, s, vh = np.linalg.svd(theta, full_matrices=False)
    return (u[:, :k] * s[:k]) @ vh[:k]


def test_truncated_svd_is_exact_when_sketch_spans_matrix():
    rng = np.random.default_rng(22)
    theta = rng.normal(size=(40, 30)) + 1j * rng.normal(size=(40, 30))
    u, s, vh = truncated_svd(theta, 1e-3, 1000)
    assert np.allclose(s, np.linalg.svd(theta, compute_uv=False), atol=1e-12)
    assert np.allclose((u * s) @ vh, theta, atol=1e-12)


def test_randomized_and_full_updates_agree(monkeypatch):
    rng = np.random.default_rng(23)
    dims = [2, 6, 6, 6]
    gates = []
    for _ in range(12):
        bond = int(rng.integers(0, 3))
        gates.append((bond, TwoSiteGate(random_unitary(dims[bond] * dims[bond + 1], rng), (dims[bond], dims[bond + 1]))))
    results = {}
    for label, threshold_dim in (("randomized", 1), ("full", 10**9)):
        monkeypatch.setattr(mps, "RANDOMIZED_MIN_DIM", threshold_dim)
        state = product_state(dims, [0] * 4, sv_threshold=1e-3)
        reports = [state.apply_two_site_gate(bond, gate) for bond, gate in gates]
        results[label] = (state.to_dense(), [r.bond_dim for r in reports], sum(r.discarded_weight for r in reports))
    assert np.allclose(results["randomized"][0], results["full"][0], atol=1e-10)
    assert results["randomized"][1] == results["full"][1]
    assert results["randomized"][2] == pytest.approx(results["full"][2], abs=1e-12)
