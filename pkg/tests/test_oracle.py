import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from discovqe.fock import build_sector_basis
from discovqe.hamiltonians import HubbardSpec, SectorHamiltonian, build_hubbard_hamiltonian
from discovqe.oracle import (
    ConvergenceError,
    davidson,
    dense_expm_apply,
    dense_operator_matrix,
    fci_ground_state,
)
from discovqe.pool import build_pool

from helpers import fixture_hamiltonian, random_hamiltonian


def test_diagonal_matrix():
    basis = build_sector_basis(3, 1, 1)
    d = np.linspace(2.0, -1.0, basis.size)
    H = SectorHamiltonian(basis, sp.csr_matrix(np.diag(d)), 0.5)
    for method in ("dense", "iterative"):
        res = fci_ground_state(H, method=method)
        assert res.energy == pytest.approx(d.min() + 0.5, abs=1e-12)
        k = int(np.argmin(d))
        assert abs(res.ground_vector[k]) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name", ["h6_linear_1.50", "h2o_1.50"])
def test_dense_and_iterative_agree(name):
    H = fixture_hamiltonian(name)
    dense = fci_ground_state(H, method="dense")
    it = fci_ground_state(H, method="iterative")
    assert dense.method == "dense" and it.method == "iterative"
    assert it.energy == pytest.approx(dense.energy, abs=1e-9)
    assert abs(abs(it.ground_vector @ dense.ground_vector) - 1) < 1e-8
    for res in (dense, it):
        assert res.residual_norm <= 1e-9 * max(1.0, abs(res.energy))


def test_auto_switches_on_dimension():
    H = fixture_hamiltonian("h4_linear_0.90")
    assert fci_ground_state(H).method == "dense"
    assert fci_ground_state(H, dense_cap=10).method == "iterative"
    assert fci_ground_state(H, auto_dense_limit=10).method == "iterative"
    with pytest.raises(ValueError):
        fci_ground_state(H, method="dense", dense_cap=10)
    with pytest.raises(ValueError):
        fci_ground_state(H, method="iterative", iterative_cap=10)


def test_davidson_reports_non_convergence():
    H = fixture_hamiltonian("h6_linear_1.50")
    with pytest.raises(ConvergenceError) as info:
        davidson(H.matvec, H.diagonal(), tol=1e-14, max_iter=2)
    assert info.value.residual > 0


def test_spin_targeting_and_degeneracy():
    basis = build_sector_basis(2, 1, 1)
    # without hopping, singlet and triplet with one electron per site are degenerate
    H = build_hubbard_hamiltonian(HubbardSpec(lx=2, t_hop=0.0, u_rep=1.0), basis, "site")
    res = fci_ground_state(H)
    assert res.degenerate
    singlet = fci_ground_state(H, target_s2=0.0)
    assert singlet.s_squared == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(ValueError):
        fci_ground_state(H, target_s2=12.0)


def test_dense_operator_matrix_and_symmetry():
    H = fixture_hamiltonian("h4_linear_0.90")
    m = dense_operator_matrix(H, H.basis)
    np.testing.assert_allclose(m, m.T, atol=1e-12)
    np.testing.assert_array_equal(m, H.matrix.toarray())
    pool = build_pool(4)
    for op in pool:
        k = dense_operator_matrix(op, H.basis, pool)
        np.testing.assert_array_equal(k + k.T, 0.0)
    with pytest.raises(ValueError):
        dense_operator_matrix(H, H.basis, cap=10)
    with pytest.raises(ValueError):
        dense_operator_matrix(pool[0], H.basis)


def test_dense_expm_against_scipy():
    rng = np.random.default_rng(12)
    a = rng.normal(size=(30, 30))
    a = a - a.T
    v = rng.normal(size=30)
    np.testing.assert_array_equal(dense_expm_apply(a, 0.0, v), v)
    for t in (0.01, 0.7, 3.0, -5.0):
        out = dense_expm_apply(a, t, v)
        np.testing.assert_allclose(out, scipy.linalg.expm(t * a) @ v, atol=1e-11)
        assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(v), rel=1e-13)
    with pytest.raises(ValueError):
        dense_expm_apply(a, 1.0, v, cap=10)


def test_random_hamiltonian_residual():
    H = random_hamiltonian(4, 2, 1, np.random.default_rng(0))
    res = fci_ground_state(H)
    v = res.ground_vector
    assert np.linalg.norm(H.matvec(v) - (res.energy - H.core_energy) * v) <= 1e-9 * max(1, abs(res.energy))
    np.testing.assert_array_equal(np.sort(res.eigenvalues), res.eigenvalues)
