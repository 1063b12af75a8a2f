import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discovqe import ansatz as ups
from discovqe.ansatz import Ansatz
from discovqe.fock import Determinant, build_sector_basis
from discovqe.hamiltonians import HubbardSpec, build_hubbard_hamiltonian, expectation, s_squared_expectation
from discovqe.oracle import dense_expm_apply, fci_ground_state, fock_generator, restrict_to_sector
from discovqe.pool import Kind, OperatorId, apply_generator, build_pool

from helpers import fixture_hamiltonian, random_hamiltonian


def random_ansatz(rng, pool, m, reference, scale=1.0):
    seq = [pool[int(k)] for k in rng.integers(0, len(pool), size=m)]
    return Ansatz(seq, rng.uniform(-scale, scale, size=m), reference)


def test_empty_and_zero_ansatz_give_reference():
    basis = build_sector_basis(4, 2, 2)
    pool = build_pool(4)
    ref = basis.closed_shell_reference()
    e_ref = basis.unit_vector(ref)
    np.testing.assert_array_equal(ups.evaluate_state(Ansatz([], [], ref), basis, pool), e_ref)
    zero = Ansatz(list(pool.operators), np.zeros(len(pool)), ref)
    np.testing.assert_array_equal(ups.evaluate_state(zero, basis, pool), e_ref)


@pytest.mark.parametrize("t", [0.3, -1.1, 2.5])
def test_single_pair_rotation_closed_form(t):
    basis = build_sector_basis(2, 1, 1)
    pool = build_pool(2)
    ref = basis.index(Determinant(0b01, 0b01))
    psi = ups.evaluate_state(Ansatz([OperatorId(Kind.DOUBLE, 0, 1)], [t], ref), basis, pool)
    want = np.zeros(4)
    want[ref] = np.cos(t)
    want[basis.index(Determinant(0b10, 0b10))] = np.sin(t)
    np.testing.assert_allclose(psi, want, atol=1e-15)
    # same rotation from the Kronecker-built generator
    k = restrict_to_sector(fock_generator("double", 0, 1, 2), basis)
    np.testing.assert_allclose(dense_expm_apply(k, t, basis.unit_vector(ref)), want, atol=1e-13)


def test_first_operator_acts_first():
    basis = build_sector_basis(3, 1, 1)
    pool = build_pool(3)
    rng = np.random.default_rng(2)
    a = random_ansatz(rng, pool, 6, basis.closed_shell_reference())
    psi = basis.unit_vector(a.reference)
    for op, t in zip(a.sequence, a.amplitudes):
        k = restrict_to_sector(fock_generator(op.kind.value, op.p, op.q, 3), basis)
        psi = dense_expm_apply(k, t, psi)
    np.testing.assert_allclose(ups.evaluate_state(a, basis, pool), psi, atol=1e-12)


def test_zero_amplitudes_give_reference_diagonal_energy():
    H = fixture_hamiltonian("h4_linear_0.90")
    pool = build_pool(4)
    ref = H.basis.closed_shell_reference()
    a = Ansatz(pool.operators[:5], np.zeros(5), ref)
    assert ups.energy(a, H, pool) == pytest.approx(H.matrix[ref, ref] + H.core_energy, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(0, 20))
def test_energy_is_variational(seed, m):
    rng = np.random.default_rng(seed)
    H = random_hamiltonian(4, 2, 2, rng)
    pool = build_pool(4)
    e_fci = fci_ground_state(H).energy
    a = random_ansatz(rng, pool, m, H.basis.closed_shell_reference(), scale=3.0)
    assert ups.energy(a, H, pool) >= e_fci - 1e-12


def test_gradient_at_zero_amplitudes_for_last_operator():
    H = fixture_hamiltonian("h4_linear_0.90")
    pool = build_pool(4)
    ref = H.basis.closed_shell_reference()
    phi = H.basis.unit_vector(ref)
    for op in pool:
        a = Ansatz([pool[0], pool[7], op], np.zeros(3), ref)
        g = ups.gradient(a, H, pool)
        want = 2 * phi @ H.matvec(apply_generator(op, phi, H.basis, pool))
        assert g[-1] == pytest.approx(want, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 8))
def test_gradient_matches_central_differences(seed, m):
    rng = np.random.default_rng(seed)
    H = random_hamiltonian(4, 2, 2, rng)
    pool = build_pool(4)
    a = random_ansatz(rng, pool, m, H.basis.closed_shell_reference())
    e, g = ups.energy_and_gradient(a, H, pool)
    assert e == pytest.approx(ups.energy(a, H, pool), abs=1e-14)
    h = 1e-5
    for i in range(m):
        up, dn = a.amplitudes.copy(), a.amplitudes.copy()
        up[i] += h
        dn[i] -= h
        fd = (ups.energy(a.with_amplitudes(up), H, pool) - ups.energy(a.with_amplitudes(dn), H, pool)) / (2 * h)
        assert abs(g[i] - fd) <= 1e-6 * max(abs(g[i]), 1e-3)


def test_state_norm_and_spin_purity_along_prefixes():
    basis = build_sector_basis(5, 2, 2)
    pool = build_pool(5)
    rng = np.random.default_rng(4)
    a = random_ansatz(rng, pool, 100, basis.closed_shell_reference(), scale=3.0)
    for m in (1, 10, 37, 100):
        prefix = Ansatz(a.sequence[:m], a.amplitudes[:m], a.reference)
        psi = ups.evaluate_state(prefix, basis, pool)
        assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)
        assert s_squared_expectation(psi, basis) == pytest.approx(0.0, abs=1e-10)


def test_inserting_zero_amplitude_operator_is_bit_exact():
    basis = build_sector_basis(4, 2, 2)
    pool = build_pool(4)
    rng = np.random.default_rng(6)
    a = random_ansatz(rng, pool, 7, basis.closed_shell_reference())
    psi = ups.evaluate_state(a, basis, pool)
    for pos in (0, 3, 7):
        seq = a.sequence[:pos] + [pool[5]] + a.sequence[pos:]
        amps = np.insert(a.amplitudes, pos, 0.0)
        np.testing.assert_array_equal(ups.evaluate_state(Ansatz(seq, amps, a.reference), basis, pool), psi)


def test_out_of_range_inputs():
    basis = build_sector_basis(3, 1, 1)
    pool = build_pool(3)
    with pytest.raises(IndexError):
        ups.evaluate_state(Ansatz([OperatorId(Kind.SINGLE, 0, 3)], [0.1], 0), basis, pool)
    with pytest.raises(IndexError):
        ups.evaluate_state(Ansatz([], [], 99), basis, pool)
    with pytest.raises(ValueError):
        Ansatz([pool[0]], [0.1, 0.2])


def test_dimer_single_pair_double_is_exact():
    from discovqe.optimize import local_minimize

    u = 3.0
    basis = build_sector_basis(2, 1, 1)
    H = build_hubbard_hamiltonian(HubbardSpec(lx=2, u_rep=u), basis)
    pool = build_pool(2)
    a = Ansatz([OperatorId(Kind.DOUBLE, 0, 1)], [0.1], basis.closed_shell_reference())
    res = local_minimize(a, H, pool)
    assert res.converged
    assert res.energy == pytest.approx((u - np.sqrt(u * u + 16)) / 2, abs=1e-10)
    psi = ups.evaluate_state(res.ansatz, basis, pool)
    assert expectation(H, psi) == pytest.approx(res.energy, abs=1e-14)


def test_text_round_trip_is_bit_exact():
    pool = build_pool(4)
    rng = np.random.default_rng(9)
    a = random_ansatz(rng, pool, 12, 3)
    text = ups.dumps(a, pool)
    b = ups.loads(text, pool)
    assert b.sequence == a.sequence and b.reference == 3
    np.testing.assert_array_equal(b.amplitudes, a.amplitudes)
    assert text.splitlines()[0].startswith("# ups-ansatz pool=")
    with pytest.raises(ValueError):
        ups.loads(text, build_pool(5))


def test_loads_accepts_decimal_and_rejects_garbage():
    a = ups.loads("reference 0\nsingle 0 1 0.25\ndouble 1 2 -1.5e-1\n")
    assert a.sequence == [OperatorId(Kind.SINGLE, 0, 1), OperatorId(Kind.DOUBLE, 1, 2)]
    np.testing.assert_array_equal(a.amplitudes, [0.25, -0.15])
    with pytest.raises(ValueError):
        ups.loads("single 0 1 0.25\n")
    with pytest.raises(ValueError):
        ups.loads("reference 0\nsingle 0 1\n")
    with pytest.raises(ValueError):
        ups.loads("reference 0\ntriple 0 1 0.1\n")
