import math
from collections import Counter

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from discovqe import ansatz as ups, optimize
from discovqe.ansatz import Ansatz
from discovqe.fock import build_sector_basis
from discovqe.hamiltonians import HubbardSpec, SectorHamiltonian, build_hubbard_hamiltonian
from discovqe.optimize import (
    OptimizerConfig,
    adapt_vqe,
    basin_hop,
    cyclic_move,
    disco_vqe,
    local_minimize,
    mutation_move,
    swap_move,
)
from discovqe.pool import Kind, OperatorId, OperatorPool, apply_generator, build_pool

from helpers import fixture_hamiltonian, random_hamiltonian

S = Kind.SINGLE
D = Kind.DOUBLE


@pytest.fixture(scope="module")
def h4():
    return fixture_hamiltonian("h4_linear_0.90")


@pytest.fixture(scope="module")
def pool4():
    return build_pool(4)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(grad_tolerance=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(m_operators=-1)
    with pytest.raises(ValueError):
        OptimizerConfig(unknown_knob=1)


@pytest.mark.parametrize("u", [0.5, 4.0, 12.0])
def test_dimer_pair_double_reaches_closed_form(u):
    basis = build_sector_basis(2, 1, 1)
    H = build_hubbard_hamiltonian(HubbardSpec(lx=2, u_rep=u), basis)
    pool = build_pool(2)
    res = local_minimize(Ansatz([OperatorId(D, 0, 1)], [0.1], basis.closed_shell_reference()), H, pool)
    assert res.converged and res.grad_max <= 1e-9
    assert res.energy == pytest.approx((u - math.sqrt(u * u + 16)) / 2, abs=1e-10)


def test_stationary_point_is_left_alone(h4, pool4):
    rng = np.random.default_rng(0)
    seq = [pool4[int(k)] for k in rng.integers(0, 12, 6)]
    first = local_minimize(Ansatz(seq, rng.uniform(-0.1, 0.1, 6), h4.basis.closed_shell_reference()), h4, pool4)
    again = local_minimize(first.ansatz, h4, pool4)
    assert again.iterations == 0
    np.testing.assert_array_equal(again.ansatz.amplitudes, first.ansatz.amplitudes)
    assert again.energy == first.energy


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 8))
def test_local_minimize_descends(seed, m):
    rng = np.random.default_rng(seed)
    H = random_hamiltonian(4, 2, 2, rng)
    pool = build_pool(4)
    a = Ansatz([pool[int(k)] for k in rng.integers(0, 12, m)], rng.uniform(-2, 2, m), H.basis.closed_shell_reference())
    res = local_minimize(a, H, pool)
    assert res.energy <= ups.energy(a, H, pool) + 1e-12
    assert res.ansatz.sequence == a.sequence
    if res.converged:
        assert np.max(np.abs(ups.gradient(res.ansatz, H, pool))) <= 1e-9 * 1.01


def test_iteration_cap_is_reported(h4, pool4):
    a = Ansatz(pool4.operators, np.full(12, 0.3), h4.basis.closed_shell_reference())
    res = local_minimize(a, h4, pool4, max_iterations=2)
    assert not res.converged and res.iterations == 2
    with pytest.raises(ValueError):
        local_minimize(a.with_amplitudes(np.full(12, np.nan)), h4, pool4)


def test_basin_hop_without_steps_is_local_minimize(h4, pool4):
    a = Ansatz(pool4.operators[:5], np.full(5, 0.05), h4.basis.closed_shell_reference())
    cfg = OptimizerConfig(bh_steps_per_cycle=0)
    out, e = basin_hop(a, h4, pool4, cfg)
    ref = local_minimize(a, h4, pool4, cfg)
    assert e == ref.energy
    np.testing.assert_array_equal(out.amplitudes, ref.ansatz.amplitudes)


def test_basin_hop_is_best_seen_and_deterministic(h4, pool4):
    a = Ansatz([pool4[k] for k in (6, 1, 11, 3, 8, 0)], np.full(6, 0.05), h4.basis.closed_shell_reference())
    cfg = OptimizerConfig(bh_steps_per_cycle=6, rng_seed=3)
    out1, e1 = basin_hop(a, h4, pool4, cfg)
    out2, e2 = basin_hop(a, h4, pool4, cfg)
    assert e1 == e2
    np.testing.assert_array_equal(out1.amplitudes, out2.amplitudes)
    assert e1 <= local_minimize(a, h4, pool4, cfg).energy + 1e-12
    assert out1.sequence == a.sequence


def _diagonal_hamiltonian(basis):
    d = np.linspace(0.0, 1.0, basis.size)
    return SectorHamiltonian(basis, sp.csr_matrix(np.diag(d)), 0.0)


def test_cyclic_single_operator_is_unchanged(h4, pool4):
    a = Ansatz([pool4[7]], [0.2], h4.basis.closed_shell_reference())
    out, e = cyclic_move(a, h4, pool4)
    assert out.sequence == a.sequence and e == ups.energy(a, h4, pool4)


def test_cyclic_ties_go_to_smallest_offset(pool4):
    basis = build_sector_basis(4, 2, 2)
    H = _diagonal_hamiltonian(basis)
    seq = [pool4[k] for k in (0, 4, 9, 2)]
    out, _ = cyclic_move(Ansatz(seq, np.zeros(4), basis.closed_shell_reference()), H, pool4)
    assert out.sequence == seq[1:] + seq[:1]


def test_cyclic_on_commuting_sequence_keeps_energy(h4, pool4):
    seq = [OperatorId(S, 0, 1), OperatorId(D, 2, 3), OperatorId(D, 0, 1), OperatorId(S, 2, 3)]
    a = local_minimize(Ansatz(seq, [0.1, -0.2, 0.15, 0.05], h4.basis.closed_shell_reference()), h4, pool4).ansatz
    e0 = ups.energy(a, h4, pool4)
    for r in range(1, 4):
        rolled = Ansatz(a.sequence[r:] + a.sequence[:r], np.roll(a.amplitudes, -r), a.reference)
        assert ups.energy(rolled, h4, pool4) == pytest.approx(e0, abs=1e-12)
    _, e = cyclic_move(a, h4, pool4)
    assert e == pytest.approx(e0, abs=1e-12)


def test_mutation_with_single_operator_pool(h4):
    pool = OperatorPool(4, [OperatorId(D, 0, 2)])
    a = Ansatz([OperatorId(D, 0, 2)] * 2, [0.1, 0.2], h4.basis.closed_shell_reference())
    out, e = mutation_move(a, h4, pool)
    assert out.sequence == a.sequence and e == ups.energy(a, h4, pool)


def test_mutation_counts_and_improves_redundant_operator(h4, pool4):
    ref = h4.basis.closed_shell_reference()
    # the duplicated paired double makes the last slot redundant at the optimum
    base = local_minimize(Ansatz([pool4[6], pool4[9], pool4[9]], [0.1, 0.1, 0.0], ref), h4, pool4).ansatz
    counters = Counter()
    out, e = mutation_move(base, h4, pool4, counters=counters)
    assert counters["mutation_candidates"] == 3 * (len(pool4) - 1)
    assert counters["relaxations"] == 3 * (len(pool4) - 1)
    assert e < ups.energy(base, h4, pool4) - 1e-6
    phi = h4.basis.unit_vector(ref)
    sel = [abs(phi @ h4.matvec(apply_generator(op, phi, h4.basis, pool4))) for op in pool4]
    assert out.sequence != base.sequence


def test_swap_counts_and_invariances(h4, pool4):
    ref = h4.basis.closed_shell_reference()
    same = Ansatz([pool4[8], pool4[8]], [0.1, 0.1], ref)
    same = local_minimize(same, h4, pool4).ansatz
    _, e = swap_move(same, h4, pool4)
    assert e == pytest.approx(ups.energy(same, h4, pool4), abs=1e-12)

    commuting = local_minimize(Ansatz([OperatorId(D, 0, 1), OperatorId(D, 2, 3)], [0.1, 0.1], ref), h4, pool4).ansatz
    _, e = swap_move(commuting, h4, pool4)
    assert e == pytest.approx(ups.energy(commuting, h4, pool4), abs=1e-12)

    counters = Counter()
    a = Ansatz([pool4[k] for k in (1, 6, 3, 10, 7)], np.full(5, 0.05), ref)
    swap_move(a, h4, pool4, counters=counters)
    assert counters["swap_candidates"] == 5 * 4 // 2


def test_disco_empty_sequence_is_certified_reference(h4, pool4):
    res = disco_vqe(h4, pool4, OptimizerConfig(m_operators=0))
    ref = h4.basis.closed_shell_reference()
    assert res.certified
    assert res.energy == pytest.approx(h4.matrix[ref, ref] + h4.core_energy, abs=1e-14)
    assert len(res.ansatz) == 0


def _small_run(h4, pool4, **kw):
    cfg = OptimizerConfig(m_operators=4, restarts=2, max_macro_cycles=6, rng_seed=21, **kw)
    records = []
    return disco_vqe(h4, pool4, cfg, on_record=records.append), records


def test_disco_is_deterministic(h4, pool4):
    a, rec_a = _small_run(h4, pool4)
    b, rec_b = _small_run(h4, pool4)
    assert rec_a == rec_b == a.move_history
    np.testing.assert_array_equal(a.ansatz.amplitudes, b.ansatz.amplitudes)
    assert a.ansatz.sequence == b.ansatz.sequence


def test_disco_records_and_best_energy(h4, pool4):
    res, records = _small_run(h4, pool4)
    assert records[0]["move"] == "init"
    assert {"restart", "cycle", "move", "energy", "seed"} <= set(records[0])
    assert res.energy == pytest.approx(min(res.restart_energies), abs=1e-10)
    assert res.energy == pytest.approx(ups.energy(res.ansatz, h4, pool4), abs=1e-12)
    for r in range(2):
        best = math.inf
        for rec in (x for x in records if x["restart"] == r):
            best = min(best, rec["energy"])
        assert best >= res.energy - 1e-10
    c = res.counters
    assert c["cyclic_candidates"] == c["macro_cycles"] * 3
    assert c["mutation_candidates"] == c["macro_cycles"] * 4 * 11
    assert c["swap_candidates"] == c["macro_cycles"] * 6


def test_time_limit_stops_inside_a_sweep(h4, pool4, monkeypatch):
    ticks = iter(range(10**6))
    monkeypatch.setattr(optimize.time, "monotonic", lambda: float(next(ticks)))
    # one tick for the start, one for the cycle check, then one per sweep position
    cfg = OptimizerConfig(m_operators=4, restarts=3, time_limit=3.5, bh_steps_per_cycle=0)
    res = disco_vqe(h4, pool4, cfg)
    assert res.exhausted and not res.certified
    assert len(res.restart_energies) == 1
    assert res.counters["macro_cycles"] == 0
    assert res.counters["mutation_candidates"] == 2 * 11


def test_certified_biminimum_has_no_better_neighbour(h4, pool4):
    cfg = OptimizerConfig(m_operators=3, restarts=1, max_macro_cycles=30, rng_seed=5)
    res = disco_vqe(h4, pool4, cfg)
    assert res.certified
    assert res.grad_max <= cfg.grad_tolerance
    fresh = OptimizerConfig(candidate_max_iterations=cfg.max_iterations)
    for move in (cyclic_move, mutation_move, swap_move):
        _, e = move(res.ansatz, h4, pool4, fresh)
        assert e >= res.energy - cfg.energy_tolerance


def test_adapt_first_choice_and_monotone_trace(h4, pool4):
    ref = h4.basis.closed_shell_reference()
    phi = h4.basis.unit_vector(ref)
    sel = [abs(2 * phi @ h4.matvec(apply_generator(op, phi, h4.basis, pool4))) for op in pool4]
    res = adapt_vqe(h4, pool4, max_operators=6, selection_tolerance=1e-6)
    assert res.ansatz.sequence[0] == pool4[int(np.argmax(sel))]
    assert res.selection_norms[0] == pytest.approx(max(sel), abs=1e-12)
    assert all(b <= a + 1e-12 for a, b in zip(res.energies, res.energies[1:]))
    assert res.status == "max_operators" and len(res.ansatz) == 6


def test_adapt_stops_when_gradients_vanish():
    basis = build_sector_basis(2, 1, 1)
    H = build_hubbard_hamiltonian(HubbardSpec(lx=2, u_rep=2.0), basis)
    res = adapt_vqe(H, build_pool(2), max_operators=10, selection_tolerance=1e-6)
    assert res.status == "converged"
    assert len(res.ansatz) == 1
    assert res.energy == pytest.approx((2 - math.sqrt(20)) / 2, abs=1e-10)
