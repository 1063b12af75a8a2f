"""Small builders shared by the test modules."""

from pathlib import Path

import numpy as np

from discovqe.fcidump import read_fcidump
from discovqe.fock import build_sector_basis
from discovqe.hamiltonians import build_molecular_hamiltonian, integrals_operator, SectorHamiltonian

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_hamiltonian(name: str, frozen: int = 0):
    from discovqe.fcidump import freeze_core

    data = read_fcidump(FIXTURES / f"{name}.fcidump")
    if frozen:
        data = freeze_core(data, frozen)
    basis = build_sector_basis(data.n_orbitals, data.n_alpha, data.n_beta)
    return build_molecular_hamiltonian(data, basis, name)


def random_integrals(n: int, rng: np.random.Generator, scale: float = 1.0):
    """Real integrals with full 8-fold symmetry."""
    h = rng.normal(size=(n, n)) * scale
    h = 0.5 * (h + h.T)
    g = rng.normal(size=(n, n, n, n)) * scale
    g = g + g.transpose(1, 0, 2, 3)
    g = g + g.transpose(0, 1, 3, 2)
    g = g + g.transpose(2, 3, 0, 1)
    return h, g / 8.0


def random_hamiltonian(n: int, na: int, nb: int, rng: np.random.Generator, scale: float = 1.0):
    h, g = random_integrals(n, rng, scale)
    basis = build_sector_basis(n, na, nb)
    return SectorHamiltonian(basis, integrals_operator(basis, h, g), 0.0, "random")
