"""Sector Hamiltonians from FCIDUMP integrals or Hubbard lattices, plus observables.

All matrices are real and stored as CSR with sorted column indices.  The
spin-free Hamiltonian is assembled from spin-summed excitation operators,

    H = sum_pq k_pq E_pq + 1/2 sum_pqrs (pq|rs) E_pq E_rs,
    k_pq = h_pq - 1/2 sum_r (pr|rq),

with E_pq = a+_{p,a} a_{q,a} + a+_{p,b} a_{q,b}.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .fcidump import FcidumpData
from .fock import SectorBasis, string_excitation_table, strings


@dataclass(frozen=True, eq=False)
class SectorHamiltonian:
    basis: SectorBasis
    matrix: sp.csr_matrix
    core_energy: float = 0.0
    label: str = ""

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()


class HubbardSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lx: int = Field(gt=0)
    ly: int = Field(1, gt=0)
    t_hop: float = 1.0
    u_rep: float = 0.0
    periodic_x: bool = False
    periodic_y: bool = False

    @model_validator(mode="after")
    def _finite(self):
        if not (np.isfinite(self.t_hop) and np.isfinite(self.u_rep)):
            raise ValueError("t_hop and u_rep must be finite")
        return self

    @property
    def n_sites(self) -> int:
        return self.lx * self.ly

    @property
    def boundary(self) -> str:
        return f"{'periodic' if self.periodic_x else 'open'}-x/{'periodic' if self.periodic_y else 'open'}-y"

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour site pairs ``(i, j)`` with ``i < j``, each counted once.

        Sites are numbered ``x + lx * y``.  A periodic axis of length 2
        coincides with the open one (the wrap bond is the same bond).
        """
        out = set()
        for y in range(self.ly):
            for x in range(self.lx):
                i = x + self.lx * y
                if x + 1 < self.lx or (self.periodic_x and self.lx > 2):
                    j = (x + 1) % self.lx + self.lx * y
                    out.add((min(i, j), max(i, j)))
                if y + 1 < self.ly or (self.periodic_y and self.ly > 2):
                    j = x + self.lx * ((y + 1) % self.ly)
                    out.add((min(i, j), max(i, j)))
        return sorted(out)

    def hopping_matrix(self) -> np.ndarray:
        n = self.n_sites
        h = np.zeros((n, n))
        for i, j in self.bonds():
            h[i, j] = h[j, i] = -self.t_hop
        return h


@lru_cache(maxsize=32)
def _string_tables(n_orbitals: int, n_electrons: int):
    lst = strings(n_orbitals, n_electrons)
    index = {s: i for i, s in enumerate(lst)}
    return string_excitation_table(lst, index, n_orbitals)


def excitation_operators(basis: SectorBasis) -> dict[tuple[int, int], sp.csr_matrix]:
    """Sparse spin-summed E_pq = a+_p a_q (both channels) on the sector.

    Keys are ``(p, q)``, i.e. the created orbital first.
    """
    na, nb = basis.n_alpha_strings, basis.n_beta_strings
    ta = _string_tables(basis.n_orbitals, basis.n_alpha)
    tb = _string_tables(basis.n_orbitals, basis.n_beta)
    cols_b = np.arange(nb)
    rows_a = np.arange(na)
    out = {}
    n = basis.n_orbitals
    for p in range(n):
        for q in range(n):
            # a+_p a_q : source string has q, target has p
            src_a, dst_a, sg_a = ta[(q, p)]
            src_b, dst_b, sg_b = tb[(q, p)]
            rows = np.concatenate([
                (dst_a[:, None] * nb + cols_b[None, :]).ravel(),
                (rows_a[:, None] * nb + dst_b[None, :]).ravel(),
            ])
            cols = np.concatenate([
                (src_a[:, None] * nb + cols_b[None, :]).ravel(),
                (rows_a[:, None] * nb + src_b[None, :]).ravel(),
            ])
            data = np.concatenate([
                np.repeat(sg_a, nb),
                np.tile(sg_b, na),
            ])
            out[(p, q)] = sp.csr_matrix((data, (rows, cols)), shape=(basis.size, basis.size))
    return out


def _finalise(m: sp.spmatrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m)
    m = 0.5 * (m + m.T)
    m = sp.csr_matrix(m)
    m.eliminate_zeros()
    m.sort_indices()
    return m


def integrals_operator(
    basis: SectorBasis, one_body: np.ndarray, two_body: np.ndarray, tol: float = 1e-15
) -> sp.csr_matrix:
    """Sparse matrix of a spin-free one- plus two-body operator on the sector."""
    n = basis.n_orbitals
    if one_body.shape != (n, n) or two_body.shape != (n, n, n, n):
        raise ValueError(
            f"integral shapes {one_body.shape}, {two_body.shape} do not match "
            f"{n} orbitals"
        )
    E = excitation_operators(basis)
    k = one_body - 0.5 * np.einsum("prrq->pq", two_body)
    dim = basis.size
    acc = sp.csr_matrix((dim, dim))
    for (p, q), e in E.items():
        if abs(k[p, q]) > tol:
            acc = acc + k[p, q] * e
    for (p, q), e_pq in E.items():
        if e_pq.nnz == 0:
            continue
        coeffs = two_body[p, q]
        nz = np.argwhere(np.abs(coeffs) > tol)
        if len(nz) == 0:
            continue
        mats = [coeffs[r, s] * E[(r, s)] for r, s in nz]
        g = sp.csr_matrix(sum(mats[1:], mats[0]))
        acc = acc + 0.5 * (e_pq @ g)
    return _finalise(acc)


def build_molecular_hamiltonian(data: FcidumpData, basis: SectorBasis, label: str = "") -> SectorHamiltonian:
    if data.n_orbitals != basis.n_orbitals:
        raise ValueError(
            f"basis has {basis.n_orbitals} orbitals, integrals have {data.n_orbitals}"
        )
    if basis.n_electrons != data.n_electrons or basis.n_alpha - basis.n_beta != data.ms2:
        raise ValueError(
            f"sector ({basis.n_alpha}, {basis.n_beta}) inconsistent with "
            f"NELEC={data.n_electrons}, MS2={data.ms2}"
        )
    mat = integrals_operator(basis, data.one_body, data.two_body)
    return SectorHamiltonian(basis, mat, float(data.core_energy), label)


def tight_binding_orbitals(spec: HubbardSpec) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and sign-fixed eigenvectors (columns) of the hopping matrix."""
    eps, c = np.linalg.eigh(spec.hopping_matrix())
    for k in range(c.shape[1]):
        col = c[:, k]
        j = int(np.argmax(np.round(np.abs(col), 10)))
        if col[j] < 0:
            c[:, k] = -col
    return eps, c


def hubbard_integrals(spec: HubbardSpec, orbitals: np.ndarray | None = None):
    """One- and two-body integrals of the Hubbard model.

    ``orbitals`` are site-by-orbital coefficients; ``None`` keeps the site basis.
    """
    n = spec.n_sites
    h = spec.hopping_matrix()
    g = np.zeros((n, n, n, n))
    for i in range(n):
        g[i, i, i, i] = spec.u_rep
    if orbitals is not None:
        h, g = transform_integrals(h, g, orbitals)
    return h, g


def transform_integrals(h: np.ndarray, g: np.ndarray, c: np.ndarray):
    h2 = c.T @ h @ c
    g2 = np.einsum("pqrs,pi,qj,rk,sl->ijkl", g, c, c, c, c, optimize=True)
    return 0.5 * (h2 + h2.T), g2


def build_hubbard_hamiltonian(
    spec: HubbardSpec,
    basis: SectorBasis,
    orbital_basis: Literal["tight-binding", "site"] = "tight-binding",
) -> SectorHamiltonian:
    """Hubbard Hamiltonian -t sum_<ij>,s (a+_is a_js + h.c.) + U sum_i n_iu n_id.

    With ``orbital_basis="tight-binding"`` the determinants are built from the
    eigenorbitals of the hopping matrix, so the closed-shell reference is the
    U = 0 ground state.
    """
    if spec.n_sites != basis.n_orbitals:
        raise ValueError(f"lattice has {spec.n_sites} sites, basis has {basis.n_orbitals} orbitals")
    orbitals = _orbitals_for(spec, orbital_basis)
    h, g = hubbard_integrals(spec, orbitals)
    mat = integrals_operator(basis, h, g)
    label = f"hubbard {spec.lx}x{spec.ly} U={spec.u_rep} t={spec.t_hop} {spec.boundary} {orbital_basis}"
    return SectorHamiltonian(basis, mat, 0.0, label)


def _orbitals_for(spec: HubbardSpec, orbital_basis: str):
    if orbital_basis == "site":
        return None
    if orbital_basis == "tight-binding":
        return tight_binding_orbitals(spec)[1]
    raise ValueError(f"unknown orbital basis {orbital_basis!r}")


# --- observables -----------------------------------------------------------


def _check_state(state: np.ndarray, dim: int) -> np.ndarray:
    state = np.asarray(state)
    if state.shape != (dim,):
        raise ValueError(f"state has shape {state.shape}, expected ({dim},)")
    return state


def expectation(observable, state: np.ndarray) -> float:
    """<psi|O|psi>, adding the core energy when ``observable`` is a Hamiltonian.

    ``observable`` may be a :class:`SectorHamiltonian`, a sparse or dense
    matrix, or ``None`` for the identity.
    """
    if observable is None:
        return float(np.dot(state, state))
    if isinstance(observable, SectorHamiltonian):
        state = _check_state(state, observable.dim)
        return float(state @ observable.matvec(state)) + observable.core_energy
    state = _check_state(state, observable.shape[0])
    return float(state @ (observable @ state))


def spin_raising(basis: SectorBasis) -> sp.csr_matrix:
    """S+ = sum_p a+_{p,a} a_{p,b} from (Na, Nb) to (Na+1, Nb-1), up to a global sign."""
    if basis.n_beta == 0 or basis.n_alpha == basis.n_orbitals:
        return sp.csr_matrix((0, basis.size))
    target = SectorBasis(basis.n_orbitals, basis.n_alpha + 1, basis.n_beta - 1)
    rows, cols, data = [], [], []
    for ia, sa in enumerate(basis.alpha_strings):
        for ib, sb in enumerate(basis.beta_strings):
            col = ia * basis.n_beta_strings + ib
            for p in range(basis.n_orbitals):
                bit = 1 << p
                if sa & bit or not sb & bit:
                    continue
                sign = (-1) ** (bin(sb & (bit - 1)).count("1") + bin(sa & (bit - 1)).count("1"))
                ja = target.alpha_index[sa | bit]
                jb = target.beta_index[sb ^ bit]
                rows.append(ja * target.n_beta_strings + jb)
                cols.append(col)
                data.append(float(sign))
    return sp.csr_matrix((data, (rows, cols)), shape=(target.size, basis.size))


@lru_cache(maxsize=16)
def _spin_raising_cached(key: tuple[int, int, int]) -> sp.csr_matrix:
    return spin_raising(SectorBasis(*key))


def s_squared_expectation(state: np.ndarray, basis: SectorBasis) -> float:
    """<S^2> = <S- S+> + Sz (Sz + 1) = |S+ psi|^2 + Sz (Sz + 1)."""
    state = _check_state(state, basis.size)
    sz = 0.5 * (basis.n_alpha - basis.n_beta)
    sp_psi = _spin_raising_cached(basis.key) @ state
    return float(sp_psi @ sp_psi) + sz * (sz + 1.0)


def s_squared_operator(basis: SectorBasis) -> sp.csr_matrix:
    splus = _spin_raising_cached(basis.key)
    sz = 0.5 * (basis.n_alpha - basis.n_beta)
    return sp.csr_matrix(splus.T @ splus + sz * (sz + 1.0) * sp.identity(basis.size))


def double_occupancy_operator(basis: SectorBasis, orbitals: np.ndarray | None = None) -> sp.csr_matrix:
    """(1/n) sum_i n_{i,up} n_{i,down} over sites, expressed in the basis orbitals."""
    n = basis.n_orbitals
    g = np.zeros((n, n, n, n))
    for i in range(n):
        g[i, i, i, i] = 1.0 / n
    h = np.zeros((n, n))
    if orbitals is not None:
        h, g = transform_integrals(h, g, orbitals)
    return integrals_operator(basis, h, g)


def double_occupancy(state: np.ndarray, basis: SectorBasis, orbitals: np.ndarray | None = None) -> float:
    """Site-averaged double occupancy.

    ``orbitals`` (site-by-orbital coefficients) is needed when the state is
    expressed in a rotated orbital basis, e.g. tight-binding orbitals.
    """
    state = _check_state(state, basis.size)
    if orbitals is None:
        occ_a, occ_b = basis.occupation_arrays()
        coeff = state.reshape(basis.n_alpha_strings, basis.n_beta_strings)
        # sum_i <n_ia n_ib> = sum_{IJ} |C_IJ|^2 occ_a[I] . occ_b[J]
        overlap = occ_a @ occ_b.T
        return float(np.sum(coeff * coeff * overlap)) / basis.n_orbitals
    return expectation(double_occupancy_operator(basis, orbitals), state)
