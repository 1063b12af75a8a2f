"""Determinants and fixed-(N_alpha, N_beta) sector bases.

Spin orbitals are ordered with every alpha orbital (ascending spatial index)
before every beta orbital.  A determinant is stored as two occupation
bitmasks and corresponds to

    a+_{a1} a+_{a2} ... a+_{b1} a+_{b2} ... |vac>

with the alpha creators (ascending) to the left of the beta creators
(ascending).  Under this convention an excitation a+_q a_p that stays inside
one spin channel only picks up the parity of the occupied orbitals of that
channel lying strictly between p and q.
"""

from __future__ import annotations

from itertools import combinations
from math import comb
from typing import NamedTuple

import numpy as np

MAX_ORBITALS = 64

ALPHA = 0
BETA = 1


class Determinant(NamedTuple):
    alpha: int
    beta: int


def _popcount(x: int) -> int:
    return bin(x).count("1")


def occupied(string: int) -> list[int]:
    """Indices of the set bits of an occupation string, ascending."""
    out = []
    k = 0
    while string:
        if string & 1:
            out.append(k)
        string >>= 1
        k += 1
    return out


def strings(n_orbitals: int, n_electrons: int) -> list[int]:
    """All occupation strings with ``n_electrons`` bits set, ascending as integers."""
    out = [sum(1 << k for k in occ) for occ in combinations(range(n_orbitals), n_electrons)]
    out.sort()
    return out


def excitation_sign(string: int, p: int, q: int) -> int:
    """Sign of a+_q a_p acting on ``string`` (assumes the excitation is allowed)."""
    lo, hi = (p, q) if p < q else (q, p)
    between = string & ((1 << hi) - 1) & ~((1 << (lo + 1)) - 1)
    return -1 if _popcount(between) & 1 else 1


def excite_string(string: int, p: int, q: int) -> tuple[int, int] | None:
    """Apply a+_q a_p to a single-channel string.

    Returns ``(new_string, sign)`` or ``None`` when the result vanishes.
    """
    if not (string >> p) & 1:
        return None
    if p == q:
        return string, 1
    if (string >> q) & 1:
        return None
    return (string ^ (1 << p)) | (1 << q), excitation_sign(string, p, q)


def apply_single_excitation(det: Determinant, p: int, q: int, spin: int):
    """a+_q a_p within one spin channel.

    Returns ``(Determinant, phase)`` or ``None`` if annihilated.
    """
    _check_orbital(p)
    _check_orbital(q)
    if spin == ALPHA:
        res = excite_string(det.alpha, p, q)
        if res is None:
            return None
        return Determinant(res[0], det.beta), res[1]
    if spin == BETA:
        res = excite_string(det.beta, p, q)
        if res is None:
            return None
        return Determinant(det.alpha, res[0]), res[1]
    raise ValueError(f"spin must be ALPHA (0) or BETA (1), got {spin!r}")


def apply_pair_excitation(det: Determinant, p: int, q: int):
    """a+_q a+_qbar a_pbar a_p, moving the (p, pbar) pair onto (q, qbar).

    With alpha-before-beta ordering the operator factorises into
    (a+_q a_p)_alpha (a+_q a_p)_beta, so the phase is the product of the two
    same-channel signs.
    """
    _check_orbital(p)
    _check_orbital(q)
    if p == q:
        raise ValueError("pair excitation requires p != q")
    ra = excite_string(det.alpha, p, q)
    if ra is None:
        return None
    rb = excite_string(det.beta, p, q)
    if rb is None:
        return None
    return Determinant(ra[0], rb[0]), ra[1] * rb[1]


def _check_orbital(p: int) -> None:
    if not 0 <= p < MAX_ORBITALS:
        raise IndexError(f"orbital index {p} out of range")


class SectorBasis:
    """Determinants with fixed alpha and beta electron counts.

    Determinants are ordered lexicographically on ``(alpha, beta)`` read as
    unsigned integers, so the state vector reshapes row-major into an
    ``(n_alpha_strings, n_beta_strings)`` coefficient matrix.
    """

    def __init__(self, n_orbitals: int, n_alpha: int, n_beta: int):
        if not 0 < n_orbitals <= MAX_ORBITALS:
            raise ValueError(f"n_orbitals must be in 1..{MAX_ORBITALS}, got {n_orbitals}")
        if not (0 <= n_alpha <= n_orbitals and 0 <= n_beta <= n_orbitals):
            raise ValueError(
                f"electron counts ({n_alpha}, {n_beta}) exceed {n_orbitals} orbitals"
            )
        self.n_orbitals = n_orbitals
        self.n_alpha = n_alpha
        self.n_beta = n_beta
        self.alpha_strings = strings(n_orbitals, n_alpha)
        self.beta_strings = strings(n_orbitals, n_beta)
        self.alpha_index = {s: i for i, s in enumerate(self.alpha_strings)}
        self.beta_index = {s: i for i, s in enumerate(self.beta_strings)}
        self.n_alpha_strings = len(self.alpha_strings)
        self.n_beta_strings = len(self.beta_strings)
        self._determinants: list[Determinant] | None = None

    @property
    def size(self) -> int:
        return self.n_alpha_strings * self.n_beta_strings

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return (
            f"SectorBasis(n_orbitals={self.n_orbitals}, n_alpha={self.n_alpha}, "
            f"n_beta={self.n_beta}, size={self.size})"
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SectorBasis):
            return NotImplemented
        return self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.n_orbitals, self.n_alpha, self.n_beta)

    @property
    def n_electrons(self) -> int:
        return self.n_alpha + self.n_beta

    @property
    def determinants(self) -> list[Determinant]:
        if self._determinants is None:
            self._determinants = [
                Determinant(a, b) for a in self.alpha_strings for b in self.beta_strings
            ]
        return self._determinants

    def index(self, det: Determinant) -> int:
        """Position of ``det``; raises ``KeyError`` if it is not in the sector."""
        return self.alpha_index[det.alpha] * self.n_beta_strings + self.beta_index[det.beta]

    def __getitem__(self, i: int) -> Determinant:
        ia, ib = divmod(i, self.n_beta_strings)
        return Determinant(self.alpha_strings[ia], self.beta_strings[ib])

    def __contains__(self, det) -> bool:
        return det.alpha in self.alpha_index and det.beta in self.beta_index

    def unit_vector(self, i: int) -> np.ndarray:
        v = np.zeros(self.size)
        v[i] = 1.0
        return v

    def closed_shell_reference(self) -> int:
        """Index of the determinant filling the lowest-index orbitals.

        For a closed-shell sector this doubly occupies orbitals
        ``0..n_alpha-1``; open-shell sectors put the extra electrons in the
        next orbitals of the majority channel.
        """
        a = (1 << self.n_alpha) - 1
        b = (1 << self.n_beta) - 1
        return self.index(Determinant(a, b))

    def occupation_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-string occupation tables, shape ``(n_strings, n_orbitals)``, as 0/1 floats."""
        n = self.n_orbitals
        occ_a = np.array([[(s >> k) & 1 for k in range(n)] for s in self.alpha_strings], dtype=float)
        occ_b = np.array([[(s >> k) & 1 for k in range(n)] for s in self.beta_strings], dtype=float)
        return occ_a.reshape(-1, n), occ_b.reshape(-1, n)


def build_sector_basis(n_orbitals: int, n_alpha: int, n_beta: int) -> SectorBasis:
    basis = SectorBasis(n_orbitals, n_alpha, n_beta)
    assert basis.size == comb(n_orbitals, n_alpha) * comb(n_orbitals, n_beta)
    return basis


def string_excitation_table(
    string_list: list[int], index: dict[int, int], n_orbitals: int
) -> dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """For every ``(p, q)``: source rows, target rows and signs of a+_q a_p.

    Diagonal ``p == q`` entries are the number operator.
    """
    table = {}
    for p in range(n_orbitals):
        for q in range(n_orbitals):
            src, dst, sgn = [], [], []
            for i, s in enumerate(string_list):
                res = excite_string(s, p, q)
                if res is None:
                    continue
                src.append(i)
                dst.append(index[res[0]])
                sgn.append(res[1])
            table[(p, q)] = (
                np.asarray(src, dtype=np.int64),
                np.asarray(dst, dtype=np.int64),
                np.asarray(sgn, dtype=np.float64),
            )
    return table
