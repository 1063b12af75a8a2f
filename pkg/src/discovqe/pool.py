"""Spin-adapted generator pool and exact exponentials on sector states.

Two generator kinds, both labelled by spatial orbitals ``p < q``:

* ``single``: kappa_p^q + kappa_pbar^qbar, the same real orbital rotation in
  both spin channels;
* ``double``: kappa_{p pbar}^{q qbar}, moving an opposite-spin pair from p to q.

Each generator couples basis states in disjoint pairs (per channel for the
singles), so exp(t kappa) is a set of 2x2 rotations by angle t.  The two
channel parts of a single commute and are applied one after the other.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import _kernels
from .fock import SectorBasis, excite_string


class Kind(str, Enum):
    SINGLE = "single"
    DOUBLE = "double"


class OperatorId(NamedTuple):
    kind: Kind
    p: int
    q: int

    def __str__(self) -> str:
        return f"{self.kind.value} {self.p} {self.q}"

    @classmethod
    def parse(cls, kind: str, p, q) -> "OperatorId":
        op = cls(Kind(kind), int(p), int(q))
        if not 0 <= op.p < op.q:
            raise ValueError(f"operator {op} must have 0 <= p < q")
        return op


@dataclass(frozen=True)
class PairTables:
    """Flat coupled-pair tables for every pool operator on one sector basis."""

    I: np.ndarray
    J: np.ndarray
    S: np.ndarray
    stage_ptr: np.ndarray
    op_ptr: np.ndarray

    def args(self):
        return self.I, self.J, self.S, self.stage_ptr, self.op_ptr


@dataclass
class OperatorPool:
    n_orbitals: int
    operators: list[OperatorId]
    _index: dict = field(init=False, repr=False)
    _tables: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self._index = {op: k for k, op in enumerate(self.operators)}
        if len(self._index) != len(self.operators):
            raise ValueError("duplicate operators in pool")

    def __len__(self) -> int:
        return len(self.operators)

    def __iter__(self):
        return iter(self.operators)

    def __getitem__(self, k: int) -> OperatorId:
        return self.operators[k]

    def index(self, op: OperatorId) -> int:
        try:
            return self._index[op]
        except KeyError:
            raise IndexError(f"operator {op} not in pool") from None

    def indices(self, ops) -> np.ndarray:
        return np.array([self.index(op) for op in ops], dtype=np.int64)

    def fingerprint(self) -> str:
        """Short stable digest of the pool contents and order."""
        text = ";".join(str(op) for op in self.operators)
        return hashlib.sha256(f"{self.n_orbitals}|{text}".encode()).hexdigest()[:16]

    def tables(self, basis: SectorBasis) -> PairTables:
        if basis.n_orbitals != self.n_orbitals:
            raise ValueError(
                f"pool is for {self.n_orbitals} orbitals, basis has {basis.n_orbitals}"
            )
        key = basis.key
        if key not in self._tables:
            self._tables[key] = _build_tables(self, basis)
        return self._tables[key]


def build_pool(n_orbitals: int) -> OperatorPool:
    """All p < q singles, then all p < q paired doubles, each in (p, q) order."""
    if n_orbitals < 2:
        raise ValueError("pool needs at least two orbitals")
    pairs = [(p, q) for p in range(n_orbitals) for q in range(p + 1, n_orbitals)]
    ops = [OperatorId(Kind.SINGLE, p, q) for p, q in pairs]
    ops += [OperatorId(Kind.DOUBLE, p, q) for p, q in pairs]
    return OperatorPool(n_orbitals, ops)


def _channel_pairs(string_list, index, p, q):
    src, dst, sgn = [], [], []
    for i, s in enumerate(string_list):
        res = excite_string(s, p, q)
        if res is None or res[0] == s:
            continue
        src.append(i)
        dst.append(index[res[0]])
        sgn.append(res[1])
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(sgn, dtype=np.float64)


def _build_tables(pool: OperatorPool, basis: SectorBasis) -> PairTables:
    na, nb = basis.n_alpha_strings, basis.n_beta_strings
    ra = np.arange(na, dtype=np.int64)
    rb = np.arange(nb, dtype=np.int64)
    Is, Js, Ss = [], [], []
    stage_ptr = [0]
    op_ptr = [0]
    for op in pool.operators:
        a_src, a_dst, a_sgn = _channel_pairs(basis.alpha_strings, basis.alpha_index, op.p, op.q)
        b_src, b_dst, b_sgn = _channel_pairs(basis.beta_strings, basis.beta_index, op.p, op.q)
        if op.kind is Kind.SINGLE:
            stages = [
                ((a_src[:, None] * nb + rb).ravel(), (a_dst[:, None] * nb + rb).ravel(), np.repeat(a_sgn, nb)),
                ((ra[:, None] * nb + b_src).ravel(), (ra[:, None] * nb + b_dst).ravel(), np.tile(b_sgn, na)),
            ]
        else:
            stages = [(
                (a_src[:, None] * nb + b_src[None, :]).ravel(),
                (a_dst[:, None] * nb + b_dst[None, :]).ravel(),
                (a_sgn[:, None] * b_sgn[None, :]).ravel(),
            )]
        for i_, j_, s_ in stages:
            Is.append(i_)
            Js.append(j_)
            Ss.append(s_)
            stage_ptr.append(stage_ptr[-1] + len(i_))
        op_ptr.append(len(stage_ptr) - 1)
    return PairTables(
        I=_cat(Is, np.int64),
        J=_cat(Js, np.int64),
        S=_cat(Ss, np.float64),
        stage_ptr=np.asarray(stage_ptr, dtype=np.int64),
        op_ptr=np.asarray(op_ptr, dtype=np.int64),
    )


def _cat(xs, dtype) -> np.ndarray:
    if not xs:
        return np.zeros(0, dtype)
    return np.ascontiguousarray(np.concatenate(xs).astype(dtype))


def _check(state: np.ndarray, basis: SectorBasis) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (basis.size,):
        raise ValueError(f"state has shape {state.shape}, expected ({basis.size},)")
    return state


def apply_generator(op: OperatorId, state: np.ndarray, basis: SectorBasis, pool: OperatorPool) -> np.ndarray:
    """kappa |psi> (new array)."""
    state = _check(state, basis)
    tab = pool.tables(basis)
    out = np.zeros_like(state)
    _kernels.generator_into(out, np.ascontiguousarray(state), *tab.args(), pool.index(op))
    return out


def apply_exponential(
    op: OperatorId, amplitude: float, state: np.ndarray, basis: SectorBasis, pool: OperatorPool
) -> np.ndarray:
    """exp(t kappa) |psi> exactly (new array)."""
    state = _check(state, basis)
    if not np.isfinite(amplitude):
        raise ValueError(f"non-finite amplitude {amplitude}")
    out = np.array(state, copy=True)
    if amplitude == 0.0:
        return out
    tab = pool.tables(basis)
    _kernels.rotate_op(out, *tab.args(), pool.index(op), np.cos(amplitude), np.sin(amplitude))
    return out
