"""Exact reference calculations used to check the simulator.

Nothing here shares code paths with the sparse sector machinery: Fock-space
operators are built from Kronecker products of 2x2 matrices, matrix
exponentials use a plain Taylor series with scaling and squaring.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .fock import SectorBasis
from .hamiltonians import SectorHamiltonian, s_squared_operator

log = logging.getLogger(__name__)

DENSE_CAP = 6000
AUTO_DENSE_LIMIT = 1500  # above this "auto" prefers Davidson even when dense would fit
ITERATIVE_CAP = 2_000_000


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    ground_vector: np.ndarray
    method: str
    residual_norm: float
    degenerate: bool = False
    s_squared: float | None = None

    @property
    def energy(self) -> float:
        return float(self.eigenvalues[0])


# --- Fock space via Jordan-Wigner ------------------------------------------

_Z = np.diag([1.0, -1.0])
_I2 = np.eye(2)
_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]])  # |1> -> |0>


@lru_cache(maxsize=8)
def fock_annihilators(n_orbitals: int) -> tuple[sp.csr_matrix, ...]:
    """a_k on the 4^n Fock space for modes k = 0..2n-1 (alpha first, then beta).

    Bit k of the basis-state integer is the occupation of mode k; the first
    Kronecker factor is the most significant mode.
    """
    n_modes = 2 * n_orbitals
    if n_modes > 12:
        raise ValueError("Fock-space oracle limited to 6 spatial orbitals")
    out = []
    for k in range(n_modes):
        factors = []
        for j in reversed(range(n_modes)):
            if j < k:
                factors.append(_Z)
            elif j == k:
                factors.append(_LOWER)
            else:
                factors.append(_I2)
        mat = reduce(lambda a, b: sp.kron(a, b, format="csr"), factors)
        out.append(sp.csr_matrix(mat))
    return tuple(out)


def fock_hamiltonian(one_body: np.ndarray, two_body: np.ndarray, core: float = 0.0) -> sp.csr_matrix:
    """sum h_pq a+_ps a_qs + 1/2 sum (pq|rs) a+_ps a+_rt a_st a_qs, literally."""
    n = one_body.shape[0]
    a = fock_annihilators(n)
    ad = [m.T.tocsr() for m in a]
    dim = 4**n
    H = sp.csr_matrix((dim, dim))
    spins = (0, n)
    for p in range(n):
        for q in range(n):
            if one_body[p, q] == 0.0:
                continue
            for s in spins:
                H = H + one_body[p, q] * (ad[p + s] @ a[q + s])
    for p in range(n):
        for q in range(n):
            for r in range(n):
                for s_ in range(n):
                    v = two_body[p, q, r, s_]
                    if v == 0.0:
                        continue
                    for s in spins:
                        for t in spins:
                            H = H + 0.5 * v * (ad[p + s] @ ad[r + t] @ a[s_ + t] @ a[q + s])
    if core:
        H = H + core * sp.identity(dim, format="csr")
    return sp.csr_matrix(H)


def sector_indices(basis: SectorBasis) -> np.ndarray:
    """Fock-space integer of every sector determinant, in sector order."""
    n = basis.n_orbitals
    return np.array([d.alpha | (d.beta << n) for d in basis.determinants], dtype=np.int64)


def restrict_to_sector(fock_matrix, basis: SectorBasis) -> np.ndarray:
    idx = sector_indices(basis)
    m = fock_matrix[idx][:, idx]
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def fock_generator(kind: str, p: int, q: int, n_orbitals: int) -> sp.csr_matrix:
    """kappa for a spin-adapted single (``"single"``) or paired double (``"double"``)."""
    a = fock_annihilators(n_orbitals)
    ad = [m.T.tocsr() for m in a]
    n = n_orbitals
    if kind == "single":
        x = ad[q] @ a[p] + ad[q + n] @ a[p + n]
    elif kind == "double":
        x = ad[q] @ ad[q + n] @ a[p + n] @ a[p]
    else:
        raise ValueError(kind)
    return sp.csr_matrix(x - x.T)


def fock_spin_operators(n_orbitals: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(S^2, S_z) on the Fock space."""
    a = fock_annihilators(n_orbitals)
    ad = [m.T.tocsr() for m in a]
    n = n_orbitals
    dim = 4**n
    sz = sp.csr_matrix((dim, dim))
    splus = sp.csr_matrix((dim, dim))
    for p in range(n):
        sz = sz + 0.5 * (ad[p] @ a[p] - ad[p + n] @ a[p + n])
        splus = splus + ad[p] @ a[p + n]
    sminus = splus.T.tocsr()
    s2 = sminus @ splus + sz @ sz + sz
    return sp.csr_matrix(s2), sp.csr_matrix(sz)


# --- dense helpers -----------------------------------------------------------


def dense_operator_matrix(op, basis: SectorBasis, pool=None, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense matrix of ``op`` built column by column from its sparse action.

    ``op`` may be a :class:`SectorHamiltonian` (core energy excluded), an
    operator id (``pool`` required), a sparse matrix, or a callable on vectors.
    """
    dim = basis.size
    if dim > cap:
        raise ValueError(f"dimension {dim} exceeds dense cap {cap}")
    if isinstance(op, SectorHamiltonian):
        action = op.matvec
    elif sp.issparse(op):
        action = op.__matmul__
    elif callable(op):
        action = op
    else:
        if pool is None:
            raise ValueError("pool needed to apply an operator id")
        from .pool import apply_generator

        def action(v):
            return apply_generator(op, v, basis, pool)

    out = np.empty((dim, dim))
    e = np.zeros(dim)
    for j in range(dim):
        e[j] = 1.0
        out[:, j] = action(e)
        e[j] = 0.0
    return out


def dense_expm_apply(matrix: np.ndarray, t: float, vector: np.ndarray, cap: int = DENSE_CAP) -> np.ndarray:
    """exp(t A) v by scaling and squaring a truncated Taylor series of exp(t A / 2^s)."""
    a = np.asarray(matrix, dtype=float)
    if a.shape[0] > cap:
        raise ValueError(f"dimension {a.shape[0]} exceeds dense cap {cap}")
    if t == 0.0:
        return np.array(vector, dtype=float, copy=True)
    x = t * a
    norm = np.linalg.norm(x, 1)
    s = max(0, int(np.ceil(np.log2(norm / 0.25)))) if norm > 0 else 0
    x = x / 2.0**s
    term = np.eye(a.shape[0])
    result = term.copy()
    for k in range(1, 40):
        term = term @ x / k
        result = result + term
        if np.linalg.norm(term, 1) < 1e-17 * np.linalg.norm(result, 1):
            break
    for _ in range(s):
        result = result @ result
    return result @ vector


# --- ground states -------------------------------------------------------------


def davidson(
    matvec,
    diagonal: np.ndarray,
    n_roots: int = 1,
    tol: float = 1e-10,
    max_iter: int = 1000,
    max_subspace: int = 80,
    guess: np.ndarray | None = None,
):
    """Lowest eigenpairs of a real symmetric operator, diagonal preconditioning.

    Returns ``(eigenvalues, vectors, residual_norms)``; raises
    :class:`ConvergenceError` if the residuals do not reach ``tol``.
    """
    dim = diagonal.shape[0]
    n_guess = min(dim, max(2 * n_roots, n_roots + 2))
    order = np.argsort(diagonal, kind="stable")
    V = np.zeros((dim, n_guess))
    for k in range(n_guess):
        V[order[k], k] = 1.0
    if guess is not None:
        V[:, 0] = guess / np.linalg.norm(guess)
    V, _ = np.linalg.qr(V)
    AV = np.column_stack([matvec(V[:, k]) for k in range(V.shape[1])])
    res = np.full(n_roots, np.inf)
    for _ in range(max_iter):
        T = V.T @ AV
        T = 0.5 * (T + T.T)
        theta_all, s_all = np.linalg.eigh(T)
        theta, s = theta_all[:n_roots], s_all[:, :n_roots]
        X = V @ s
        R = AV @ s - X * theta
        res = np.linalg.norm(R, axis=0)
        if np.all(res <= tol * np.maximum(1.0, np.abs(theta))):
            return theta, X, res
        new = []
        for k in range(n_roots):
            if res[k] <= tol * max(1.0, abs(theta[k])):
                continue
            denom = theta[k] - diagonal
            denom[np.abs(denom) < 1e-8] = 1e-8
            new.append(R[:, k] / denom)
        if V.shape[1] + len(new) > max_subspace:
            # thick restart: keep a few Ritz vectors beyond the wanted roots
            keep = min(V.shape[1], 3 * n_roots)
            V, _ = np.linalg.qr(V @ s_all[:, :keep])
            AV = np.column_stack([matvec(V[:, k]) for k in range(V.shape[1])])
        for w in new:
            for _pass in range(2):
                w = w - V @ (V.T @ w)
            nw = np.linalg.norm(w)
            if nw < 1e-12:
                continue
            w = w / nw
            V = np.column_stack([V, w])
            AV = np.column_stack([AV, matvec(w)])
    raise ConvergenceError("Davidson did not converge", float(np.max(res)))


def fci_ground_state(
    H: SectorHamiltonian,
    target_s2: float | None = None,
    method: str = "auto",
    dense_cap: int = DENSE_CAP,
    iterative_cap: int = ITERATIVE_CAP,
    n_roots: int = 6,
    degeneracy_tol: float = 1e-8,
    auto_dense_limit: int = AUTO_DENSE_LIMIT,
) -> SpectrumResult:
    """Exact lowest state of ``H`` (energies include the core energy).

    With ``target_s2`` the lowest eigenvector whose <S^2> matches is returned
    instead, e.g. ``0.0`` for the lowest singlet.  The iterative path only
    searches the ``n_roots`` lowest roots for it.
    """
    dim = H.dim
    if method == "auto":
        method = "dense" if dim <= min(dense_cap, auto_dense_limit) else "iterative"
    if method == "dense":
        if dim > dense_cap:
            raise ValueError(f"dimension {dim} exceeds dense cap {dense_cap}")
        A = H.matrix.toarray()
        if target_s2 is None:
            w, v = scipy.linalg.eigh(A, subset_by_index=[0, min(1, dim - 1)])
        else:
            w, v = scipy.linalg.eigh(A)
    elif method == "iterative":
        if dim > iterative_cap:
            raise ValueError(f"dimension {dim} exceeds iterative cap {iterative_cap}")
        k = min(dim, 2 if target_s2 is None else n_roots)
        w, v, _ = davidson(H.matvec, H.diagonal(), n_roots=k)
    else:
        raise ValueError(f"unknown method {method!r}")

    pick = 0
    s2_vals = None
    if target_s2 is not None:
        S2 = s_squared_operator(H.basis)
        s2_vals = np.array([v[:, k] @ (S2 @ v[:, k]) for k in range(v.shape[1])])
        hits = np.flatnonzero(np.abs(s2_vals - target_s2) < 1e-6)
        if len(hits) == 0:
            raise ValueError(f"no eigenvector with <S^2> = {target_s2} among {v.shape[1]} roots")
        pick = int(hits[0])
    vec = v[:, pick].copy()
    e = w[pick]
    resid = float(np.linalg.norm(H.matvec(vec) - e * vec))
    if resid > 1e-9 * max(1.0, abs(e)):
        raise ConvergenceError("ground state residual too large", resid)
    rest = np.delete(w, pick)
    above = rest[rest >= e - degeneracy_tol]
    degenerate = bool(len(above) and above.min() - e < degeneracy_tol)
    if degenerate:
        log.info("ground state of %s is degenerate", H.label or "H")
    others = np.sort(rest[rest > e]) if len(rest) else rest
    eigenvalues = np.concatenate([[e], others]) + H.core_energy
    return SpectrumResult(
        eigenvalues=eigenvalues,
        ground_vector=vec,
        method=method,
        residual_norm=resid,
        degenerate=degenerate,
        s_squared=None if s2_vals is None else float(s2_vals[pick]),
    )
