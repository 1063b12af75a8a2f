"""Unitary product states: |Psi> = exp(t_M k_M) ... exp(t_1 k_1) |Phi_0>.

The first element of ``sequence`` acts first on the reference determinant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .hamiltonians import SectorHamiltonian
from .pool import OperatorId, OperatorPool


@dataclass
class Ansatz:
    sequence: list[OperatorId]
    amplitudes: np.ndarray
    reference: int = 0

    def __post_init__(self):
        self.sequence = list(self.sequence)
        self.amplitudes = np.array(self.amplitudes, dtype=np.float64).reshape(-1)
        if len(self.sequence) != len(self.amplitudes):
            raise ValueError(
                f"{len(self.sequence)} operators but {len(self.amplitudes)} amplitudes"
            )

    def __len__(self) -> int:
        return len(self.sequence)

    def copy(self) -> "Ansatz":
        return Ansatz(list(self.sequence), self.amplitudes.copy(), self.reference)

    def with_amplitudes(self, amplitudes) -> "Ansatz":
        return Ansatz(list(self.sequence), np.array(amplitudes, dtype=np.float64), self.reference)


@dataclass
class Evaluator:
    """Energy and gradient of ansatz sequences for one Hamiltonian and pool.

    Sequences are handled as arrays of pool indices.  ``n_evals`` counts
    energy(+gradient) evaluations.
    """

    hamiltonian: SectorHamiltonian
    pool: OperatorPool
    n_evals: int = field(default=0, init=False)

    def __post_init__(self):
        self.basis = self.hamiltonian.basis
        self.tables = self.pool.tables(self.basis)
        self._args = self.tables.args()
        m = self.hamiltonian.matrix
        self._csr = (
            m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(np.float64),
            float(self.hamiltonian.core_energy),
        )

    def state(self, seq: np.ndarray, amps: np.ndarray, reference: int) -> np.ndarray:
        psi = np.zeros(self.basis.size)
        psi[reference] = 1.0
        _kernels.product_state(psi, *self._args, seq, amps)
        return psi

    def energy(self, seq, amps, reference) -> float:
        self.n_evals += 1
        psi = self.state(seq, amps, reference)
        return float(psi @ self.hamiltonian.matvec(psi)) + self.hamiltonian.core_energy

    def energy_and_gradient(self, seq, amps, reference) -> tuple[float, np.ndarray]:
        self.n_evals += 1
        psi = self.state(seq, amps, reference)
        sigma = self.hamiltonian.matvec(psi)
        e = float(psi @ sigma) + self.hamiltonian.core_energy
        grad = np.empty(len(seq))
        _kernels.reverse_gradient(psi, sigma, *self._args, seq, amps, grad)
        return e, grad

    def relax(self, seq, amps, reference, gtol, max_iterations, max_step=1.0):
        """Compiled BFGS relaxation of the amplitudes.

        Returns ``(amplitudes, energy, gradient, converged, iterations)``.
        """
        seq = np.ascontiguousarray(seq, dtype=np.int64)
        x0 = np.array(amps, dtype=np.float64)
        x, f, g, ok, it, ne = _kernels.relax_bfgs(
            x0, float(gtol), int(max_iterations), float(max_step), *self._csr, int(reference),
            *self._args, seq,
        )
        self.n_evals += int(ne)
        return x, float(f), g, bool(ok), int(it)

    def selection_gradients(self, psi: np.ndarray) -> np.ndarray:
        """dE/dt at t = 0 for appending each pool operator after ``psi``."""
        sigma = self.hamiltonian.matvec(psi)
        out = np.empty(len(self.pool))
        _kernels.selection_gradients(sigma, psi, *self._args, out)
        return out

    def indices(self, ansatz: Ansatz) -> np.ndarray:
        return self.pool.indices(ansatz.sequence)


def _evaluator(H: SectorHamiltonian, pool: OperatorPool) -> Evaluator:
    return Evaluator(H, pool)


def _validate(ansatz: Ansatz, basis, pool: OperatorPool) -> np.ndarray:
    if not 0 <= ansatz.reference < basis.size:
        raise IndexError(f"reference index {ansatz.reference} outside basis of size {basis.size}")
    for op in ansatz.sequence:
        if not 0 <= op.p < op.q < pool.n_orbitals:
            raise IndexError(f"operator {op} outside {pool.n_orbitals} orbitals")
    if not np.all(np.isfinite(ansatz.amplitudes)):
        raise ValueError("non-finite amplitude")
    return pool.indices(ansatz.sequence)


def evaluate_state(ansatz: Ansatz, basis, pool: OperatorPool) -> np.ndarray:
    seq = _validate(ansatz, basis, pool)
    tab = pool.tables(basis)
    psi = np.zeros(basis.size)
    psi[ansatz.reference] = 1.0
    _kernels.product_state(psi, *tab.args(), seq, ansatz.amplitudes)
    return psi


def energy(ansatz: Ansatz, H: SectorHamiltonian, pool: OperatorPool) -> float:
    seq = _validate(ansatz, H.basis, pool)
    return _evaluator(H, pool).energy(seq, ansatz.amplitudes, ansatz.reference)


def gradient(ansatz: Ansatz, H: SectorHamiltonian, pool: OperatorPool) -> np.ndarray:
    seq = _validate(ansatz, H.basis, pool)
    return _evaluator(H, pool).energy_and_gradient(seq, ansatz.amplitudes, ansatz.reference)[1]


def energy_and_gradient(ansatz: Ansatz, H: SectorHamiltonian, pool: OperatorPool):
    seq = _validate(ansatz, H.basis, pool)
    return _evaluator(H, pool).energy_and_gradient(seq, ansatz.amplitudes, ansatz.reference)


# --- text serialisation --------------------------------------------------------


def dumps(ansatz: Ansatz, pool: OperatorPool) -> str:
    """One ``kind p q amplitude`` line per operator after a two-line header.

    Amplitudes are written as hexadecimal floats, so reading back is exact.
    """
    lines = [
        f"# ups-ansatz pool={pool.fingerprint()} n_orbitals={pool.n_orbitals}",
        f"reference {ansatz.reference}",
    ]
    for op, t in zip(ansatz.sequence, ansatz.amplitudes):
        lines.append(f"{op.kind.value} {op.p} {op.q} {float(t).hex()}")
    return "\n".join(lines) + "\n"


def loads(text: str, pool: OperatorPool | None = None) -> Ansatz:
    """Inverse of :func:`dumps`.  Decimal amplitudes are accepted too.

    When ``pool`` is given its fingerprint must match the header.
    """
    seq, amps = [], []
    reference = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = dict(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
            if pool is not None and "pool" in fields and fields["pool"] != pool.fingerprint():
                raise ValueError(
                    f"ansatz was written for pool {fields['pool']}, got {pool.fingerprint()}"
                )
            continue
        toks = line.split()
        if toks[0] == "reference":
            reference = int(toks[1])
            continue
        if len(toks) != 4:
            raise ValueError(f"line {lineno}: expected 'kind p q amplitude', got {line!r}")
        seq.append(OperatorId.parse(toks[0], toks[1], toks[2]))
        tok = toks[3]
        amps.append(float.fromhex(tok) if "0x" in tok.lower() else float(tok))
    if reference is None:
        raise ValueError("ansatz text has no reference line")
    return Ansatz(seq, np.array(amps), reference)
