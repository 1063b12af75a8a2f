"""Additive CNOT estimates for unitary product state circuits.

Qubits follow the Jordan-Wigner layout of the Fock basis: all alpha spin
orbitals, then all beta.  A paired double costs a fixed number of CNOTs.
Each channel of a spin-adapted single pays a base cost plus a cost per
qubit on the parity string strictly between its two modes.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from .pool import Kind, OperatorId


class CostModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    paired_double_cnots: int = Field(13, ge=0)
    single_cnot_base: int = Field(2, ge=0)
    single_cnot_per_z: int = Field(2, ge=0)


def qubit_index(orbital: int, spin: int, n_orbitals: int) -> int:
    return orbital + spin * n_orbitals


def parity_string_length(p: int, q: int, n_orbitals: int, spin: int = 0) -> int:
    """Qubits strictly between the modes of orbitals p and q in one spin channel."""
    a = qubit_index(p, spin, n_orbitals)
    b = qubit_index(q, spin, n_orbitals)
    return abs(a - b) - 1


def operator_cnots(op: OperatorId, n_orbitals: int, model: CostModel | None = None) -> int:
    model = model or CostModel()
    if not 0 <= op.p < op.q < n_orbitals:
        raise ValueError(f"operator {op} outside {n_orbitals} orbitals")
    if op.kind is Kind.DOUBLE:
        return model.paired_double_cnots
    return sum(
        model.single_cnot_base + model.single_cnot_per_z * parity_string_length(op.p, op.q, n_orbitals, spin)
        for spin in (0, 1)
    )


def cnot_count(ansatz, n_orbitals: int, model: CostModel | None = None) -> int:
    """Total over the sequence; no cancellation between neighbouring operators."""
    model = model or CostModel()
    return sum(operator_cnots(op, n_orbitals, model) for op in ansatz.sequence)
