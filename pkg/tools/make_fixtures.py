"""Regenerate the FCIDUMP fixtures under tests/fixtures/ (needs pyscf).

pyscf is only used here, as external integral tooling; the package never
imports it.  RHF canonical orbitals are written in energy order with a fixed
sign convention (largest AO coefficient positive, first AO on ties) so that
integrals along a scan are consistent.  The manifest records the geometry
and pyscf's own singlet FCI energy as an independent cross-check.
"""

import json
import math
from pathlib import Path

import numpy as np
from pyscf import ao2mo, fci, gto, scf
from pyscf.tools import fcidump

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def linear_chain(n, r):
    return [("H", (0.0, 0.0, i * r)) for i in range(n)]


def tetrahedron(r):
    a = r / math.sqrt(2.0)
    pts = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]
    return [("H", tuple(0.5 * a * c for c in p)) for p in pts]


def water(r, angle=104.5):
    th = math.radians(angle / 2)
    return [
        ("O", (0.0, 0.0, 0.0)),
        ("H", (0.0, r * math.sin(th), r * math.cos(th))),
        ("H", (0.0, -r * math.sin(th), r * math.cos(th))),
    ]


def nitrogen(r):
    return [("N", (0.0, 0.0, 0.0)), ("N", (0.0, 0.0, r))]


def lih(r):
    return [("Li", (0.0, 0.0, 0.0)), ("H", (0.0, 0.0, r))]


def fix_signs(c):
    c = c.copy()
    for k in range(c.shape[1]):
        col = c[:, k]
        j = int(np.argmax(np.round(np.abs(col), 6)))
        if col[j] < 0:
            c[:, k] = -col
    return c


def make(name, atoms, frozen_for_fci=0):
    mol = gto.M(atom=atoms, basis="sto-3g", unit="angstrom", symmetry=False, verbose=0)
    mf = scf.RHF(mol)
    mf.conv_tol = 1e-12
    mf.max_cycle = 500
    e_hf = mf.kernel()
    if not mf.converged:
        mf = scf.newton(mf)
        e_hf = mf.kernel()
    c = fix_signs(mf.mo_coeff)
    n = c.shape[1]
    h1 = c.T @ mf.get_hcore() @ c
    eri = ao2mo.restore(1, ao2mo.kernel(mol, c), n)
    path = OUT / f"{name}.fcidump"
    fcidump.from_integrals(str(path), h1, eri, n, mol.nelectron, mol.energy_nuc(), ms=0, tol=1e-15)

    ncore = frozen_for_fci
    solver = fci.direct_spin0.FCI()
    solver.conv_tol = 1e-12
    solver.nroots = 4
    if ncore:
        from pyscf import mcscf

        cas = mcscf.CASCI(mf, n - ncore, mol.nelectron - 2 * ncore)
        cas.mo_coeff = c
        cas.fcisolver.conv_tol = 1e-12
        e_fci = float(cas.kernel(c)[0])
    else:
        es, vs = fci.direct_spin1.FCI().kernel(h1, eri, n, mol.nelectron, ecore=mol.energy_nuc(), nroots=6)
        e_fci = None
        for e, v in zip(es, vs):
            s2, _ = fci.spin_op.spin_square0(v, n, mol.nelectron)
            if abs(s2) < 1e-6:
                e_fci = float(e)
                break
    return {
        "file": path.name,
        "atoms": [[a, list(map(float, xyz))] for a, xyz in atoms],
        "basis": "sto-3g",
        "n_orbitals": n,
        "n_electrons": mol.nelectron,
        "e_rhf": float(e_hf),
        "e_fci_singlet_pyscf": e_fci,
        "frozen_for_fci": ncore,
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    manifest = {}

    def add(key, atoms, **kw):
        manifest[key] = make(key, atoms, **kw)
        print(key, manifest[key]["e_fci_singlet_pyscf"])

    add("h2_0.74", linear_chain(2, 0.74))
    add("lih_1.60", lih(1.60))
    for r in (0.60, 0.75, 0.90, 1.10, 1.30, 1.60, 2.00, 2.50):
        add(f"h4_linear_{r:.2f}", linear_chain(4, r))
    add("h4_tetrahedral_1.98", tetrahedron(1.98))
    for r in (0.75, 1.00, 1.50, 2.00, 2.50):
        add(f"h6_linear_{r:.2f}", linear_chain(6, r))
    for r in (0.96, 1.50, 2.00):
        add(f"h2o_{r:.2f}", water(r))
    for r in (1.10, 1.60, 2.20):
        add(f"n2_{r:.2f}", nitrogen(r), frozen_for_fci=4)
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
