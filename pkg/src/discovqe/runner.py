"""Batch jobs: build the system, run one method, write results.

A run directory holds ``summary.json`` (the resolved configuration, seed,
energies and diagnostics), ``ansatz.txt`` and ``records.jsonl`` (one JSON
object per accepted optimiser move, appended as the search progresses).
A scan writes one run directory per point plus ``scan.csv`` and
``scan.json``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ansatz as ups
from .config import ConfigError, RunConfig, as_dict, set_path, validate
from .cost import cnot_count
from .fcidump import freeze_core, read_fcidump
from .fock import SectorBasis, build_sector_basis
from .hamiltonians import (
    SectorHamiltonian,
    _orbitals_for,
    build_hubbard_hamiltonian,
    build_molecular_hamiltonian,
    double_occupancy,
    s_squared_expectation,
)
from .oracle import fci_ground_state
from .optimize import adapt_vqe, disco_vqe, local_minimize
from .pool import OperatorPool, build_pool

log = logging.getLogger(__name__)

SCAN_COLUMNS = [
    "point", "parameter", "value", "method", "energy", "fci_energy", "error",
    "s_squared", "double_occupancy", "n_operators", "cnot_count", "certified",
    "status", "seconds", "directory", "message",
]


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


@dataclass
class System:
    hamiltonian: SectorHamiltonian
    pool: OperatorPool
    orbitals: np.ndarray | None  # site-by-orbital coefficients for Hubbard systems
    boundary: str | None
    source_digest: str

    @property
    def basis(self) -> SectorBasis:
        return self.hamiltonian.basis


def build_system(config: RunConfig) -> System:
    sysc = config.system
    if sysc.hubbard is not None:
        spec = sysc.hubbard
        n = spec.n_sites
        if config.sector is None:
            if n % 2:
                raise ConfigError("half filling needs an even number of sites; give 'sector' explicitly")
            na = nb = n // 2
        else:
            na, nb = config.sector.n_alpha, config.sector.n_beta
        basis = build_sector_basis(n, na, nb)
        H = build_hubbard_hamiltonian(spec, basis, sysc.orbital_basis)
        digest = hashlib.sha256(spec.model_dump_json().encode() + sysc.orbital_basis.encode()).hexdigest()
        return System(H, build_pool(n), _orbitals_for(spec, sysc.orbital_basis), spec.boundary, digest)

    raw = sysc.fcidump.read_bytes()
    data = read_fcidump(sysc.fcidump)
    if sysc.frozen:
        data = freeze_core(data, sysc.frozen)
    if config.sector is None:
        na, nb = data.n_alpha, data.n_beta
    else:
        na, nb = config.sector.n_alpha, config.sector.n_beta
    basis = build_sector_basis(data.n_orbitals, na, nb)
    H = build_molecular_hamiltonian(data, basis, label=sysc.fcidump.name)
    digest = hashlib.sha256(raw + f"|frozen={sysc.frozen}".encode()).hexdigest()
    return System(H, build_pool(data.n_orbitals), None, None, digest)


def reference_s_squared(system: System) -> float:
    basis = system.basis
    return s_squared_expectation(basis.unit_vector(basis.closed_shell_reference()), basis)


def fci_reference(config: RunConfig, system: System) -> dict:
    """Lowest sector eigenvalue with the reference's spin, cached next to an FCIDUMP."""
    target = reference_s_squared(system)
    basis = system.basis
    cache = None
    if config.system.fcidump is not None:
        key = hashlib.sha256(f"{system.source_digest}|{basis.key}|{target:.6f}".encode()).hexdigest()[:16]
        cache = config.system.fcidump.with_name(f"{config.system.fcidump.name}.fci-{key}.json")
        if cache.is_file():
            try:
                return json.loads(cache.read_text())
            except (OSError, json.JSONDecodeError):
                pass
    res = fci_ground_state(system.hamiltonian, target_s2=target)
    out = {
        "energy": res.energy,
        "method": res.method,
        "residual_norm": res.residual_norm,
        "degenerate": bool(res.degenerate),
        "target_s_squared": target,
    }
    if system.orbitals is not None or config.system.hubbard is not None:
        out["double_occupancy"] = double_occupancy(res.ground_vector, basis, system.orbitals)
    if cache is not None:
        try:
            atomic_write(cache, json.dumps(out, indent=2) + "\n")
        except OSError as exc:
            log.warning("could not cache FCI reference at %s: %s", cache, exc)
    return out


class _RecordSink:
    """Append-only JSONL stream, flushed per record."""

    def __init__(self, path: Path | None):
        self.records: list[dict] = []
        self._fh = None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w")

    def __call__(self, rec: dict) -> None:
        self.records.append(rec)
        if self._fh is not None:
            self._fh.write(json.dumps(rec, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def run(config: RunConfig, output: Path | None = None, initial: ups.Ansatz | None = None, write: bool = True) -> dict:
    """Execute one job and return its summary (also written to disk when ``write``)."""
    config.check_inputs()
    outdir = Path(output if output is not None else config.output)
    t0 = time.monotonic()
    system = build_system(config)
    H, pool, basis = system.hamiltonian, system.pool, system.basis
    reference = basis.closed_shell_reference()

    replay_ansatz = None
    if config.method == "replay":
        replay_ansatz = ups.loads(config.replay.ansatz.read_text(), pool)
        if initial is not None:
            replay_ansatz = replay_ansatz.with_amplitudes(initial.amplitudes)
    sink = _RecordSink(outdir / "records.jsonl" if write else None)

    summary: dict = {
        "method": config.method,
        "system": H.label,
        "sector": {"n_orbitals": basis.n_orbitals, "n_alpha": basis.n_alpha, "n_beta": basis.n_beta, "dimension": basis.size},
        "boundary": system.boundary,
        "pool": {"size": len(pool), "fingerprint": pool.fingerprint()},
        "seed": config.optimizer.rng_seed,
        "restarts": config.optimizer.restarts,
        "cost_model": config.cost_model.model_dump(),
        "config": as_dict(config),
    }
    result_ansatz = None
    try:
        if config.method == "fci":
            pass
        elif config.method == "disco":
            bm = disco_vqe(H, pool, config.optimizer, reference=reference, on_record=sink, initial=initial)
            result_ansatz = bm.ansatz
            summary.update(
                energy=bm.energy,
                certified=bm.certified,
                grad_max=bm.grad_max,
                exhausted=bm.exhausted,
                restart_energies=bm.restart_energies,
                counters=dict(bm.counters),
            )
        elif config.method == "adapt":
            ar = adapt_vqe(
                H, pool, config.adapt.max_operators, config.adapt.selection_tolerance,
                config.optimizer, reference=reference,
            )
            result_ansatz = ar.ansatz
            for k, e in enumerate(ar.energies):
                sink({"move": "adapt", "n_operators": k, "energy": e})
            summary.update(
                energy=ar.energy, status=ar.status, energy_trace=ar.energies,
                selection_norms=ar.selection_norms,
            )
        elif config.method == "replay":
            a = replay_ansatz
            if config.replay.relax:
                rel = local_minimize(a, H, pool, config.optimizer)
                a = rel.ansatz
                summary.update(relaxed=True, converged=rel.converged, grad_max=rel.grad_max)
            result_ansatz = a
            summary["energy"] = ups.energy(a, H, pool)
    finally:
        sink.close()

    if config.fci_reference or config.method == "fci":
        fci = fci_reference(config, system)
        summary["fci"] = fci
        summary["fci_energy"] = fci["energy"]
    if config.method == "fci":
        summary["energy"] = summary["fci_energy"]
        if "double_occupancy" in summary["fci"]:
            summary["double_occupancy"] = summary["fci"]["double_occupancy"]
        summary["s_squared"] = summary["fci"]["target_s_squared"]
    if result_ansatz is not None:
        psi = ups.evaluate_state(result_ansatz, basis, pool)
        summary["s_squared"] = s_squared_expectation(psi, basis)
        if config.system.hubbard is not None:
            summary["double_occupancy"] = double_occupancy(psi, basis, system.orbitals)
        summary["n_operators"] = len(result_ansatz)
        summary["cnot_count"] = cnot_count(result_ansatz, basis.n_orbitals, config.cost_model)
    if "fci_energy" in summary and "energy" in summary:
        summary["error"] = summary["energy"] - summary["fci_energy"]
    summary["seconds"] = time.monotonic() - t0

    if write:
        if result_ansatz is not None:
            atomic_write(outdir / "ansatz.txt", ups.dumps(result_ansatz, pool))
        atomic_write(outdir / "summary.json", json.dumps(_jsonable(summary), indent=2) + "\n")
    summary["_ansatz"] = result_ansatz
    return summary


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items() if not k.startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def non_parallelity_error(errors) -> float:
    errs = [e for e in errors if e is not None and math.isfinite(e)]
    return max(errs) - min(errs) if errs else math.nan


def _point_config(config: RunConfig, value) -> RunConfig:
    tree = as_dict(config)
    tree["scan"] = None
    set_path(tree, config.scan.parameter.split("."), value)
    return validate(tree)


def scan(config: RunConfig, output: Path | None = None) -> dict:
    """One job per value of ``config.scan.parameter``; failures are recorded, not raised."""
    if config.scan is None:
        raise ConfigError("scan needs a 'scan' section")
    sc = config.scan
    outdir = Path(output if output is not None else config.output)
    points = [_point_config(config, v) for v in sc.values]  # validates every point up front
    for p in points:
        p.check_inputs()

    def one(k: int, cfg: RunConfig, initial) -> dict:
        t0 = time.monotonic()
        d = outdir / f"point_{k:03d}"
        row = {"point": k, "parameter": sc.parameter, "value": sc.values[k], "method": cfg.method, "directory": str(d)}
        try:
            s = run(cfg, d, initial=initial)
        except Exception as exc:  # noqa: BLE001 - the scan records and moves on
            log.exception("scan point %d failed", k)
            row.update(status="failed", message=f"{type(exc).__name__}: {exc}", seconds=time.monotonic() - t0)
            return row
        row.update({c: s.get(c) for c in SCAN_COLUMNS if c in s})
        row.setdefault("status", "ok")
        row["_ansatz"] = s.get("_ansatz")
        return row

    if sc.warm_start or sc.workers == 1:
        rows, prev = [], None
        for k, cfg in enumerate(points):
            row = one(k, cfg, prev if sc.warm_start else None)
            if sc.warm_start and row.get("_ansatz") is not None:
                prev = row["_ansatz"]
            rows.append(row)
    else:
        with ThreadPoolExecutor(sc.workers) as ex:
            rows = list(ex.map(lambda kc: one(kc[0], kc[1], None), enumerate(points)))

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SCAN_COLUMNS, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _csv_cell(row.get(c)) for c in SCAN_COLUMNS})
    atomic_write(outdir / "scan.csv", buf.getvalue())
    errors = [r.get("error") for r in rows]
    result = {
        "parameter": sc.parameter,
        "values": sc.values,
        "npe": non_parallelity_error(errors),
        "max_error": max((e for e in errors if e is not None), default=None),
        "failed_points": [r["point"] for r in rows if r.get("status") == "failed"],
        "columns": SCAN_COLUMNS,
        "config": as_dict(config),
    }
    atomic_write(outdir / "scan.json", json.dumps(_jsonable(result), indent=2) + "\n")
    result["rows"] = rows
    return result


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v
