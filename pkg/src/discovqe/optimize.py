"""Continuous and discrete global optimisation of unitary product states.

The search alternates basin-hopping on the amplitudes of a fixed operator
sequence with three discrete neighbourhood moves on the sequence itself
(cyclic rotation, single-position mutation, pair swap), each candidate
followed by relaxation of all amplitudes.  A configuration that is
stationary in the amplitudes and not improved by any tested discrete
neighbour is a biminimum.

Sequences are handled internally as arrays of pool indices.
"""

from __future__ import annotations

import logging
import math
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .ansatz import Ansatz, Evaluator
from .hamiltonians import SectorHamiltonian
from .pool import OperatorPool

log = logging.getLogger(__name__)

MUTATION_FALLBACK_AMPLITUDE = 0.05


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    m_operators: int = Field(8, ge=0)
    bh_steps_per_cycle: int = Field(10, ge=0)
    bh_perturbation_scale: float = Field(0.5, gt=0)
    bh_temperature: float = Field(1e-3, ge=0)
    discrete_temperature: float = Field(5e-3, ge=0)
    temperature_decay: float = Field(0.9, gt=0, le=1)
    max_macro_cycles: int = Field(20, ge=0)
    polish_cycles: int = Field(10, ge=0)
    grad_tolerance: float = Field(1e-9, gt=0)
    energy_tolerance: float = Field(1e-10, gt=0)
    max_iterations: int = Field(2000, gt=0)
    candidate_max_iterations: int = Field(200, gt=0)
    rng_seed: int = Field(0, ge=0, lt=2**64)
    restarts: int = Field(5, ge=1)
    workers: int = Field(1, ge=1)
    target_energy: float | None = None
    time_limit: float | None = Field(None, gt=0)


# --- search state ------------------------------------------------------------


@dataclass
class Minimum:
    seq: np.ndarray
    amps: np.ndarray
    energy: float
    grad_max: float
    converged: bool


@dataclass
class Relaxation:
    """Outcome of :func:`local_minimize`; ``converged`` is False on iteration cap or line-search failure."""

    ansatz: Ansatz
    energy: float
    converged: bool
    grad_max: float
    iterations: int


def _max_abs(g: np.ndarray) -> float:
    return float(np.max(np.abs(g))) if g.size else 0.0


@dataclass
class Biminimum:
    ansatz: Ansatz
    energy: float
    certified: bool
    grad_max: float
    move_history: list[dict] = field(default_factory=list)
    counters: Counter = field(default_factory=Counter)
    restart_energies: list[float] = field(default_factory=list)
    exhausted: bool = False


class _Search:
    """Shared state for one optimisation problem: evaluator, config, counters."""

    def __init__(self, H: SectorHamiltonian, pool: OperatorPool, reference: int, config: OptimizerConfig):
        self.ev = Evaluator(H, pool)
        self.pool = pool
        self.reference = reference
        self.cfg = config
        self.counters: Counter = Counter()
        self._executor = ThreadPoolExecutor(config.workers) if config.workers > 1 else None

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()

    def relax(self, seq: np.ndarray, amps: np.ndarray, max_iterations: int | None = None) -> Minimum:
        seq = np.ascontiguousarray(seq, dtype=np.int64)
        if max_iterations is None:
            max_iterations = self.cfg.max_iterations
        x, f, g, ok, _ = self.ev.relax(seq, amps, self.reference, self.cfg.grad_tolerance, max_iterations)
        self.counters["relaxations"] += 1
        return Minimum(seq, x, f, _max_abs(g), ok)

    def relax_many(self, candidates: list[tuple[np.ndarray, np.ndarray]]) -> list[Minimum]:
        cap = self.cfg.candidate_max_iterations
        if self._executor is None:
            return [self.relax(s, a, cap) for s, a in candidates]
        return list(self._executor.map(lambda sa: self.relax(sa[0], sa[1], cap), candidates))

    def to_ansatz(self, m: Minimum) -> Ansatz:
        return Ansatz([self.pool[k] for k in m.seq], m.amps.copy(), self.reference)

    def from_ansatz(self, ansatz: Ansatz) -> tuple[np.ndarray, np.ndarray]:
        return self.pool.indices(ansatz.sequence), np.array(ansatz.amplitudes, dtype=float)

    # discrete neighbourhoods -------------------------------------------------

    def best_of(self, cands: list[Minimum], keys: list[tuple]) -> tuple[Minimum, tuple] | None:
        """Lowest energy; ties within energy_tolerance go to the smallest key."""
        if not cands:
            return None
        emin = min(c.energy for c in cands)
        tol = self.cfg.energy_tolerance
        pick = min(
            (k, i) for i, (c, k) in enumerate(zip(cands, keys)) if c.energy <= emin + tol
        )[1]
        return cands[pick], keys[pick]

    def cyclic(self, cur: Minimum):
        M = len(cur.seq)
        trials = [(np.roll(cur.seq, -r), np.roll(cur.amps, -r)) for r in range(1, M)]
        self.counters["cyclic_candidates"] += len(trials)
        found = self.best_of(self.relax_many(trials), [(r,) for r in range(1, M)])
        return found

    def mutation(self, cur: Minimum, positions=None):
        M = len(cur.seq)
        positions = range(M) if positions is None else positions
        trials, keys = [], []
        for i in positions:
            for k in range(len(self.pool)):
                if k == cur.seq[i]:
                    continue
                seq = cur.seq.copy()
                seq[i] = k
                amps = cur.amps.copy()
                if not np.isfinite(amps[i]):
                    amps[i] = MUTATION_FALLBACK_AMPLITUDE
                trials.append((seq, amps))
                keys.append((i, k))
        self.counters["mutation_candidates"] += len(trials)
        return self.best_of(self.relax_many(trials), keys)

    def swap(self, cur: Minimum, positions=None):
        """Swaps (i, j) with j > i for every i in ``positions`` (all unordered pairs by default)."""
        M = len(cur.seq)
        positions = range(M) if positions is None else positions
        trials, keys = [], []
        for i in positions:
            for j in range(i + 1, M):
                order = np.arange(M)
                order[i], order[j] = j, i
                trials.append((cur.seq[order], cur.amps[order]))
                keys.append((i, j))
        self.counters["swap_candidates"] += len(trials)
        return self.best_of(self.relax_many(trials), keys)

    # continuous search -------------------------------------------------------

    def basin_hop(self, cur: Minimum, rng: np.random.Generator) -> Minimum:
        cfg = self.cfg
        best = markov = cur
        scale = cfg.bh_perturbation_scale
        for _ in range(cfg.bh_steps_per_cycle):
            amps = markov.amps + rng.uniform(-scale, scale, size=markov.amps.shape)
            trial = self.relax(markov.seq, amps)
            self.counters["bh_steps"] += 1
            if not trial.converged:
                self.counters["bh_skipped"] += 1
                continue
            if trial.energy < best.energy - cfg.energy_tolerance:
                best = trial
            de = trial.energy - markov.energy
            if de <= 0 or (cfg.bh_temperature > 0 and rng.random() < math.exp(-de / cfg.bh_temperature)):
                markov = trial
        return best


def _search_for(H, pool, ansatz: Ansatz, config: OptimizerConfig | None) -> _Search:
    return _Search(H, pool, ansatz.reference, config or OptimizerConfig())


def local_minimize(
    ansatz: Ansatz,
    H: SectorHamiltonian,
    pool: OperatorPool,
    config: OptimizerConfig | None = None,
    max_iterations: int | None = None,
) -> Relaxation:
    """BFGS relaxation of all amplitudes with the operator sequence fixed."""
    if not np.all(np.isfinite(ansatz.amplitudes)):
        raise ValueError("non-finite amplitudes")
    s = _search_for(H, pool, ansatz, config)
    seq, amps = s.from_ansatz(ansatz)
    if max_iterations is None:
        max_iterations = s.cfg.max_iterations
    x, f, g, ok, it = s.ev.relax(seq, amps, ansatz.reference, s.cfg.grad_tolerance, max_iterations)
    return Relaxation(Ansatz(list(ansatz.sequence), x, ansatz.reference), f, ok, _max_abs(g), it)


def basin_hop(
    ansatz: Ansatz,
    H: SectorHamiltonian,
    pool: OperatorPool,
    config: OptimizerConfig | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[Ansatz, float]:
    """Perturb-and-relax Monte Carlo on the amplitudes; returns the lowest minimum seen."""
    s = _search_for(H, pool, ansatz, config)
    if rng is None:
        rng = np.random.default_rng(s.cfg.rng_seed)
    seq, amps = s.from_ansatz(ansatz)
    start = s.relax(seq, amps)
    best = s.basin_hop(start, rng)
    return s.to_ansatz(best), best.energy


def _move(kind: str, ansatz, H, pool, config, counters, **kw) -> tuple[Ansatz, float]:
    s = _search_for(H, pool, ansatz, config)
    seq, amps = s.from_ansatz(ansatz)
    cur = Minimum(seq, amps, s.ev.energy(seq, amps, ansatz.reference), math.nan, False)
    found = getattr(s, kind)(cur, **kw)
    if counters is not None:
        counters.update(s.counters)
    if found is None:
        return ansatz.copy(), cur.energy
    m, _ = found
    return s.to_ansatz(m), m.energy


def cyclic_move(ansatz, H, pool, config=None, counters: Counter | None = None):
    """Best relaxed non-trivial cyclic rotation of the (operator, amplitude) pairs."""
    return _move("cyclic", ansatz, H, pool, config, counters)


def mutation_move(ansatz, H, pool, config=None, counters: Counter | None = None, positions=None):
    """Best relaxed replacement of one operator by another pool member.

    ``positions`` restricts which sequence slots are mutated (all by default).
    """
    return _move("mutation", ansatz, H, pool, config, counters, positions=positions)


def swap_move(ansatz, H, pool, config=None, counters: Counter | None = None, positions=None):
    """Best relaxed exchange of two sequence positions (i, j > i for i in ``positions``)."""
    return _move("swap", ansatz, H, pool, config, counters, positions=positions)


# --- drivers -------------------------------------------------------------------


def disco_vqe(
    H: SectorHamiltonian,
    pool: OperatorPool,
    config: OptimizerConfig | None = None,
    reference: int | None = None,
    on_record: Callable[[dict], None] | None = None,
    initial: Ansatz | None = None,
) -> Biminimum:
    """Generalised basin-hopping over amplitudes and operator sequences.

    Each macro-cycle runs basin-hopping, then the cyclic move, a mutation
    sweep and a swap sweep over every position.  Downhill moves are always
    accepted, uphill ones with Metropolis probability at a geometrically
    annealed temperature.  A cycle that changes nothing while the gradient
    is below tolerance certifies a biminimum and ends that restart.

    Returns the lowest configuration found over ``config.restarts``
    independently seeded restarts.
    """
    cfg = config or OptimizerConfig()
    if reference is None:
        reference = H.basis.closed_shell_reference()
    if len(pool) == 0:
        raise ValueError("empty operator pool")
    search = _Search(H, pool, reference, cfg)
    history: list[dict] = []
    t_start = time.monotonic()

    def emit(rec: dict):
        history.append(rec)
        if on_record is not None:
            on_record(rec)

    M = cfg.m_operators if initial is None else len(initial)
    if M == 0:
        e = search.ev.energy(np.zeros(0, np.int64), np.zeros(0), reference)
        emit({"restart": 0, "cycle": 0, "move": "certified", "energy": e, "grad_max": 0.0, "seed": cfg.rng_seed})
        return Biminimum(Ansatz([], [], reference), e, True, 0.0, history, search.counters, [e])

    def out_of_time() -> bool:
        return cfg.time_limit is not None and time.monotonic() - t_start > cfg.time_limit

    def reached_target(m: Minimum) -> bool:
        return cfg.target_energy is not None and m.energy <= cfg.target_energy + cfg.energy_tolerance

    overall: tuple[Minimum, bool] | None = None
    restart_energies = []
    exhausted = False
    for r, child in enumerate(np.random.SeedSequence(cfg.rng_seed).spawn(cfg.restarts)):
        rng = np.random.default_rng(child)
        base = {"restart": r, "seed": cfg.rng_seed}
        if initial is not None and r == 0:
            seq, amps = search.from_ansatz(initial)
        else:
            seq = rng.integers(0, len(pool), size=M)
            amps = rng.uniform(-0.1, 0.1, size=M)
        cur = search.relax(seq, amps)
        best, best_cert = cur, False
        emit({**base, "cycle": 0, "move": "init", "energy": cur.energy, "grad_max": cur.grad_max})

        def consider(found, name, cycle, temperature):
            nonlocal cur, best, best_cert
            if found is None:
                return False
            cand, key = found
            de = cand.energy - cur.energy
            uphill = de > cfg.energy_tolerance
            if de < -cfg.energy_tolerance:
                pass
            elif uphill and temperature > 0 and rng.random() < math.exp(-de / temperature):
                pass
            else:
                return False
            if not cand.converged:
                cand = search.relax(cand.seq, cand.amps)
            prev = cur.energy
            cur = cand
            if cur.energy < best.energy - cfg.energy_tolerance:
                best, best_cert = cur, False
            search.counters[f"accepted_{name}"] += 1
            emit({
                **base, "cycle": cycle, "move": name, "key": list(map(int, key)),
                "energy": cur.energy, "delta": cur.energy - prev,
                "uphill": bool(uphill), "grad_max": cur.grad_max,
                "temperature": temperature,
            })
            return True

        def sweep(cycle, temperature) -> bool | None:
            """True if a move was accepted, None if the time limit cut the sweep short."""
            changed = consider(search.cyclic(cur), "cyclic", cycle, temperature)
            moves = [(search.mutation, "mutation", i) for i in range(M)]
            moves += [(search.swap, "swap", i) for i in range(M - 1)]
            for move, name, i in moves:
                if out_of_time():
                    return None
                changed |= consider(move(cur, [i]), name, cycle, temperature)
            search.counters["macro_cycles"] += 1
            return changed

        def certify(cycle, move="certified"):
            nonlocal best, best_cert
            if cur.energy <= best.energy + cfg.energy_tolerance:
                best, best_cert = cur, True
            emit({**base, "cycle": cycle, "move": move, "energy": cur.energy, "grad_max": cur.grad_max})

        certified = False
        temperature = cfg.discrete_temperature
        cycle = 0
        for cycle in range(1, cfg.max_macro_cycles + 1):
            if reached_target(best):
                break
            if out_of_time():
                exhausted = True
                break
            before = cur.energy
            cur = search.basin_hop(cur, rng)
            if cur.energy < before - cfg.energy_tolerance:
                emit({**base, "cycle": cycle, "move": "basin_hop", "energy": cur.energy,
                      "delta": cur.energy - before, "grad_max": cur.grad_max})
                if cur.energy < best.energy - cfg.energy_tolerance:
                    best, best_cert = cur, False
            changed = sweep(cycle, temperature)
            if changed is None:
                exhausted = True
                break
            if not changed and cur.converged:
                certified = True
                certify(cycle)
                break
            if reached_target(best):
                break
            temperature *= cfg.temperature_decay

        # Greedy descent from the lowest configuration seen, so that a walk
        # which wandered uphill still ends on a certified biminimum.
        if not best_cert and not reached_target(best):
            cur = best if best.converged else search.relax(best.seq, best.amps)
            for _ in range(cfg.polish_cycles):
                if out_of_time():
                    exhausted = True
                    break
                cycle += 1
                changed = sweep(cycle, 0.0)
                if changed is None:
                    exhausted = True
                    break
                if not changed and cur.converged:
                    certified = True
                    certify(cycle, "certified_polish")
                    break
                if reached_target(best):
                    break
        if not certified and not reached_target(best):
            exhausted = True
        log.info("restart %d: E=%.12f certified=%s", r, best.energy, best_cert)
        restart_energies.append(best.energy)
        if overall is None or best.energy < overall[0].energy - cfg.energy_tolerance or (
            best_cert and not overall[1] and best.energy <= overall[0].energy + cfg.energy_tolerance
        ):
            overall = (best, best_cert)
        if reached_target(overall[0]) or out_of_time():
            break
    search.close()
    m, cert = overall
    return Biminimum(
        search.to_ansatz(m), m.energy, cert, m.grad_max, history, search.counters,
        restart_energies, exhausted and not cert,
    )


@dataclass
class AdaptResult:
    ansatz: Ansatz
    energies: list[float]
    status: str  # "converged" (selection gradients below tolerance) or "max_operators"
    selection_norms: list[float]

    @property
    def energy(self) -> float:
        return self.energies[-1]


def adapt_vqe(
    H: SectorHamiltonian,
    pool: OperatorPool,
    max_operators: int,
    selection_tolerance: float,
    config: OptimizerConfig | None = None,
    reference: int | None = None,
) -> AdaptResult:
    """Greedy growth: append the operator with the largest |dE/dt| at t = 0, relax all."""
    cfg = config or OptimizerConfig()
    if reference is None:
        reference = H.basis.closed_shell_reference()
    search = _Search(H, pool, reference, cfg)
    seq = np.zeros(0, dtype=np.int64)
    amps = np.zeros(0)
    e = search.ev.energy(seq, amps, reference)
    energies = [e]
    norms = []
    status = "max_operators"
    psi = search.ev.state(seq, amps, reference)
    for _ in range(max_operators):
        g = search.ev.selection_gradients(psi)
        k = int(np.argmax(np.abs(g)))
        norms.append(float(abs(g[k])))
        if abs(g[k]) < selection_tolerance:
            status = "converged"
            break
        m = search.relax(np.append(seq, k), np.append(amps, 0.0))
        seq, amps = m.seq, m.amps
        energies.append(m.energy)
        psi = search.ev.state(seq, amps, reference)
    else:
        g = search.ev.selection_gradients(psi)
        norms.append(float(np.max(np.abs(g))))
        if norms[-1] < selection_tolerance:
            status = "converged"
    search.close()
    ansatz = Ansatz([pool[k] for k in seq], amps, reference)
    return AdaptResult(ansatz, energies, status, norms)
