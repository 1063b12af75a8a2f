"""Reading and writing FCIDUMP integral files.

Integrals are kept in chemists' notation over spatial orbitals with real
8-fold permutational symmetry.  File indices are 1-based, stored 0-based.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


class FcidumpError(ValueError):
    """Malformed FCIDUMP input.  ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class FcidumpData:
    n_orbitals: int
    n_electrons: int
    ms2: int
    core_energy: float
    one_body: np.ndarray
    two_body: np.ndarray
    orbsym: tuple[int, ...] = ()
    isym: int = 1

    @property
    def n_alpha(self) -> int:
        return (self.n_electrons + self.ms2) // 2

    @property
    def n_beta(self) -> int:
        return (self.n_electrons - self.ms2) // 2


_HEADER_KEY = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^=]*?)(?=(?:[A-Za-z_][A-Za-z0-9_]*\s*=)|$)", re.S)


def _parse_header(text: str) -> dict[str, list[str]]:
    body = re.sub(r"^\s*&FCI", "", text, flags=re.I)
    out = {}
    for key, value in _HEADER_KEY.findall(body):
        items = [v for v in re.split(r"[,\s]+", value.strip()) if v]
        out[key.upper()] = items
    return out


def _header_int(header: dict[str, list[str]], key: str, lineno: int, required=True) -> int | None:
    if key not in header:
        if required:
            raise FcidumpError(f"header is missing {key}", lineno)
        return None
    vals = header[key]
    if len(vals) != 1:
        raise FcidumpError(f"{key} must be a single integer, got {vals}", lineno)
    try:
        return int(vals[0])
    except ValueError:
        raise FcidumpError(f"{key} is not an integer: {vals[0]!r}", lineno) from None


def _to_float(tok: str) -> float:
    return float(tok.replace("D", "E").replace("d", "e"))


def parse_fcidump(stream) -> FcidumpData:
    """Parse FCIDUMP text from a file-like object or a string."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = stream.read().splitlines()

    header_lines = []
    i = 0
    while i < len(lines):
        line = lines[i]
        i += 1
        stripped = line.strip()
        if stripped.upper() in ("&END", "/", "$END", "$"):
            break
        if re.search(r"(&END|/)\s*$", stripped, flags=re.I):
            header_lines.append(re.sub(r"(&END|/)\s*$", "", stripped, flags=re.I))
            break
        header_lines.append(line)
    else:
        raise FcidumpError("header is not terminated by &END or /", i)
    if not header_lines or not header_lines[0].strip().upper().startswith("&FCI"):
        raise FcidumpError("header must start with &FCI", 1)
    header_end = i
    header = _parse_header(" ".join(header_lines))

    norb = _header_int(header, "NORB", 1)
    nelec = _header_int(header, "NELEC", 1)
    ms2 = _header_int(header, "MS2", 1, required=False) or 0
    isym = _header_int(header, "ISYM", 1, required=False) or 1
    if norb <= 0:
        raise FcidumpError(f"NORB must be positive, got {norb}", 1)
    if nelec < 0 or nelec > 2 * norb:
        raise FcidumpError(f"NELEC={nelec} incompatible with NORB={norb}", 1)
    if (nelec + ms2) % 2 or abs(ms2) > nelec:
        raise FcidumpError(f"MS2={ms2} incompatible with NELEC={nelec}", 1)
    orbsym = ()
    if "ORBSYM" in header:
        try:
            orbsym = tuple(int(v) for v in header["ORBSYM"])
        except ValueError:
            raise FcidumpError("ORBSYM entries must be integers", 1) from None

    h1 = np.zeros((norb, norb))
    eri = np.zeros((norb, norb, norb, norb))
    core = 0.0
    for lineno, line in enumerate(lines[header_end:], start=header_end + 1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 5:
            raise FcidumpError(f"expected 'value i j k l', got {line.strip()!r}", lineno)
        try:
            val = _to_float(toks[0])
        except ValueError:
            raise FcidumpError(f"non-numeric integral value {toks[0]!r}", lineno) from None
        try:
            p, q, r, s = (int(t) for t in toks[1:])
        except ValueError:
            raise FcidumpError(f"non-integer index in {line.strip()!r}", lineno) from None
        for idx in (p, q, r, s):
            if not 0 <= idx <= norb:
                raise FcidumpError(f"index {idx} out of range 0..{norb}", lineno)
        if p == q == r == s == 0:
            core = val
        elif r == s == 0:
            if p == 0 or q == 0:
                raise FcidumpError("one-body entry needs both indices nonzero", lineno)
            h1[p - 1, q - 1] = h1[q - 1, p - 1] = val
        elif p == 0 and q == 0:
            # orbital-energy records, not needed for the Hamiltonian
            continue
        else:
            if 0 in (p, q, r, s):
                raise FcidumpError("two-body entry needs all indices nonzero", lineno)
            _fill_eri(eri, p - 1, q - 1, r - 1, s - 1, val)
    return FcidumpData(norb, nelec, ms2, core, h1, eri, orbsym, isym)


def _fill_eri(eri: np.ndarray, p: int, q: int, r: int, s: int, val: float) -> None:
    for a, b, c, d in (
        (p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
        (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p),
    ):
        eri[a, b, c, d] = val


def read_fcidump(path) -> FcidumpData:
    with open(path) as f:
        return parse_fcidump(f)


def write_fcidump(data: FcidumpData, path_or_stream, tol: float = 0.0) -> None:
    """Write ``data`` in the standard layout, unique integrals only."""
    n = data.n_orbitals
    out = io.StringIO()
    orbsym = data.orbsym or (1,) * n
    out.write(f" &FCI NORB={n},NELEC={data.n_electrons},MS2={data.ms2},\n")
    out.write("  ORBSYM=" + ",".join(str(o) for o in orbsym) + ",\n")
    out.write(f"  ISYM={data.isym},\n &END\n")
    fmt = "{:24.16e} {:4d} {:4d} {:4d} {:4d}\n"
    eri = data.two_body
    for p in range(n):
        for q in range(p + 1):
            pq = p * (p + 1) // 2 + q
            for r in range(n):
                for s in range(r + 1):
                    rs = r * (r + 1) // 2 + s
                    if rs > pq:
                        continue
                    v = eri[p, q, r, s]
                    if abs(v) > tol:
                        out.write(fmt.format(v, p + 1, q + 1, r + 1, s + 1))
    for p in range(n):
        for q in range(p + 1):
            v = data.one_body[p, q]
            if abs(v) > tol:
                out.write(fmt.format(v, p + 1, q + 1, 0, 0))
    out.write(fmt.format(data.core_energy, 0, 0, 0, 0))
    text = out.getvalue()
    if isinstance(path_or_stream, (str, Path)):
        Path(path_or_stream).write_text(text)
    else:
        path_or_stream.write(text)


def freeze_core(data: FcidumpData, n_frozen: int) -> FcidumpData:
    """Fold the ``n_frozen`` lowest orbitals, doubly occupied, into a core.

    The core energy absorbs the frozen one- and two-body energy; the active
    one-body integrals gain the frozen-core Coulomb-minus-exchange field.
    """
    if n_frozen < 0:
        raise ValueError("n_frozen must be non-negative")
    if n_frozen > min(data.n_alpha, data.n_beta):
        raise ValueError(
            f"cannot freeze {n_frozen} orbitals with only "
            f"{min(data.n_alpha, data.n_beta)} doubly occupied"
        )
    if n_frozen == 0:
        return data
    f = slice(0, n_frozen)
    a = slice(n_frozen, data.n_orbitals)
    h, g = data.one_body, data.two_body
    jj = np.einsum("iijj->", g[f, f, f, f])
    kk = np.einsum("ijji->", g[f, f, f, f])
    core = data.core_energy + 2.0 * np.trace(h[f, f]) + 2.0 * jj - kk
    h_eff = (
        h[a, a]
        + 2.0 * np.einsum("pqii->pq", g[a, a, f, f])
        - np.einsum("piiq->pq", g[a, f, f, a])
    )
    h_eff = 0.5 * (h_eff + h_eff.T)
    return replace(
        data,
        n_orbitals=data.n_orbitals - n_frozen,
        n_electrons=data.n_electrons - 2 * n_frozen,
        core_energy=float(core),
        one_body=h_eff,
        two_body=np.ascontiguousarray(g[a, a, a, a]),
        orbsym=data.orbsym[n_frozen:] if data.orbsym else (),
    )
