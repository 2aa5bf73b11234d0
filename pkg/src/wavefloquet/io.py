"""Versioned text formats: solutions, spectra, run configurations, curves.

Floating-point values in solution files are stored as hexadecimal floats
so a solution read back is bit-identical to the one written.
"""
from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .shooting import STANDING, TRAVELING, AmplitudeConstraint, ParamVector
from .spectral import IDENTITY_MAP, MeshMap, MeshSchedule, Segment
from .state import PhysParams

SOLUTION_HEADER = "# wavefloquet solution v1"
SPECTRUM_HEADER = "# wavefloquet spectrum v1"
FAMILY_HEADER = "# wavefloquet family v1"
PERM_HEADER = "# wavefloquet permutation v1"
CURVE_HEADER = "# wavefloquet curve v1"
SPECTRUM_COLUMNS = ("index", "re", "im", "abs", "sigma", "kmean", "parity", "err")


class FormatError(ValueError):
    """Malformed or unsupported file."""


def _hex(x: float) -> str:
    return float(x).hex()


def _unhex(s: str) -> float:
    s = s.strip()
    try:
        return float.fromhex(s)
    except ValueError:
        return float(s)


def _hex_array(a) -> str:
    return " ".join(_hex(v) for v in np.asarray(a, dtype=float).ravel())


def _unhex_array(s: str) -> np.ndarray:
    return np.array([_unhex(v) for v in s.split()], dtype=float)


def _read_pairs(path, header: str) -> dict:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != header:
        got = lines[0].strip() if lines else "<empty>"
        raise FormatError(f"{path}: expected header {header!r}, got {got!r}")
    out = {}
    for lineno, line in enumerate(lines[1:], 2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# --------------------------------------------------------------------------
# solutions


@dataclass
class SolutionRecord:
    """A converged (or best-so-far) shooting solution and its context."""

    params: ParamVector
    phys: PhysParams
    schedule: MeshSchedule
    f: float
    converged: bool
    scheme: str = "rk8"
    diagnostics: dict = field(default_factory=dict)
    rest_eta: np.ndarray | None = None
    rest_phi: np.ndarray | None = None


def _schedule_lines(schedule: MeshSchedule):
    for s in schedule.segments:
        yield f"segment = {_hex(s.theta)} {s.N} {s.M} {s.mesh.kappa} {_hex(s.mesh.rho)}"


def write_solution(path, rec: SolutionRecord):
    p = rec.params
    lines = [
        SOLUTION_HEADER,
        f"family = {p.family}",
        f"scheme = {rec.scheme}",
        f"g = {_hex(rec.phys.g)}",
        f"tension = {_hex(rec.phys.tension)}",
        f"depth = {_hex(rec.phys.depth)}",
        f"f = {_hex(rec.f)}",
        f"converged = {int(bool(rec.converged))}",
        f"n = {p.n}",
        f"c = {_hex_array(p.c)}",
    ]
    if p.constraint is not None:
        con = p.constraint
        lines.append(f"constraint = {_hex(con.position)} {_hex(con.target)} {_hex(con.weight)}")
    lines.extend(_schedule_lines(rec.schedule))
    for k in sorted(rec.diagnostics):
        v = rec.diagnostics[k]
        lines.append(f"diag.{k} = {_hex(v) if isinstance(v, float) else v}")
    if rec.rest_eta is not None:
        lines.append(f"rest_eta = {_hex_array(rec.rest_eta)}")
        lines.append(f"rest_phi = {_hex_array(rec.rest_phi)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_solution(path) -> SolutionRecord:
    d = _read_pairs(path, SOLUTION_HEADER)
    text = Path(path).read_text().splitlines()
    segs = []
    for line in text:
        if line.startswith("segment ="):
            theta, N, M, kappa, rho = line.split("=", 1)[1].split()
            segs.append(Segment(_unhex(theta), int(N), int(M), MeshMap(int(kappa), _unhex(rho))))
    try:
        family = d["family"]
        c = _unhex_array(d["c"])
        con = None
        if "constraint" in d:
            a, t, w = (_unhex(v) for v in d["constraint"].split())
            con = AmplitudeConstraint(a, t, w)
        phys = PhysParams(_unhex(d["g"]), _unhex(d["tension"]), _unhex(d["depth"]))
        diags = {k[5:]: _parse_diag(v) for k, v in d.items() if k.startswith("diag.")}
        rec = SolutionRecord(
            ParamVector(c, family, con),
            phys,
            MeshSchedule(tuple(segs)),
            _unhex(d["f"]),
            bool(int(d["converged"])),
            d.get("scheme", "rk8"),
            diags,
        )
    except KeyError as exc:
        raise FormatError(f"{path}: missing key {exc.args[0]!r}") from None
    if "rest_eta" in d:
        rec.rest_eta = _unhex_array(d["rest_eta"])
        rec.rest_phi = _unhex_array(d["rest_phi"])
    return rec


def _parse_diag(v: str):
    if v.lstrip("-").isdigit():
        return int(v)
    try:
        return float.fromhex(v)
    except ValueError:
        return v


# --------------------------------------------------------------------------
# spectra


def write_spectrum(path, records, parameter: float = 0.0, meta: dict | None = None):
    """Headered CSV with one row per Floquet record (1-based index)."""
    buf = _io.StringIO()
    buf.write(SPECTRUM_HEADER + "\n")
    buf.write(f"# parameter = {parameter!r}\n")
    for k in sorted(meta or {}):
        buf.write(f"# {k} = {meta[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SPECTRUM_COLUMNS)
    for i, r in enumerate(records, 1):
        w.writerow(
            [i, repr(r.lam.real), repr(r.lam.imag), repr(r.modulus), repr(r.sigma), repr(r.kmean), r.parity, repr(r.err)]
        )
    Path(path).write_text(buf.getvalue())


@dataclass
class SpectrumTable:
    parameter: float
    lam: np.ndarray
    kmean: np.ndarray
    parity: np.ndarray
    err: np.ndarray
    meta: dict

    @property
    def modulus(self):
        return np.abs(self.lam)

    @property
    def sigma(self):
        s = np.angle(self.lam)
        return np.where(s == -np.pi, np.pi, s)


def read_spectrum(path) -> SpectrumTable:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != SPECTRUM_HEADER:
        raise FormatError(f"{path}: not a spectrum file")
    meta = {}
    body = []
    for line in lines[1:]:
        if line.startswith("#"):
            if "=" in line:
                k, v = line[1:].split("=", 1)
                meta[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if not rows or tuple(rows[0]) != SPECTRUM_COLUMNS:
        raise FormatError(f"{path}: unexpected spectrum columns {rows[0] if rows else None}")
    data = rows[1:]
    lam = np.array([complex(float(r[1]), float(r[2])) for r in data])
    return SpectrumTable(
        float(meta.get("parameter", 0.0)),
        lam,
        np.array([float(r[5]) for r in data]),
        np.array([int(r[6]) for r in data]),
        np.array([float(r[7]) for r in data]),
        meta,
    )


def write_family(path, tables, perm):
    """Matched family: one row per (solution, tracked eigenvalue)."""
    buf = _io.StringIO()
    buf.write(FAMILY_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("solution", "parameter", "row", "source", "abs", "sigma", "kmean", "parity"))
    for s, t in enumerate(tables):
        for i in range(perm.shape[0]):
            j = perm[i, s] - 1
            lam = t.lam[j]
            sig = t.sigma[j]
            w.writerow([s + 1, repr(t.parameter), i + 1, j + 1, repr(abs(lam)), repr(float(sig)), repr(float(t.kmean[j])), int(t.parity[j])])
    Path(path).write_text(buf.getvalue())


def write_permutation(path, perm):
    lines = [PERM_HEADER] + [" ".join(str(int(v)) for v in row) for row in perm]
    Path(path).write_text("\n".join(lines) + "\n")


def read_permutation(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != PERM_HEADER:
        raise FormatError(f"{path}: not a permutation file")
    return np.array([[int(v) for v in l.split()] for l in lines[1:] if l.strip()], dtype=int)


def write_curve(path, x, y, label: str = ""):
    """Two-column text, one point per line."""
    lines = [CURVE_HEADER + (f" {label}" if label else "")]
    lines += [f"{float(a)!r} {float(b)!r}" for a, b in zip(x, y)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve(path):
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(CURVE_HEADER):
        raise FormatError(f"{path}: not a curve file")
    data = np.array([[float(v) for v in l.split()] for l in lines[1:] if l.strip()])
    return data[:, 0], data[:, 1]


# --------------------------------------------------------------------------
# run configuration


SEGMENT_KEYS = ("theta", "N", "M", "kappa", "rho")


def parse_config(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment.

    Keys ``segment.theta``, ``segment.N``, ``segment.M``, ``segment.kappa``,
    ``segment.rho`` may repeat; each ``segment.theta`` opens a new segment.
    Other keys may appear once.
    """
    cfg: dict = {}
    segs: list[dict] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise FormatError(f"{source}:{lineno}: empty key")
        if k.startswith("segment."):
            sub = k[len("segment.") :]
            if sub not in SEGMENT_KEYS:
                raise FormatError(f"{source}:{lineno}: unknown segment field {sub!r}")
            if sub == "theta" or not segs:
                segs.append({})
            if sub in segs[-1]:
                raise FormatError(f"{source}:{lineno}: repeated {k} in one segment")
            segs[-1][sub] = v
            continue
        if k in cfg:
            raise FormatError(f"{source}:{lineno}: duplicate key {k!r}")
        cfg[k] = v
    if segs:
        cfg["segments"] = segs
    return cfg


def read_config(path) -> dict:
    p = Path(path)
    return parse_config(p.read_text(), str(p))


def schedule_from_config(cfg: dict, default_M: int | None = None, default_N: int | None = None) -> MeshSchedule:
    """Schedule from ``segment.*`` groups, or uniform from ``M``, ``N``."""
    if "segments" in cfg:
        segs = []
        for i, s in enumerate(cfg["segments"], 1):
            missing = [k for k in ("theta", "N", "M") if k not in s]
            if missing:
                raise FormatError(f"segment {i} lacks {', '.join(missing)}")
            mesh = MeshMap(int(s.get("kappa", 0)), float(s.get("rho", 1.0)))
            segs.append(Segment(float(s["theta"]), int(s["N"]), int(s["M"]), mesh if not mesh.is_identity else IDENTITY_MAP))
        return MeshSchedule(tuple(segs))
    M = int(cfg.get("M", default_M or 0))
    N = int(cfg.get("N", default_N or 0))
    if not M or not N:
        raise FormatError("configuration needs M and N or segment groups")
    return MeshSchedule.uniform(M, N)


def phys_from_config(cfg: dict) -> PhysParams:
    """``depth`` is the mean fluid depth (``inf`` for deep water)."""
    return PhysParams(
        float(cfg.get("g", 1.0)),
        float(cfg.get("tension", 0.0)),
        float(cfg.get("depth", "inf")),
    )


def floats(s: str) -> list[float]:
    return [float(v) for v in s.replace(",", " ").split()]


__all__ = [
    "FormatError",
    "SolutionRecord",
    "write_solution",
    "read_solution",
    "write_spectrum",
    "read_spectrum",
    "SpectrumTable",
    "write_family",
    "write_permutation",
    "read_permutation",
    "write_curve",
    "read_curve",
    "parse_config",
    "read_config",
    "schedule_from_config",
    "phys_from_config",
    "STANDING",
    "TRAVELING",
]
