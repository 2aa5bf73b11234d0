"""Floquet multipliers of time-periodic waves from a truncated monodromy matrix.

Perturbations are expanded in the real Fourier basis.  Column ``4(k-1)+m``
of the monodromy block evolves the initial perturbation

    m=0: (2 cos kx, 0)   m=1: (-2 sin kx, 0)   m=2: (0, 2 cos kx)   m=3: (0, -2 sin kx)

over one period; row ``4(j-1)+m`` holds ``Re/Im`` of the final ``eta_hat[j]``
(m=0,1) and ``phi_hat[j]`` (m=2,3) for ``j = 1..M/2-1``.  Eigenvectors are
normalized in the weighted norm with weight 1 on elevation components and
``(omega_k/g)^2`` on potential components, which makes the zero-amplitude
monodromy an isometry.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import spectral
from .dynamics import Evaluator
from .spectral import IDENTITY_MAP, MeshSchedule
from .state import PhysParams, SurfaceState
from .timestep import integrate

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps


@dataclass
class MonodromyBlock:
    """Leading ``(2M-4) x n`` block of the monodromy matrix, ``n = 4 k_max``."""

    J: np.ndarray
    M: int
    T: float
    k_max: int
    params: PhysParams = field(default_factory=PhysParams)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.J.shape != (2 * self.M - 4, 4 * self.k_max):
            raise ValueError(f"block shape {self.J.shape} inconsistent with M={self.M}, k_max={self.k_max}")
        if not np.all(np.isfinite(self.J)):
            raise ValueError("monodromy block has non-finite entries")

    @property
    def n(self) -> int:
        return 4 * self.k_max

    def weights(self) -> np.ndarray:
        return mu_weights(self.M // 2 - 1, self.params)


def mu_weights(k_max: int, params: PhysParams) -> np.ndarray:
    """Weights of the squared norm for the ``4 k_max`` real coordinates."""
    k = np.arange(1, k_max + 1)
    r = (params.omega(k) / params.g) ** 2
    return np.column_stack([np.ones(k_max), np.ones(k_max), r, r]).ravel()


def wave_index(n: int) -> np.ndarray:
    return np.repeat(np.arange(1, n // 4 + 1), 4).astype(float)


def basis_tangents(k_max: int, M: int, mesh=IDENTITY_MAP):
    """Initial perturbations of the ``4 k_max`` columns as ``(M, n)`` arrays."""
    x = mesh.xi(spectral.nodes(M))
    n = 4 * k_max
    ed = np.zeros((M, n))
    pd = np.zeros((M, n))
    for k in range(1, k_max + 1):
        c, s = 2.0 * np.cos(k * x), -2.0 * np.sin(k * x)
        j = 4 * (k - 1)
        ed[:, j], ed[:, j + 1] = c, s
        pd[:, j + 2], pd[:, j + 3] = c, s
    return ed, pd


def fourier_rows(eta_d: np.ndarray, phi_d: np.ndarray) -> np.ndarray:
    """Stack ``Re/Im`` of modes ``1..M/2-1`` into the ``2M-4`` row layout."""
    M = eta_d.shape[0]
    eh = spectral.coefficients(eta_d)[1 : M // 2]
    ph = spectral.coefficients(phi_d)[1 : M // 2]
    rows = np.stack([eh.real, eh.imag, ph.real, ph.imag], axis=1)
    return rows.reshape((4 * (M // 2 - 1),) + eta_d.shape[1:])


def rows_to_fields(z: np.ndarray, M: int):
    """Inverse of :func:`fourier_rows` for a (possibly truncated) real vector."""
    n = z.shape[0]
    full = np.zeros((2 * M - 4,) + z.shape[1:])
    full[:n] = z
    q = full.reshape((M // 2 - 1, 4) + z.shape[1:])
    eh = np.zeros((M // 2 + 1,) + z.shape[1:], dtype=complex)
    ph = np.zeros_like(eh)
    eh[1 : M // 2] = q[:, 0] + 1j * q[:, 1]
    ph[1 : M // 2] = q[:, 2] + 1j * q[:, 3]
    return spectral.from_coefficients(eh, M), spectral.from_coefficients(ph, M)


def assemble_monodromy(
    q0: SurfaceState,
    T: float,
    k_max: int,
    schedule: MeshSchedule,
    params: PhysParams,
    scheme: str = "rk8",
    *,
    workers: int = 1,
    batch_size: int | None = None,
    periodicity_tol: float | None = None,
) -> MonodromyBlock:
    """Evolve the ``4 k_max`` basis perturbations over ``[0, T]``.

    ``schedule`` spans the full period.  With ``periodicity_tol`` set, the
    base state must return to ``q0`` within that tolerance.
    """
    seg0 = schedule.segments[0]
    M_end = schedule.M_end
    if 4 * k_max > 2 * M_end - 4:
        raise ValueError(f"k_max={k_max} needs 4*k_max <= 2M-4 = {2 * M_end - 4}")
    if q0.M != seg0.M or q0.mesh != seg0.mesh:
        q0 = q0.regrid(seg0.mesh, seg0.M)
    ed, pd = basis_tangents(k_max, seg0.M, seg0.mesh)
    traj = integrate(
        q0, T, schedule, params, scheme, (ed, pd), workers=workers, batch_size=batch_size
    )
    qT = traj.final
    ed, pd = traj.tangents
    back = qT.regrid(q0.mesh, q0.M)
    drift = float(max(np.max(np.abs(back.eta - q0.eta)), np.max(np.abs(back.phi - q0.phi))))
    if periodicity_tol is not None and drift > periodicity_tol:
        raise ValueError(f"base state is not periodic: drift {drift:.3e} > {periodicity_tol:.1e}")
    if not qT.mesh.is_identity:
        ed = spectral.regrid(ed, qT.mesh, IDENTITY_MAP, M_end)
        pd = spectral.regrid(pd, qT.mesh, IDENTITY_MAP, M_end)
    J = fourier_rows(ed, pd)
    return MonodromyBlock(J, M_end, T, k_max, params, {"drift": drift, "scheme": scheme})


def zero_amplitude_reference(k_max: int, M: int, T: float, params: PhysParams | None = None) -> MonodromyBlock:
    """Exact monodromy block of the flat rest state."""
    params = params or PhysParams()
    g = params.g
    J = np.zeros((2 * M - 4, 4 * k_max))
    for k in range(1, k_max + 1):
        w = float(params.omega(k))
        c, s = np.cos(w * T), np.sin(w * T)
        F = np.array(
            [
                [c, 0, (w / g) * s, 0],
                [0, c, 0, (w / g) * s],
                [-(g / w) * s, 0, c, 0],
                [0, -(g / w) * s, 0, c],
            ]
        )
        j = 4 * (k - 1)
        J[j : j + 4, j : j + 4] = F
    return MonodromyBlock(J, M, T, k_max, params, {"reference": True})


def mean_wave_number(z: np.ndarray, params: PhysParams | None = None) -> float:
    """Weighted mean Fourier index of a coordinate vector of length ``4K``."""
    z = np.asarray(z)
    params = params or PhysParams()
    w = mu_weights(z.size // 4, params) * np.abs(z) ** 2
    tot = w.sum()
    if not tot > 0:
        raise ValueError("mean wave number of a zero vector is undefined")
    return float(wave_index(z.size) @ w / tot)


def parity_of(z: np.ndarray, params: PhysParams | None = None):
    """``(bit, mixing)``: 1 if the weighted mass on sine components exceeds
    that on cosine components; ``mixing`` is the smaller over the larger."""
    z = np.asarray(z)
    params = params or PhysParams()
    w = mu_weights(z.size // 4, params) * np.abs(z) ** 2
    m = np.arange(z.size) % 4
    even = w[(m == 0) | (m == 2)].sum()
    odd = w[(m == 1) | (m == 3)].sum()
    big = max(even, odd)
    return int(odd > even), float(min(even, odd) / big) if big > 0 else 0.0


@dataclass
class FloquetRecord:
    lam: complex
    kmean: float
    parity: int
    err: float
    z: np.ndarray = field(repr=False)
    mixing: float = 0.0
    jordan: bool = False

    @property
    def modulus(self) -> float:
        return float(abs(self.lam))

    @property
    def sigma(self) -> float:
        """Phase in ``(-pi, pi]``."""
        s = float(np.angle(self.lam))
        return np.pi if s == -np.pi else s


# --------------------------------------------------------------------------
# eigen-analysis


def _parity_indices(n):
    m = np.arange(n) % 4
    return np.flatnonzero((m == 0) | (m == 2)), np.flatnonzero((m == 1) | (m == 3))


def parity_coupling(J: np.ndarray) -> float:
    """Largest entry coupling the even and odd subspaces (relative)."""
    n = J.shape[1]
    ev, od = _parity_indices(n)
    ev_r, od_r = _parity_indices(J.shape[0])
    c = max(np.max(np.abs(J[np.ix_(ev_r, od)])), np.max(np.abs(J[np.ix_(od_r, ev)])))
    return float(c / max(np.max(np.abs(J)), 1e-300))


def _clusters(lam, tol):
    """Group eigenvalues closer than ``tol`` (single linkage)."""
    order = np.argsort(lam.real)
    groups = []
    used = np.zeros(lam.size, bool)
    for i in order:
        if used[i]:
            continue
        grp = [i]
        used[i] = True
        k = 0
        while k < len(grp):
            near = np.flatnonzero((~used) & (np.abs(lam - lam[grp[k]]) < tol))
            used[near] = True
            grp.extend(near.tolist())
            k += 1
        groups.append(np.array(sorted(grp)))
    return groups


def _canonical_cluster(A, w, kidx, center, size, real):
    """Basis of the invariant subspace for eigenvalues near ``center``
    made of vectors with the most concentrated wave numbers."""
    r = 1e-6 * max(1.0, abs(center))
    if real:
        T, Z, sdim = sla.schur(A, output="real", sort=lambda x, y: abs(complex(x, y) - center) < r)
    else:
        T, Z, sdim = sla.schur(A.astype(complex), output="complex", sort=lambda x: abs(x - center) < r)
    if sdim != size:
        return None
    # a defective (Jordan) cluster has no eigenbasis to rotate; leave it
    S = T[:sdim, :sdim]
    if np.max(np.abs(S - np.diag(np.diag(S)))) > 1e3 * EPS * max(1.0, np.max(np.abs(A))):
        return None
    Zc = Z[:, :sdim]
    B = (Zc.conj().T * w) @ Zc
    Kw = (Zc.conj().T * (w * kidx)) @ Zc
    B = 0.5 * (B + B.conj().T)
    Kw = 0.5 * (Kw + Kw.conj().T)
    _, Y = sla.eigh(Kw, B)
    V = Zc @ Y
    num = np.einsum("ij,ij->j", V.conj() * w[:, None], A @ V)
    den = np.einsum("ij,ij->j", V.conj() * w[:, None], V).real
    return num / den, V


def _eig_block(A, w, kidx, cluster_tol):
    lam, V = np.linalg.eig(A)
    if cluster_tol and A.shape[0] > 1:
        done = set()
        for grp in _clusters(lam, cluster_tol):
            if grp.size < 2 or tuple(grp) in done:
                continue
            center = lam[grp].mean()
            if abs(center.imag) < cluster_tol:
                res = _canonical_cluster(A, w, kidx, center.real, grp.size, True)
                if res is not None:
                    lam[grp], V[:, grp] = res
                done.add(tuple(grp))
            elif center.imag > 0:
                res = _canonical_cluster(A, w, kidx, center, grp.size, False)
                if res is None:
                    continue
                lam_c, V_c = res
                lam[grp], V[:, grp] = lam_c, V_c
                # conjugate partner cluster gets the conjugate vectors
                partner = _clusters(np.concatenate([lam, np.conj(lam_c)]), cluster_tol)
                target = [g for g in partner if np.any(g >= lam.size)]
                if target:
                    mates = [i for i in target[0] if i < lam.size and i not in grp]
                    if len(mates) == grp.size:
                        mates = sorted(mates, key=lambda i: abs(lam[i] - np.conj(center)))
                        lam[mates] = np.conj(lam_c)
                        V[:, mates] = np.conj(V_c)
                        done.add(tuple(sorted(mates)))
    return lam, V


def eigen_spectrum(
    block: MonodromyBlock,
    n_keep: int | None = None,
    *,
    split_parity: str | bool = "auto",
    cluster_tol: float = 1e-9,
    parity_tol: float = 1e-8,
) -> list[FloquetRecord]:
    """Eigenpairs of the leading square block sorted by mean wave number.

    Parameters
    ----------
    n_keep : int, optional
        Number of records returned; extended by one when the cut would
        separate a complex-conjugate pair.
    split_parity : {"auto", True, False}
        Diagonalize the even and odd subspaces separately.  ``"auto"`` does
        so when their coupling is below ``parity_tol``.
    cluster_tol : float
        Eigenvalues closer than this are treated as one multiple eigenvalue;
        the basis of its eigenspace is chosen to diagonalize the wave-number
        weighting so that ``<k>`` is well defined.
    """
    J = block.J
    n = block.n
    A = J[:n, :n]
    if not np.all(np.isfinite(A)):
        raise np.linalg.LinAlgError("monodromy block has non-finite entries")
    w_all = block.weights()
    w = w_all[:n]
    kidx = wave_index(n)
    if split_parity == "auto":
        split = parity_coupling(J) < parity_tol
    else:
        split = bool(split_parity)
    lam = np.empty(n, complex)
    V = np.zeros((n, n), complex)
    try:
        if split:
            pos = 0
            for idx in _parity_indices(n):
                l, v = _eig_block(A[np.ix_(idx, idx)], w[idx], kidx[idx], cluster_tol)
                lam[pos : pos + idx.size] = l
                V[idx, pos : pos + idx.size] = v
                pos += idx.size
        else:
            lam, V = _eig_block(A, w, kidx, cluster_tol)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"eigen-decomposition failed ({exc}); 1-norm condition estimate {np.linalg.cond(A, 1):.3e}"
        ) from exc

    records = []
    for j in range(n):
        z = V[:, j]
        nz = np.sqrt(np.sum(w * np.abs(z) ** 2))
        z = z / nz
        resid = J @ z
        resid[:n] -= lam[j] * z
        err = float(np.sqrt(np.sum(w_all * np.abs(resid) ** 2)))
        p, mix = parity_of(z, block.params)
        records.append(FloquetRecord(complex(lam[j]), mean_wave_number(z, block.params), p, err, z, mix))
    records = sort_records(records)
    if n_keep is not None and n_keep < len(records):
        kept = records[:n_keep]
        last = kept[-1]
        conj = np.conj(last.lam)
        tol = max(cluster_tol, 1e-12)
        # keep conjugate pairs together; counting handles repeated multipliers
        same = sum(abs(r.lam - last.lam) < tol for r in kept)
        mates = sum(abs(r.lam - conj) < tol for r in kept)
        if abs(last.lam.imag) > tol and mates < same:
            for r in records[n_keep:]:
                if abs(r.lam - conj) < tol:
                    kept.append(r)
                    break
        records = kept
    return records


def sort_records(records, tie_tol: float = 1e-8):
    """Ascending ``<k>``; near-ties put odd before even, then ``sigma``
    descending."""
    recs = sorted(records, key=lambda r: r.kmean)
    out, grp = [], []
    for r in recs:
        if grp and r.kmean - grp[0].kmean > tie_tol:
            out.extend(sorted(grp, key=lambda s: (-s.parity, -s.sigma)))
            grp = []
        grp.append(r)
    out.extend(sorted(grp, key=lambda s: (-s.parity, -s.sigma)))
    return out


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class ClusterReport:
    size: int
    members: list
    pairs: list
    reciprocity: float
    split: float
    pattern: str


def unit_one_cluster(records, radius: float | None = None) -> ClusterReport:
    """Locate the multipliers near 1 produced by the time- and
    space-translation symmetries and flag them as Jordan artifacts."""
    radius = 100.0 * np.sqrt(EPS) if radius is None else radius
    members = [i for i, r in enumerate(records) if abs(r.lam - 1.0) < radius]
    for i in members:
        records[i].jordan = True
    lams = [records[i].lam for i in members]
    pairs, worst = _best_pairing(members, lams)
    split = max((abs(l - 1.0) for l in lams), default=0.0)
    if not lams:
        pattern = "empty"
    elif split <= 10 * EPS:
        pattern = "unsplit"
    elif all(abs(l.imag) <= 10 * EPS for l in lams):
        pattern = "real-axis"
    elif all(abs(l.imag) > 10 * EPS for l in lams):
        pattern = "conjugate-pair"
    else:
        pattern = "mixed"
    return ClusterReport(len(members), members, pairs, worst, float(split), pattern)


def _best_pairing(idx, lams):
    if len(lams) < 2:
        return [], 0.0
    best, best_val = None, np.inf
    m = len(lams)
    if m % 2 == 0 and m <= 10:
        for pairing in _pairings(list(range(m))):
            val = max(abs(lams[a] * lams[b] - 1.0) for a, b in pairing)
            if val < best_val:
                best, best_val = pairing, val
    else:
        rest = list(range(m))
        best = []
        while len(rest) > 1:
            a = rest.pop(0)
            b = min(rest, key=lambda j: abs(lams[a] * lams[j] - 1.0))
            rest.remove(b)
            best.append((a, b))
        best_val = max(abs(lams[a] * lams[b] - 1.0) for a, b in best)
    return [(idx[a], idx[b]) for a, b in best], float(best_val)


def _pairings(items):
    if not items:
        yield []
        return
    a = items[0]
    for i in range(1, len(items)):
        b = items[i]
        rest = items[1:i] + items[i + 1 :]
        for p in _pairings(rest):
            yield [(a, b)] + p


def stability_verdict(records, threshold: float = 1e-5) -> bool:
    """True when every non-Jordan multiplier lies within ``threshold`` of
    the unit circle."""
    return all(abs(r.modulus - 1.0) <= threshold for r in records if not r.jordan)


def symmetry_eigenfunctions(
    q0: SurfaceState,
    T: float,
    schedule: MeshSchedule,
    params: PhysParams,
    scheme: str = "rk8",
    verify: bool = True,
    tol: float = 1e-6,
):
    """Time and space derivatives of the periodic solution at ``t = 0``.

    Both are fixed by the monodromy operator.  Returns ``(p0, p1, residuals)``
    with each ``p`` an ``(eta_dot, phi_dot)`` pair on the grid of ``q0`` and
    ``residuals`` the relative defects ``|E p - p| / |p|`` (``None`` when
    not verified or when ``p`` vanishes).
    """
    ev = Evaluator(q0, params)
    p0 = ev.rhs()
    dxi = q0.mesh.dxi(spectral.nodes(q0.M))
    p1 = (spectral.derivative(q0.eta) / dxi, spectral.derivative(q0.phi) / dxi)
    res = [None, None]
    norms = [max(np.max(np.abs(p[0])), np.max(np.abs(p[1]))) for p in (p0, p1)]
    if verify and max(norms) > 0:
        ed = np.column_stack([p0[0], p1[0]])
        pd = np.column_stack([p0[1], p1[1]])
        traj = integrate(q0, T, schedule, params, scheme, (ed, pd))
        fe, fp = traj.tangents
        if traj.final.M != q0.M or traj.final.mesh != q0.mesh:
            fe = spectral.regrid(fe, traj.final.mesh, q0.mesh, q0.M)
            fp = spectral.regrid(fp, traj.final.mesh, q0.mesh, q0.M)
        for i in range(2):
            if norms[i] > 0:
                d = max(np.max(np.abs(fe[:, i] - ed[:, i])), np.max(np.abs(fp[:, i] - pd[:, i])))
                res[i] = float(d / norms[i])
                if res[i] > tol:
                    log.warning("symmetry eigenfunction %d defect %.3e exceeds %.1e", i, res[i], tol)
    return p0, p1, res


@dataclass
class SpectrumResult:
    records: list
    block: MonodromyBlock
    converged: bool
    log: list
    cluster: ClusterReport | None = None

    @property
    def stable(self) -> bool:
        return stability_verdict(self.records)


def default_sizes(n_keep: int):
    n = 4 * int(np.ceil(2 * n_keep / 4))
    M = 2 * int(np.ceil(0.75 * n))
    return n, M


def run_algorithm1(
    q0: SurfaceState,
    T: float,
    params: PhysParams,
    n_keep: int,
    *,
    M: int | None = None,
    n: int | None = None,
    N: int = 256,
    tol: float = 1e-8,
    max_refinements: int = 2,
    scheme: str = "rk8",
    workers: int = 1,
    batch_size: int | None = None,
    growth: float = 1.5,
) -> SpectrumResult:
    """Assemble, diagonalize and sort; refine ``M``, ``n`` and the step
    count by ``growth`` until the first ``n_keep`` residuals are below
    ``tol`` or the refinement budget is spent."""
    n0, M0 = default_sizes(n_keep)
    n = n or n0
    M = M or max(M0, 2 * ((3 * n // 2 + 1) // 2))
    msgs = []
    if not q0.mesh.is_identity:
        q0 = q0.regrid(IDENTITY_MAP)
    for attempt in range(max_refinements + 1):
        k_max = n // 4
        q = SurfaceState(spectral.resample(q0.eta, M), spectral.resample(q0.phi, M))
        block = assemble_monodromy(
            q, T, k_max, MeshSchedule.uniform(M, N), params, scheme, workers=workers, batch_size=batch_size
        )
        recs = eigen_spectrum(block, n_keep)
        worst = max(r.err for r in recs[:n_keep])
        msgs.append(f"M={M} n={n} N={N}: max residual of first {n_keep} = {worst:.3e}")
        if worst < tol:
            rep = unit_one_cluster(recs)
            return SpectrumResult(recs, block, True, msgs, rep)
        if attempt == max_refinements:
            break
        n = 4 * int(np.ceil(growth * n / 4))
        M = 2 * int(np.ceil(growth * M / 2))
        N = int(np.ceil(growth * N))
    rep = unit_one_cluster(recs)
    msgs.append("refinement budget exhausted; partial result")
    return SpectrumResult(recs, block, False, msgs, rep)
