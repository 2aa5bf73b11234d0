"""Dirichlet-Neumann operator by a double-layer boundary integral method.

The free surface ``zeta(alpha) = xi(alpha) + 1j*eta(xi(alpha))`` carries a
dipole density ``mu`` solving

    mu/2 + (1/M) sum_j K(alpha_i, alpha_j) mu_j = phi_i

(trapezoidal rule).  With ``gamma = mu'`` the normal derivative is

    G phi = (H gamma / 2 + (1/M) sum_j G(alpha_i, alpha_j) gamma_j) / xi'(alpha_i).

In finite depth the bottom sits at ``y = 0`` and the mirror image of the
surface supplies the subtracted kernels ``K2, G2``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, gmres

from . import spectral
from .spectral import IDENTITY_MAP, MeshMap


class DNOError(RuntimeError):
    """Kernel assembly or dipole solve failed."""


@dataclass(frozen=True)
class SurfaceGeometry:
    """Discretized surface: nodal elevation on the grid of ``mesh``."""

    eta: np.ndarray
    mesh: MeshMap = IDENTITY_MAP
    depth: float = np.inf
    alpha: np.ndarray = field(init=False, repr=False)
    dxi: np.ndarray = field(init=False, repr=False)
    zeta: np.ndarray = field(init=False, repr=False)
    dzeta: np.ndarray = field(init=False, repr=False)
    d2zeta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim != 1:
            raise ValueError("eta must be one-dimensional")
        if not np.all(np.isfinite(eta)):
            raise DNOError("surface elevation contains non-finite values")
        if np.isfinite(self.depth) and not eta.min() > 0:
            raise DNOError(
                f"free surface touches the bottom: min eta = {eta.min():.3e} "
                "(finite depth stores total height above y = 0)"
            )
        M = eta.size
        alpha = spectral.nodes(M)
        eta_a = spectral.derivative(eta)
        eta_aa = spectral.derivative(eta_a)
        xi = self.mesh.xi(alpha)
        dxi = self.mesh.dxi(alpha)
        d2xi = self.mesh.d2xi(alpha)
        dzeta = dxi + 1j * eta_a
        if np.any(np.abs(dzeta) == 0):
            i = int(np.argmin(np.abs(dzeta)))
            raise DNOError(f"degenerate parametrization: zeta'(alpha_{i}) = 0")
        for name, val in [
            ("eta", eta),
            ("alpha", alpha),
            ("dxi", dxi),
            ("zeta", xi + 1j * eta),
            ("dzeta", dzeta),
            ("d2zeta", d2xi + 1j * eta_aa),
        ]:
            object.__setattr__(self, name, val)

    @property
    def M(self) -> int:
        return self.eta.size

    @property
    def finite_depth(self) -> bool:
        return bool(np.isfinite(self.depth))

    @property
    def eta_x(self) -> np.ndarray:
        return self.dzeta.imag / self.dxi


@dataclass(frozen=True)
class KernelPair:
    """Discrete operators of the boundary integral method.

    ``K`` and ``G`` are the raw kernel samples.  ``K_op`` and ``G_op`` are
    the matrices actually applied (``K/M`` or ``G/M`` plus the exact action
    of any subtracted reference kernel).  ``lu`` factors ``I/2 + K_op``.
    """

    K: np.ndarray
    G: np.ndarray
    K_op: np.ndarray
    G_op: np.ndarray
    lu: tuple | None
    solver: str = "lu"


def _cot(z):
    return 1.0 / np.tan(z)


@lru_cache(maxsize=16)
def _flat_cot(M: int) -> np.ndarray:
    """``cot((alpha_i - alpha_j)/2)`` off the diagonal, zero on it."""
    a = spectral.nodes(M)
    d = 0.5 * np.subtract.outer(a, a)
    np.fill_diagonal(d, 1.0)
    c = _cot(d)
    np.fill_diagonal(c, 0.0)
    c.setflags(write=False)
    return c


def _rows(geom: SurfaceGeometry, rows: slice):
    z, dz = geom.zeta, geom.dzeta
    half = 0.5 * (z[rows, None] - z[None, :])
    i = np.arange(geom.M)[rows]
    off = i[:, None] != np.arange(geom.M)[None, :]
    half[~off] = 1.0
    c = _cot(half)
    c[~off] = 0.0
    flat = _flat_cot(geom.M)[rows]
    K = np.imag(0.5 * dz[None, :] * c)
    G = np.real(0.5 * dz[rows, None] * c) - 0.5 * flat
    diag = geom.d2zeta[rows] / (2.0 * dz[rows])
    K[np.arange(K.shape[0]), i] = -diag.imag
    G[np.arange(G.shape[0]), i] = diag.real
    if geom.finite_depth:
        img = _cot(0.5 * (z[rows, None] - np.conj(z)[None, :]))
        K -= np.imag(0.5 * np.conj(dz)[None, :] * img)
        G -= np.real(0.5 * dz[rows, None] * img)
    return K, G


def _image_reference(M: int, height: float):
    """Flat-bottom image kernels at mean height ``height``: nodal samples and
    the Fourier multipliers of their exact convolution action.

    ``Im{cot(t/2 + ih)/2} = -1/2 - sum q^n cos(nt)`` and
    ``Re{cot(t/2 + ih)/2} = sum q^n sin(nt)`` with ``q = exp(-2h)``.
    """
    a = spectral.nodes(M)
    c = 0.5 * _cot(0.5 * np.subtract.outer(a, a) + 1j * height)
    k = spectral.wavenumbers(M)
    qk = np.exp(-2.0 * height * k)
    mK = -0.5 * qk
    mK[0] = -0.5
    mG = -0.5j * qk
    mG[0] = 0.0
    mG[-1] = 0.0
    return c.imag, c.real, mK, mG


def _circulant(mult: np.ndarray, M: int) -> np.ndarray:
    return spectral.apply_symbol(np.eye(M), mult)


def assemble_kernels(
    geom: SurfaceGeometry,
    *,
    solver: str = "lu",
    image_correction: bool = True,
    workers: int = 1,
) -> KernelPair:
    """Fill the kernel matrices and factor the dipole system.

    Parameters
    ----------
    geom : SurfaceGeometry
    solver : {"lu", "gmres"}
        Dense LU (default) or unpreconditioned GMRES at solve time.
    image_correction : bool
        In finite depth on a uniform grid, subtract the flat-bottom image
        kernel at the mean height and add its exact Fourier action.  The
        image kernel is nearly singular when the depth is small and the
        trapezoidal rule aliases it at order ``exp(-2 h M)``.
    workers : int
        Row blocks assembled concurrently.
    """
    M = geom.M
    if workers > 1 and M >= 256:
        chunks = np.array_split(np.arange(M), workers)
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda c: _rows(geom, slice(c[0], c[-1] + 1)), chunks))
        K = np.vstack([p[0] for p in parts])
        G = np.vstack([p[1] for p in parts])
    else:
        K, G = _rows(geom, slice(None))
    for name, mat in (("K", K), ("G", G)):
        bad = ~np.isfinite(mat)
        if bad.any():
            i, j = map(int, np.argwhere(bad)[0])
            raise DNOError(f"non-finite kernel entry {name}[{i},{j}]")

    K_op = K / M
    G_op = G / M
    if geom.finite_depth and image_correction and geom.mesh.is_identity:
        Kr, Gr, mK, mG = _image_reference(M, float(np.mean(geom.eta)))
        K_op = (K + Kr) / M - _circulant(mK, M)
        G_op = (G + Gr) / M - _circulant(mG, M)

    lu = None
    if solver == "lu":
        A = 0.5 * np.eye(M) + K_op
        lu = sla.lu_factor(A, check_finite=False)
        piv = np.abs(np.diag(lu[0]))
        if not np.all(np.isfinite(piv)) or piv.min() <= np.finfo(float).eps * piv.max():
            rcond = _rcond(A)
            raise DNOError(f"dipole system is singular (reciprocal condition ~ {rcond:.2e})")
    elif solver != "gmres":
        raise ValueError(f"unknown solver {solver!r}")
    return KernelPair(K, G, K_op, G_op, lu, solver)


def _rcond(A):
    lu, _ = sla.lu_factor(A, check_finite=False)
    (gecon,) = sla.get_lapack_funcs(("gecon",), (lu,))
    rc, _ = gecon(lu, np.linalg.norm(A, 1), norm="1")
    return rc


def solve_dipole(
    geom: SurfaceGeometry,
    kernels: KernelPair,
    phi: np.ndarray,
    *,
    tol: float = 1e-13,
    maxiter: int = 400,
) -> np.ndarray:
    """Dipole density for Dirichlet data ``phi`` (shape ``(M,)`` or ``(M, b)``)."""
    phi = np.asarray(phi, dtype=float)
    if kernels.solver == "lu":
        return sla.lu_solve(kernels.lu, phi, check_finite=False)
    M = geom.M
    op = LinearOperator((M, M), matvec=lambda v: 0.5 * v + kernels.K_op @ v, dtype=float)
    cols = phi.reshape(M, -1)
    out = np.empty_like(cols)
    for j in range(cols.shape[1]):
        sol, info = gmres(op, cols[:, j], rtol=tol, atol=0.0, restart=min(M, maxiter), maxiter=maxiter)
        if info != 0:
            raise DNOError(f"GMRES did not converge for column {j} (info={info})")
        out[:, j] = sol
    return out.reshape(phi.shape)


def apply_dno(geom: SurfaceGeometry, kernels: KernelPair, phi: np.ndarray, **kw) -> np.ndarray:
    """Normal derivative ``phi_y - eta_x phi_x`` at the nodes ``xi(alpha_i)``."""
    mu = solve_dipole(geom, kernels, phi, **kw)
    gamma = spectral.derivative(spectral.filter36(mu))
    out = 0.5 * spectral.hilbert(gamma) + kernels.G_op @ gamma
    scale = geom.dxi if out.ndim == 1 else geom.dxi[:, None]
    return out / scale


def velocities_from(geom: SurfaceGeometry, phi: np.ndarray, gphi: np.ndarray):
    """Surface velocities given ``phi`` and its normal derivative."""
    ex = geom.eta_x
    dxi = geom.dxi
    if np.ndim(phi) > 1:
        ex = ex[:, None]
        dxi = dxi[:, None]
    phi_x = spectral.derivative(phi) / dxi
    den = 1.0 + ex * ex
    u = (phi_x - ex * gphi) / den
    v = (ex * phi_x + gphi) / den
    return u, v


def surface_velocities(geom: SurfaceGeometry, phi: np.ndarray, kernels: KernelPair | None = None):
    """Horizontal and vertical fluid velocity at the free surface."""
    if kernels is None:
        kernels = assemble_kernels(geom)
    return velocities_from(geom, phi, apply_dno(geom, kernels, phi))


class DirichletNeumann:
    """Convenience bundle of geometry and assembled kernels."""

    def __init__(self, eta, mesh: MeshMap = IDENTITY_MAP, depth: float = np.inf, **kw):
        self.geom = SurfaceGeometry(np.asarray(eta, dtype=float), mesh, depth)
        self.kernels = assemble_kernels(self.geom, **kw)

    def __call__(self, phi):
        return apply_dno(self.geom, self.kernels, phi)

    def velocities(self, phi, gphi=None):
        if gphi is None:
            gphi = self(phi)
        return velocities_from(self.geom, phi, gphi)
