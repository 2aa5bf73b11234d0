"""Free-surface Euler equations, their linearization and diagnostics.

Nonlinear system (surface variables, ``P`` removes the x-mean)::

    eta_t = G phi
    phi_t = P[v eta_t - u^2/2 - v^2/2 - g eta + tension * d/dx(eta_x / sqrt(1 + eta_x^2))]

Linearized system about ``(eta, phi)``: the perturbed velocity potential
has surface trace ``psi = phi_dot - v eta_dot``, so with ``Phi_dot`` the
harmonic extension of ``psi``::

    u_dot = Phi_dot_x + phi_xy eta_dot,    v_dot = Phi_dot_y - phi_xx eta_dot
    eta_dot_t = G psi - d/dx(eta_dot u)
    phi_dot_t = P[v_dot eta_t + v eta_dot_t - u u_dot - v v_dot - g eta_dot
                  + tension * d/dx(eta_dot_x / (1 + eta_x^2)^(3/2))]

The interior second derivatives ``phi_xx`` and ``phi_xy`` on the surface
follow from differentiating the traces ``u(x)`` and ``v(x)`` along the
surface and using ``phi_xx + phi_yy = 0``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple

import numpy as np

from . import spectral
from .dno import SurfaceGeometry, apply_dno, assemble_kernels, velocities_from
from .state import PhysParams, SurfaceState


def x_derivative(f: np.ndarray, dxi: np.ndarray) -> np.ndarray:
    """d/dx of nodal values on a mapped grid (chain rule through ``xi``)."""
    df = spectral.derivative(f)
    return df / (dxi if df.ndim == 1 else dxi[:, None])


def project_mean(f: np.ndarray, dxi: np.ndarray) -> np.ndarray:
    """Remove the x-average (trapezoid weights ``xi'/M``)."""
    w = spectral.x_mean_weights(dxi)
    # shifting by the first sample makes constants map to zero exactly
    ref = f[0]
    return f - ref - (w @ (f - ref)) / w.sum()


class Evaluator:
    """Right-hand sides at one base state; kernels assembled once and shared
    by the nonlinear rate and any number of tangent columns."""

    def __init__(self, q: SurfaceState, params: PhysParams, *, workers: int = 1, **dno_kw):
        self.q = q
        self.params = params
        self.workers = max(1, int(workers))
        self.geom = SurfaceGeometry(q.eta, q.mesh, params.depth)
        self.kernels = assemble_kernels(self.geom, **dno_kw)
        self.dxi = self.geom.dxi
        self._base = None

    def dno(self, phi):
        return apply_dno(self.geom, self.kernels, phi)

    def _dx(self, f):
        return x_derivative(f, self.dxi)

    def base(self):
        """Cached surface quantities of the base state."""
        if self._base is None:
            q, p = self.q, self.params
            gphi = self.dno(q.phi)
            u, v = velocities_from(self.geom, q.phi, gphi)
            ex = self.geom.eta_x
            eta_t = gphi
            bern = v * eta_t - 0.5 * (u * u + v * v) - p.g * q.eta
            if p.tension:
                bern = bern + p.tension * self._dx(ex / np.sqrt(1.0 + ex * ex))
            phi_t = project_mean(bern, self.dxi)
            self._base = dict(gphi=gphi, u=u, v=v, ex=ex, eta_t=eta_t, phi_t=phi_t)
        return self._base

    def rhs(self):
        b = self.base()
        return b["eta_t"], b["phi_t"]

    def second_derivatives(self):
        """``(phi_xx, phi_xy)`` on the surface from the velocity traces."""
        b = self.base()
        if "pxx" not in b:
            ux, vx, ex = self._dx(b["u"]), self._dx(b["v"]), b["ex"]
            den = 1.0 + ex * ex
            b["pxx"] = (ux - ex * vx) / den
            b["pxy"] = (vx + ex * ux) / den
        return b["pxx"], b["pxy"]

    def _linearized(self, eta_d, phi_d):
        b = self.base()
        p = self.params
        col = (lambda a: a) if eta_d.ndim == 1 else (lambda a: a[:, None])
        u, v, ex, eta_t = col(b["u"]), col(b["v"]), col(b["ex"]), col(b["eta_t"])
        pxx, pxy = self.second_derivatives()
        pxx, pxy = col(pxx), col(pxy)
        psi = phi_d - v * eta_d
        gpsi = self.dno(psi)
        dpx, dpy = velocities_from(self.geom, psi, gpsi)
        u_d = dpx + pxy * eta_d
        v_d = dpy - pxx * eta_d
        eta_d_t = gpsi - self._dx(eta_d * u)
        bern = v_d * eta_t + v * eta_d_t - u * u_d - v * v_d - p.g * eta_d
        if p.tension:
            bern = bern + p.tension * self._dx(self._dx(eta_d) / (1.0 + ex * ex) ** 1.5)
        return eta_d_t, project_mean(bern, self.dxi)

    def rhs_linearized(self, eta_d, phi_d, batch_size: int | None = None):
        """Linearized rates for one tangent ``(M,)`` or a batch ``(M, b)``.

        Columns are split into batches of ``batch_size`` and evaluated on
        ``workers`` threads; per-column arithmetic does not depend on the
        partition.
        """
        eta_d = np.asarray(eta_d, dtype=float)
        phi_d = np.asarray(phi_d, dtype=float)
        if eta_d.ndim == 1 or batch_size is None or batch_size >= eta_d.shape[1]:
            if self.workers == 1 or eta_d.ndim == 1:
                return self._linearized(eta_d, phi_d)
            batch_size = -(-eta_d.shape[1] // self.workers)
        n = eta_d.shape[1]
        parts = [slice(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as ex:
                res = list(ex.map(lambda s: self._linearized(eta_d[:, s], phi_d[:, s]), parts))
        else:
            res = [self._linearized(eta_d[:, s], phi_d[:, s]) for s in parts]
        return np.hstack([r[0] for r in res]), np.hstack([r[1] for r in res])


def rhs_nonlinear(q: SurfaceState, params: PhysParams, **kw):
    """``(eta_t, phi_t)`` of the free-surface Euler equations."""
    return Evaluator(q, params, **kw).rhs()


def rhs_linearized(q: SurfaceState, eta_d, phi_d, params: PhysParams, **kw):
    """Linearized rates of the perturbation ``(eta_d, phi_d)`` about ``q``."""
    return Evaluator(q, params, **kw).rhs_linearized(eta_d, phi_d)


def energy(q: SurfaceState, params: PhysParams) -> float:
    """Kinetic plus gravitational plus surface energy over one period."""
    ev = Evaluator(q, params)
    gphi = ev.dno(q.phi)
    ex = ev.geom.eta_x
    w = spectral.TWO_PI * ev.dxi / q.M
    eta = q.eta - (spectral.x_mean_weights(ev.dxi) @ q.eta if params.finite_depth else 0.0)
    dens = 0.5 * q.phi * gphi + 0.5 * params.g * eta * eta
    if params.tension:
        dens = dens + params.tension * (np.sqrt(1.0 + ex * ex) - 1.0)
    return float(w @ dens)


def crest_acceleration(q: SurfaceState, params: PhysParams, rest_tol: float = 1e-10) -> float:
    """Downward acceleration of the crest particle at a rest state, over g.

    At rest ``u = v = 0`` so ``eta_tt = G[phi_t]`` with ``phi_t`` from the
    nonlinear equations.
    """
    if np.max(np.abs(q.phi)) > rest_tol:
        raise ValueError(
            f"state is not at rest: max|phi| = {np.max(np.abs(q.phi)):.3e} > {rest_tol:.1e}"
        )
    ev = Evaluator(q, params)
    _, phi_t = ev.rhs()
    eta_tt = ev.dno(phi_t)
    i = int(np.argmax(q.eta))
    return float(-eta_tt[i] / params.g)


class WaveHeight(NamedTuple):
    full: float
    half: float


def wave_height(q: SurfaceState, refine: int = 8) -> WaveHeight:
    """Crest-to-trough height (``full``) and half of it (``half``).

    Extremes are located on the trigonometric interpolant sampled ``refine``
    times more finely than the grid.
    """
    eta = spectral.resample(q.eta, refine * q.M) if refine > 1 else q.eta
    full = float(eta.max() - eta.min())
    return WaveHeight(full, 0.5 * full)
