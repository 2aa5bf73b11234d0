"""Fixed-step explicit Runge-Kutta integration over a mesh schedule.

The base state and any tangent columns advance together with the same
stages, so every stage assembles the boundary-integral kernels once.  The
tangents are the Runge-Kutta derivative of the step map applied to the
linearized equations; they match finite differences of the discrete flow
up to spatial truncation error.
After each step both are filtered; at segment boundaries both are regridded.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853, RK45

from . import spectral
from .dynamics import Evaluator
from .state import PhysParams, SurfaceState
from .spectral import MeshSchedule

SCHEMES = {
    "rk5": (RK45.A, RK45.B, RK45.C),
    "rk8": (DOP853.A, DOP853.B, DOP853.C),
}


class BlowUpError(RuntimeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite state at step {step} (t = {t:.6g})")
        self.step = step
        self.t = t


@dataclass
class Trajectory:
    """Result of :func:`evolve`: segment-boundary checkpoints and final state."""

    q0: SurfaceState
    horizon: float
    schedule: MeshSchedule
    params: PhysParams
    scheme: str
    checkpoints: list = field(default_factory=list)
    tangents: tuple | None = None

    @property
    def final(self) -> SurfaceState:
        return self.checkpoints[-1][1]

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.checkpoints])

    def final_rate(self) -> tuple[np.ndarray, np.ndarray]:
        """``(eta_t, phi_t)`` at the final time."""
        return Evaluator(self.final, self.params).rhs()


def _tableau(scheme):
    try:
        return SCHEMES[scheme.lower()]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}") from None


def _regrid_pair(a, b, src, dst, M_new):
    if src == dst and a.shape[0] == M_new:
        return a, b
    n = a.shape[1] if a.ndim == 2 else None
    stack = np.concatenate([a.reshape(a.shape[0], -1), b.reshape(b.shape[0], -1)], axis=1)
    out = spectral.regrid(stack, src, dst, M_new)
    k = stack.shape[1] // 2
    ra, rb = out[:, :k], out[:, k:]
    if n is None:
        ra, rb = ra[:, 0], rb[:, 0]
    return ra, rb


def integrate(
    q0: SurfaceState,
    horizon: float,
    schedule: MeshSchedule,
    params: PhysParams,
    scheme: str = "rk8",
    tangents: tuple[np.ndarray, np.ndarray] | None = None,
    *,
    workers: int = 1,
    batch_size: int | None = None,
    dno_options: dict | None = None,
) -> Trajectory:
    """Advance the base state (and optional tangent batch) to ``horizon``.

    Parameters
    ----------
    q0 : SurfaceState
        Initial state; regridded to the first segment if necessary.
    tangents : (eta_dot, phi_dot), optional
        Arrays of shape ``(M, b)`` on the grid of ``q0``.
    workers, batch_size
        Tangent columns are split in batches evaluated concurrently.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    # overflow on the way to a blow-up is reported as BlowUpError below
    with np.errstate(over="ignore", invalid="ignore"):
        return _integrate(q0, horizon, schedule, params, scheme, tangents, workers, batch_size, dno_options)


def _integrate(q0, horizon, schedule, params, scheme, tangents, workers, batch_size, dno_options):
    A, B, C = _tableau(scheme)
    s = len(B)
    dno_options = dno_options or {}
    seg0 = schedule.segments[0]
    eta, phi = _regrid_pair(q0.eta, q0.phi, q0.mesh, seg0.mesh, seg0.M)
    with_tan = tangents is not None
    if with_tan:
        ed, pd = (np.array(t, dtype=float) for t in tangents)
        if ed.ndim == 1:
            ed, pd = ed[:, None], pd[:, None]
        ed, pd = _regrid_pair(ed, pd, q0.mesh, seg0.mesh, seg0.M)
    mesh = seg0.mesh
    traj = Trajectory(q0, horizon, schedule, params, scheme)
    t = 0.0
    traj.checkpoints.append((t, SurfaceState(eta, phi, mesh)))
    step = 0
    for li, seg in enumerate(schedule.segments):
        if li > 0:
            eta, phi = _regrid_pair(eta, phi, mesh, seg.mesh, seg.M)
            if with_tan:
                ed, pd = _regrid_pair(ed, pd, mesh, seg.mesh, seg.M)
            mesh = seg.mesh
        dt = seg.theta * horizon / seg.N
        for _ in range(seg.N):
            ks, kt = [], []
            for i in range(s):
                ye, yp = eta.copy(), phi.copy()
                if with_tan:
                    te, tp = ed.copy(), pd.copy()
                for j in range(i):
                    a = dt * A[i, j]
                    if a:
                        ye += a * ks[j][0]
                        yp += a * ks[j][1]
                        if with_tan:
                            te += a * kt[j][0]
                            tp += a * kt[j][1]
                if not (np.all(np.isfinite(ye)) and np.all(np.isfinite(yp))):
                    raise BlowUpError(step + 1, t + C[i] * dt)
                ev = Evaluator(SurfaceState(ye, yp, mesh), params, workers=workers, **dno_options)
                ks.append(ev.rhs())
                if with_tan:
                    kt.append(ev.rhs_linearized(te, tp, batch_size=batch_size))
            for i in range(s):
                b = dt * B[i]
                if b:
                    eta = eta + b * ks[i][0]
                    phi = phi + b * ks[i][1]
                    if with_tan:
                        ed = ed + b * kt[i][0]
                        pd = pd + b * kt[i][1]
            eta, phi = spectral.filter36(eta), spectral.filter36(phi)
            if with_tan:
                ed, pd = spectral.filter36(ed), spectral.filter36(pd)
            step += 1
            t += dt
            if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(phi))):
                raise BlowUpError(step, t)
            if with_tan and not (np.all(np.isfinite(ed)) and np.all(np.isfinite(pd))):
                raise BlowUpError(step, t)
        traj.checkpoints.append((t, SurfaceState(eta, phi, mesh)))
    if with_tan:
        traj.tangents = (ed, pd)
    return traj


def evolve(q0, horizon, schedule, params, scheme="rk8", **kw) -> Trajectory:
    """Integrate the nonlinear equations over ``[0, horizon]``."""
    return integrate(q0, horizon, schedule, params, scheme, **kw)


def evolve_tangents(base: Trajectory, eta_dot, phi_dot, **kw):
    """Evolve a batch of tangents along ``base``; returns the final
    ``(eta_dot, phi_dot)`` on the last segment's grid.

    The base trajectory is recomputed stage by stage alongside the
    tangents, which is cheap next to the kernel work the two share.
    """
    traj = integrate(
        base.q0, base.horizon, base.schedule, base.params, base.scheme, (eta_dot, phi_dot), **kw
    )
    return traj.tangents
