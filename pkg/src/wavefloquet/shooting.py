"""Overdetermined shooting for standing and traveling waves.

Standing waves are parametrized by their initial Fourier modes::

    eta_hat[k] = c[k]  (k even),   phi_hat[k] = c[k]  (k odd),   c[0] = T

and the residual is the velocity potential at the quarter period, which
vanishes for a symmetric standing wave.  Traveling waves use::

    eta_hat[k] = c[2|k|-1],   phi_hat[k] = +-1j * c[2|k|]   (minus for k < 0)

and compare the state after ``T/M`` with the initial state shifted by one
grid point.  The least-squares objective ``f = r.r/2`` is minimized by a
Levenberg-Marquardt method with variational Jacobians.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from . import spectral
from .dno import DNOError
from .dynamics import project_mean
from .spectral import IDENTITY_MAP, MeshSchedule
from .state import PhysParams, SurfaceState
from .timestep import BlowUpError, integrate

log = logging.getLogger(__name__)

STANDING = "standing"
TRAVELING = "traveling"


class ConfigurationError(ValueError):
    """Parameter vector inconsistent with the grid or family."""


@dataclass(frozen=True)
class AmplitudeConstraint:
    """Extra residual row ``weight * (eta(position, 0) - target)``.

    ``eta`` is measured from the mean level (the mean depth is excluded).
    """

    position: float
    target: float
    weight: float = 1.0


@dataclass(frozen=True)
class ParamVector:
    """Unknowns ``c[0] = T, c[1..n]`` of a shooting problem."""

    c: np.ndarray
    family: str = STANDING
    constraint: AmplitudeConstraint | None = None

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise ConfigurationError(f"need c[0]=T and at least one mode, got shape {c.shape}")
        if not c[0] > 0:
            raise ConfigurationError(f"period c[0] must be positive, got {c[0]!r}")
        if self.family not in (STANDING, TRAVELING):
            raise ConfigurationError(f"unknown family {self.family!r}")
        object.__setattr__(self, "c", c)

    @property
    def T(self) -> float:
        return float(self.c[0])

    @property
    def n(self) -> int:
        return self.c.size - 1

    def with_c(self, c) -> "ParamVector":
        return replace(self, c=np.array(c, dtype=float))

    def with_target(self, target: float) -> "ParamVector":
        if self.constraint is None:
            raise ConfigurationError("no amplitude constraint to retarget")
        return replace(self, constraint=replace(self.constraint, target=float(target)))

    def mode_layout(self):
        """``(eta_modes, phi_modes)``: lists of ``(k, index into c, factor)``
        with ``eta_hat[k] += factor * c[index]`` (and likewise ``phi``)."""
        n = self.n
        if self.family == STANDING:
            eta = [(k, k, 1.0) for k in range(2, n + 1, 2)]
            phi = [(k, k, 1.0) for k in range(1, n + 1, 2)]
        else:
            eta = [(k, 2 * k - 1, 1.0) for k in range(1, (n + 1) // 2 + 1)]
            phi = [(k, 2 * k, 1j) for k in range(1, n // 2 + 1)]
        return eta, phi

    def max_mode(self) -> int:
        eta, phi = self.mode_layout()
        return max([k for k, _, _ in eta + phi])

    def coefficients(self, mean: float = 0.0):
        """Non-negative Fourier modes ``(eta_hat, phi_hat)`` of the initial state."""
        K = self.max_mode()
        eh = np.zeros(K + 1, dtype=complex)
        ph = np.zeros(K + 1, dtype=complex)
        eh[0] = mean
        eta, phi = self.mode_layout()
        for k, i, s in eta:
            eh[k] += s * self.c[i]
        for k, i, s in phi:
            ph[k] += s * self.c[i]
        return eh, ph

    def surface_value(self, position: float) -> float:
        """Initial elevation (about the mean) at ``x = position``."""
        eh, _ = self.coefficients()
        return float(spectral.evaluate_series(eh, np.array([position]))[0])

    def constraint_gradient(self) -> np.ndarray:
        """Derivative of the amplitude row with respect to ``c``."""
        g = np.zeros(self.c.size)
        if self.constraint is None:
            return g
        a, w = self.constraint.position, self.constraint.weight
        eta, _ = self.mode_layout()
        for k, i, s in eta:
            g[i] = w * 2.0 * s * np.cos(k * a)
        return g


def build_initial_state(
    c: ParamVector, M: int, depth: float = np.inf, mesh=IDENTITY_MAP
) -> SurfaceState:
    """Initial surface on an ``M``-point grid mapped by ``mesh``."""
    if c.max_mode() >= M // 2:
        raise ConfigurationError(
            f"{c.n} unknowns need Fourier mode {c.max_mode()} which is not below M/2 = {M // 2}"
        )
    mean = depth if np.isfinite(depth) else 0.0
    eh, ph = c.coefficients(mean)
    x = mesh.xi(spectral.nodes(M))
    return SurfaceState(spectral.evaluate_series(eh, x), spectral.evaluate_series(ph, x), mesh)


def initial_tangents(c: ParamVector, M: int, mesh=IDENTITY_MAP):
    """``d q0 / d c_k`` for ``k = 1..n`` as ``(M, n)`` arrays."""
    x = mesh.xi(spectral.nodes(M))
    ed = np.zeros((M, c.n))
    pd = np.zeros((M, c.n))
    eta, phi = c.mode_layout()
    for k, i, s in eta:
        ed[:, i - 1] = 2.0 * np.real(s * np.exp(1j * k * x))
    for k, i, s in phi:
        pd[:, i - 1] = 2.0 * np.real(s * np.exp(1j * k * x))
    return ed, pd


@dataclass
class ShootingSetup:
    """Discretization shared by all residual evaluations.

    ``schedule`` spans the shooting horizon (``T/4`` for standing waves,
    ``T/M`` for traveling waves); its durations are relative.
    """

    schedule: MeshSchedule
    params: PhysParams = field(default_factory=PhysParams)
    scheme: str = "rk8"
    workers: int = 1
    batch_size: int | None = None

    @property
    def M(self) -> int:
        return self.schedule.M_start

    def horizon(self, c: ParamVector) -> float:
        if c.family == STANDING:
            return c.T / 4.0
        return c.T / self.M

    def check(self, c: ParamVector):
        if c.family == TRAVELING:
            if any(not s.mesh.is_identity for s in self.schedule.segments):
                raise ConfigurationError("traveling waves require a uniform grid")
            if len({s.M for s in self.schedule.segments}) != 1:
                raise ConfigurationError("traveling waves require a fixed grid size")
        seg0 = self.schedule.segments[0]
        build_initial_state(c, seg0.M, self.params.depth, seg0.mesh)


class Evaluation:
    """Residual (and optionally Jacobian) of one parameter vector."""

    def __init__(self, c: ParamVector, setup: ShootingSetup, jacobian: bool):
        setup.check(c)
        self.c = c
        seg0 = setup.schedule.segments[0]
        q0 = build_initial_state(c, seg0.M, setup.params.depth, seg0.mesh)
        tangents = initial_tangents(c, seg0.M, seg0.mesh) if jacobian else None
        traj = integrate(
            q0,
            setup.horizon(c),
            setup.schedule,
            setup.params,
            setup.scheme,
            tangents,
            workers=setup.workers,
            batch_size=setup.batch_size,
        )
        self.trajectory = traj
        qT = traj.final
        if c.family == STANDING:
            r = self._standing(q0, qT, None)
        else:
            r = self._traveling(q0, qT, None, None)
        self.residual = self._append_constraint(r)
        self.J = None
        if jacobian:
            eta_t, phi_t = traj.final_rate()
            ed, pd = traj.tangents
            if c.family == STANDING:
                col0 = 0.25 * self._standing(None, SurfaceState(eta_t, phi_t, qT.mesh), None)
                cols = self._standing(None, None, pd)
            else:
                M = qT.M
                col0 = self._interleave(eta_t, phi_t) / (M * np.sqrt(2 * M))
                e0, p0 = initial_tangents(c, M)
                cols = self._traveling(None, None, (ed, pd), (e0, p0))
            J = np.column_stack([col0, cols])
            if c.constraint is not None:
                J = np.vstack([J, c.constraint_gradient()])
            self.J = J

    @property
    def f(self) -> float:
        return 0.5 * float(self.residual @ self.residual)

    @staticmethod
    def _interleave(a, b):
        out = np.empty((2 * a.shape[0],) + a.shape[1:])
        out[0::2] = a
        out[1::2] = b
        return out

    def _standing(self, q0, qT, tangent_phi):
        mesh = self.trajectory.final.mesh
        dxi = mesh.dxi(spectral.nodes(self.trajectory.final.M))
        phi = qT.phi if tangent_phi is None else tangent_phi
        return project_mean(phi, dxi) / np.sqrt(phi.shape[0])

    def _traveling(self, q0, qT, tangents, tangents0):
        if tangents is None:
            e1, p1, e0, p0 = qT.eta, qT.phi, q0.eta, q0.phi
        else:
            (e1, p1), (e0, p0) = tangents, tangents0
        M = e1.shape[0]
        return self._interleave(e1 - np.roll(e0, 1, axis=0), p1 - np.roll(p0, 1, axis=0)) / np.sqrt(
            2 * M
        )

    def _append_constraint(self, r):
        con = self.c.constraint
        if con is None:
            return r
        return np.append(r, con.weight * (self.c.surface_value(con.position) - con.target))


def residual_standing(c: ParamVector, setup: ShootingSetup) -> np.ndarray:
    """``P phi(x_j, T/4) / sqrt(M)`` plus the optional amplitude row."""
    if c.family != STANDING:
        raise ConfigurationError("residual_standing needs a standing-wave parameter vector")
    return Evaluation(c, setup, False).residual


def residual_traveling(c: ParamVector, setup: ShootingSetup) -> np.ndarray:
    """Interleaved mismatch between ``q(x_j, T/M)`` and ``q(x_{j-1}, 0)``."""
    if c.family != TRAVELING:
        raise ConfigurationError("residual_traveling needs a traveling-wave parameter vector")
    return Evaluation(c, setup, False).residual


def residual(c: ParamVector, setup: ShootingSetup) -> np.ndarray:
    return Evaluation(c, setup, False).residual


def jacobian(c: ParamVector, setup: ShootingSetup) -> np.ndarray:
    """Dense ``dr/dc`` from the variational equations."""
    return Evaluation(c, setup, True).J


# --------------------------------------------------------------------------
# Levenberg-Marquardt


@dataclass
class LMSettings:
    tol_f: float = 1e-26
    tol_step: float = 1e-14
    max_iter: int = 100
    lambda0: float = 1e-3
    factor: float = 4.0
    accept_ratio: float = 0.1
    broyden: bool = True
    d_floor: float = 1e-12


@dataclass
class ShootingResult:
    params: ParamVector
    f: float
    residual: np.ndarray
    nfev: int
    njev: int
    iterations: int
    converged: bool
    message: str
    frozen: int | None = None
    tail_eta: float = np.nan
    tail_phi: float = np.nan
    history: list = field(default_factory=list)

    @property
    def c(self) -> np.ndarray:
        return self.params.c

    @property
    def T(self) -> float:
        return self.params.T


def _tail_amplitudes(c: ParamVector, M: int):
    eh, ph = c.coefficients()
    K = eh.size - 1
    lo = max(1, (3 * K) // 4)
    return float(np.max(np.abs(eh[lo:]))), float(np.max(np.abs(ph[lo:])))


def levenberg_marquardt(
    x0: np.ndarray,
    fun: Callable[[np.ndarray, bool], tuple],
    free: np.ndarray,
    settings: LMSettings,
):
    """Generic damped least-squares loop.

    ``fun(x, want_jac)`` returns ``(r, J or None)`` or raises to signal a
    failed evaluation (treated as a rejected step).
    """
    x = np.array(x0, dtype=float)
    r, J = fun(x, False)
    nfev, njev = 1, 0
    f = 0.5 * float(r @ r)
    lam = settings.lambda0
    stale = True
    history = [f]
    it = 0
    message = "maximum iterations reached"
    while True:
        if f < settings.tol_f:
            message = "objective below tolerance"
            break
        if it >= settings.max_iter:
            break
        if J is None:
            r, J = fun(x, True)
            nfev += 1
            njev += 1
            stale = False
        Jf = J[:, free]
        D = np.maximum(np.einsum("ij,ij->j", Jf, Jf), settings.d_floor)
        aug = np.vstack([Jf, np.diag(np.sqrt(lam * D))])
        rhs = -np.concatenate([r, np.zeros(free.size)])
        delta_f = sla.lstsq(aug, rhs, lapack_driver="gelsd", check_finite=False)[0]
        it += 1
        if not np.all(np.isfinite(delta_f)):
            message = "non-finite step"
            break
        step_norm = float(np.linalg.norm(delta_f))
        if step_norm < settings.tol_step:
            message = "step below tolerance"
            break
        delta = np.zeros_like(x)
        delta[free] = delta_f
        lin = r + Jf @ delta_f
        pred = f - 0.5 * float(lin @ lin)
        try:
            r_new, _ = fun(x + delta, False)
            nfev += 1
            f_new = 0.5 * float(r_new @ r_new)
            ok = np.isfinite(f_new)
        except (BlowUpError, DNOError, FloatingPointError) as exc:
            log.info("rejected step: %s", exc)
            nfev += 1
            ok = False
        rho = (f - f_new) / pred if ok and pred > 0 else -np.inf
        if ok and rho > settings.accept_ratio and f_new <= f:
            if settings.broyden:
                # rank-one secant update; a fresh Jacobian is computed only
                # when an update-based step gets rejected
                J = J + np.outer(r_new - lin, delta) / float(delta @ delta)
                stale = True
            else:
                J = None
            x, r, f = x + delta, r_new, f_new
            lam /= settings.factor
            history.append(f)
        else:
            if stale and settings.broyden:
                J = None
            else:
                lam *= settings.factor
    return x, r, f, nfev, njev, it, message, history


def minimize(
    c0: ParamVector,
    setup: ShootingSetup,
    frozen: int | None = None,
    settings: LMSettings | None = None,
) -> ShootingResult:
    """Minimize ``f = r.r/2`` over the unfrozen entries of ``c``."""
    settings = settings or LMSettings()
    setup.check(c0)
    free = np.array([i for i in range(c0.c.size) if i != frozen], dtype=int)
    if frozen is not None and not (0 <= frozen < c0.c.size):
        raise ConfigurationError(f"frozen index {frozen} out of range")

    def fun(x, want_jac):
        ev = Evaluation(c0.with_c(x), setup, want_jac)
        if not (np.all(np.isfinite(ev.residual))):
            raise FloatingPointError("non-finite residual")
        return ev.residual, ev.J

    x, r, f, nfev, njev, it, message, history = levenberg_marquardt(c0.c, fun, free, settings)
    params = c0.with_c(x)
    tail = _tail_amplitudes(params, setup.M)
    return ShootingResult(
        params,
        f,
        r,
        nfev,
        njev,
        it,
        f < settings.tol_f,
        message,
        frozen,
        tail[0],
        tail[1],
        history,
    )


# --------------------------------------------------------------------------
# continuation


@dataclass
class Family:
    members: list
    parameters: list
    log: list = field(default_factory=list)
    truncated: bool = False


def _param_value(res: ShootingResult, index):
    if index == "amplitude":
        return res.params.constraint.target
    return float(res.c[index])


def continue_family(
    seed: ShootingResult,
    setup: ShootingSetup,
    index,
    step: float,
    steps: int,
    settings: LMSettings | None = None,
    *,
    min_step: float | None = None,
    switch_at: dict | None = None,
    turning_threshold: float | None = None,
    switch_candidates: Sequence[int] = (),
    previous: Sequence[ShootingResult] = (),
) -> Family:
    """Natural-parameter continuation from a converged seed.

    Parameters
    ----------
    index : int or "amplitude"
        Frozen coefficient ``c[index]`` or the target of the amplitude row.
    step : float
        Parameter increment; halved after a failed solve.
    switch_at : dict, optional
        ``{member_number: new_index}`` switches the frozen coefficient.
    turning_threshold : float, optional
        Switch automatically to the candidate with the largest recent change
        when ``|dT/dc_index|`` drops below this value.
    previous : sequence of ShootingResult, optional
        Members computed earlier (oldest first); they precede ``seed`` in
        the family, feed the predictor and count towards ``steps``.
    """
    settings = settings or LMSettings()
    min_step = abs(step) / 64.0 if min_step is None else min_step
    switch_at = dict(switch_at or {})
    first = list(previous) + [seed]
    fam = Family(first, [_param_value(m, index) for m in first])
    cur = index
    h = step
    while len(fam.members) <= steps:
        last = fam.members[-1]
        num = len(fam.members)
        if num in switch_at and switch_at[num] != cur:
            new = switch_at.pop(num)
            h = _switched_step(fam, new, h)
            fam.log.append(f"member {num}: frozen index {cur} -> {new}")
            cur = new
        elif (
            turning_threshold is not None
            and cur != "amplitude"
            and len(fam.members) >= 2
            and switch_candidates
        ):
            a, b = fam.members[-2], fam.members[-1]
            dc = b.c[cur] - a.c[cur]
            if dc and abs((b.T - a.T) / dc) < turning_threshold:
                new = max(switch_candidates, key=lambda k: abs(b.c[k] - a.c[k]))
                if new != cur:
                    h = _switched_step(fam, new, h)
                    fam.log.append(f"member {num}: turning point near T={b.T:.8f}, frozen {cur} -> {new}")
                    cur = new
        p_last = _param_value(last, cur)
        target = p_last + h
        guess = _predict(fam, cur, target)
        res = minimize(guess, setup, None if cur == "amplitude" else cur, settings)
        if res.converged:
            fam.members.append(res)
            fam.parameters.append(target)
            fam.log.append(f"member {num}: parameter {target:.10g}, f={res.f:.3e}, T={res.T:.12g}")
            continue
        h *= 0.5
        fam.log.append(f"member {num}: solve failed (f={res.f:.3e}), step halved to {h:.3e}")
        if abs(h) < min_step:
            fam.truncated = True
            fam.log.append("step below minimum; family truncated")
            break
    return fam


def _switched_step(fam: Family, new, h):
    if len(fam.members) >= 2 and new != "amplitude":
        d = fam.members[-1].c[new] - fam.members[-2].c[new]
        if d:
            return float(d)
    return h


def _predict(fam: Family, index, target) -> ParamVector:
    last = fam.members[-1]
    if len(fam.members) >= 2:
        prev = fam.members[-2]
        p1, p0 = _param_value(last, index), _param_value(prev, index)
        if p1 != p0:
            s = (target - p1) / (p1 - p0)
            c = last.c + s * (last.c - prev.c)
        else:
            c = last.c.copy()
    else:
        c = last.c.copy()
    pv = last.params.with_c(c)
    if index == "amplitude":
        pv = pv.with_target(target)
    else:
        c = pv.c.copy()
        c[index] = target
        pv = pv.with_c(c)
    return pv


# --------------------------------------------------------------------------
# starting guesses


def linear_standing_guess(c1: float, n: int, params: PhysParams) -> ParamVector:
    """Linear standing wave ``phi = 2 c1 cos x`` with the linear period,
    including capillarity: ``omega^2 = (g + tension) tanh(h)``."""
    t = np.tanh(params.depth) if params.finite_depth else 1.0
    omega = np.sqrt((params.g + params.tension) * t)
    c = np.zeros(n + 1)
    c[0] = 2 * np.pi / omega
    c[1] = c1
    return ParamVector(c, STANDING)


def small_amplitude_period(c1: float, gamma: float) -> float:
    """Small-amplitude period of deep-water gravity-capillary standing waves
    to second order in ``c1`` (``gamma = tension * k^2 / g`` with k = 1)."""
    return 2 * np.pi / np.sqrt(1 + gamma) * (1 + period_correction_coefficient(gamma) * c1**2)


def period_correction_coefficient(gamma: float) -> float:
    """Weakly nonlinear ``c1^2`` coefficient of the relative period shift."""
    d = gamma / (1 + gamma)
    return (8 - 27 * d - 36 * d**2 - 81 * d**3) / (32 * (1 - 9 * d**2))


# solitary gravity-capillary profiles, written for a domain 40 times longer
# than the computational one: amplitude, sech width, wave speed
_SOLITARY = {
    "A": (0.15, 6.4, 1.408),
    "B": (0.32, 2.4, 1.385),
}
SOLITARY_TENSION = 1.0 / 1600.0
SOLITARY_SCALE = 40.0


def solitary_guess(which: str, n: int, M_sample: int = 4096) -> ParamVector:
    """Traveling-wave starting guess for solitary gravity-capillary
    depression waves (``tension = 1/1600``, ``g = 1``, deep water).

    ``eta = -amp (cos X - a)/(1 - a) sech(X / width)``, ``X = 40 x`` centered
    on ``(-pi, pi]``, rescaled by 1/40; ``phi = speed * H eta`` with the
    speed rescaled by ``1/sqrt(40)``.
    """
    try:
        amp, width, speed = _SOLITARY[which.upper()]
    except KeyError:
        raise ConfigurationError(f"unknown solitary guess {which!r}; choose A or B") from None
    s = SOLITARY_SCALE
    x = spectral.nodes(M_sample)
    xc = np.where(x > np.pi, x - 2 * np.pi, x)
    a = 1.0 / np.cosh(0.5 * np.pi * s / width)
    eta = -(amp / s) * (np.cos(s * xc) - a) / (1 - a) / np.cosh(s * xc / width)
    speed = speed / np.sqrt(s)
    eh = spectral.coefficients(eta)
    phi_h = spectral.coefficients(speed * spectral.hilbert(eta))
    c = np.zeros(n + 1)
    c[0] = 2 * np.pi / speed
    for k in range(1, (n + 1) // 2 + 1):
        c[2 * k - 1] = eh[k].real
    for k in range(1, n // 2 + 1):
        c[2 * k] = phi_h[k].imag
    con = AmplitudeConstraint(0.0, -amp / s, 1.0)
    return ParamVector(c, TRAVELING, con)


def counterpropagating_guess(trav: ParamVector, target: float | None = None, weight: float = 1.0) -> ParamVector:
    """Standing-type parameters for two copies of a traveling wave centered
    at ``pi/2`` and ``3pi/2``, the second moving left.

    ``eta_hat[k] = 2 cos(k pi/2) eta_trav[k]``,
    ``phi_hat[k] = -2i sin(k pi/2) phi_trav[k]``.
    """
    if trav.family != TRAVELING:
        raise ConfigurationError("counter-propagating seed needs a traveling wave")
    eh, ph = trav.coefficients()
    K = eh.size - 1
    c = np.zeros(K + 1)
    c[0] = trav.T
    for k in range(1, K + 1):
        if k % 2 == 0:
            c[k] = (2 * np.cos(k * np.pi / 2) * eh[k]).real
        else:
            c[k] = (-2j * np.sin(k * np.pi / 2) * ph[k]).real
    con = None
    if target is not None:
        con = AmplitudeConstraint(np.pi / 2, target, weight)
    return ParamVector(c, STANDING, con)
