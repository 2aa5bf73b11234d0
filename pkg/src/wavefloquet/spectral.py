"""Periodic spectral utilities on the parameter grid ``alpha_i = 2*pi*i/M``.

Fields are stored as nodal values (real arrays whose first axis has length
``M``); any trailing axes are treated as a batch of independent fields.
Fourier coefficients use the normalization

    f_hat[k] = (1/M) * sum_i f(alpha_i) * exp(-1j*k*alpha_i)

so that ``f(alpha) = sum_k f_hat[k] * exp(1j*k*alpha)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np

TWO_PI = 2.0 * np.pi


def nodes(M: int) -> np.ndarray:
    """Equispaced parameter nodes ``2*pi*i/M``, ``0 <= i < M``."""
    return TWO_PI * np.arange(M) / M


def coefficients(f: np.ndarray) -> np.ndarray:
    """Complex coefficients ``f_hat[0..M/2]`` of a real field (axis 0)."""
    f = np.asarray(f, dtype=float)
    return np.fft.rfft(f, axis=0) / f.shape[0]


def from_coefficients(fh: np.ndarray, M: int) -> np.ndarray:
    """Inverse of :func:`coefficients` for a grid of size ``M``."""
    return np.fft.irfft(fh * M, n=M, axis=0)


@lru_cache(maxsize=64)
def wavenumbers(M: int) -> np.ndarray:
    k = np.arange(M // 2 + 1, dtype=float)
    k.setflags(write=False)
    return k


def _bcast(mult: np.ndarray, ndim: int) -> np.ndarray:
    return mult.reshape((-1,) + (1,) * (ndim - 1))


@lru_cache(maxsize=64)
def _derivative_symbol(M: int) -> np.ndarray:
    s = 1j * wavenumbers(M)
    s[-1] = 0.0  # Nyquist mode zeroed
    s.setflags(write=False)
    return s


@lru_cache(maxsize=64)
def _hilbert_symbol(M: int) -> np.ndarray:
    s = -1j * np.ones(M // 2 + 1)
    s[0] = 0.0
    s[-1] = 0.0  # -i*sgn(k) is not real-representable at Nyquist
    s.setflags(write=False)
    return s


@lru_cache(maxsize=64)
def filter_symbol(M: int) -> np.ndarray:
    """Multipliers ``exp(-36 (|k|/kmax)^36)``, ``kmax = M/2``."""
    s = np.exp(-36.0 * (wavenumbers(M) / (M // 2)) ** 36)
    s.setflags(write=False)
    return s


def apply_symbol(f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    M = f.shape[0]
    fh = np.fft.rfft(f, axis=0)
    return np.fft.irfft(fh * _bcast(symbol, f.ndim), n=M, axis=0)


def derivative(f: np.ndarray) -> np.ndarray:
    """Spectral d/dalpha; the Nyquist mode is zeroed."""
    f = np.asarray(f, dtype=float)
    return apply_symbol(f, _derivative_symbol(f.shape[0]))


def hilbert(f: np.ndarray) -> np.ndarray:
    """Hilbert transform with symbol ``-i*sgn(k)`` (mean mapped to zero)."""
    f = np.asarray(f, dtype=float)
    return apply_symbol(f, _hilbert_symbol(f.shape[0]))


def filter36(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return apply_symbol(f, filter_symbol(f.shape[0]))


def evaluate_series(fh: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate ``sum_k f_hat[k] e^{ikx}`` (real field) at arbitrary points.

    ``fh`` holds the non-negative modes ``0..K``; negative modes are the
    conjugates.  Used for initial data on non-uniform grids.
    """
    fh = np.asarray(fh)
    x = np.asarray(x, dtype=float)
    k = np.arange(1, fh.shape[0])
    out = np.full(x.shape, fh[0].real)
    if k.size:
        out = out + 2.0 * np.real(np.exp(1j * np.outer(x, k)) @ fh[1:])
    return out


def resample(f: np.ndarray, M_new: int) -> np.ndarray:
    """Change grid size by zero-padding or truncating Fourier modes.

    The Nyquist mode of the coarser grid is dropped so the result stays real
    and band-limited.
    """
    f = np.asarray(f, dtype=float)
    M = f.shape[0]
    if M_new == M:
        return f.copy()
    fh = coefficients(f)
    kc = min(M, M_new) // 2
    out = np.zeros((M_new // 2 + 1,) + fh.shape[1:], dtype=complex)
    out[:kc] = fh[:kc]
    return from_coefficients(out, M_new)


def x_mean_weights(dxi: np.ndarray) -> np.ndarray:
    """Trapezoid weights for the x-average ``(1/2pi) int f dx``."""
    return dxi / dxi.shape[0]


# --------------------------------------------------------------------------
# graded mesh maps


@dataclass(frozen=True)
class MeshMap:
    """Grid map ``x = xi(alpha)`` with ``xi' = E`` a trigonometric polynomial.

    ``kappa > 0`` refines near ``x = pi``, ``kappa < 0`` near ``x = 0``;
    ``rho`` is the ratio of smallest to largest grid density.
    """

    kappa: int = 0
    rho: float = 1.0
    _coef: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.kappa) != self.kappa:
            raise ValueError(f"kappa must be an integer, got {self.kappa!r}")
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"rho must lie in (0, 1], got {self.rho!r}")
        object.__setattr__(self, "kappa", int(self.kappa))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "_coef", self._cosine_coefficients())

    @property
    def is_identity(self) -> bool:
        return self.kappa == 0 or self.rho == 1.0

    @property
    def mu(self) -> float:
        kk = abs(self.kappa)
        return comb(2 * kk, kk) / 4.0**kk

    @property
    def A(self) -> float:
        if self.kappa == 0:
            return 0.0
        return (1.0 - self.rho) / (1.0 - self.mu * (1.0 - self.rho))

    def _cosine_coefficients(self) -> np.ndarray:
        # sin^{2k}(a/2) or cos^{2k}(a/2) = mu + sum_j c_j cos(j a)
        kk = abs(self.kappa)
        if kk == 0:
            return np.zeros(0)
        sign = -1.0 if self.kappa > 0 else 1.0
        j = np.arange(1, kk + 1)
        c = np.array([comb(2 * kk, kk - jj) for jj in j], dtype=float)
        c *= 2.0 ** (1 - 2 * kk) * sign**j
        c.setflags(write=False)
        return c

    def _harmonics(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        j = np.arange(1, self._coef.size + 1)
        return alpha, j, np.multiply.outer(alpha, j)

    def xi(self, alpha) -> np.ndarray:
        alpha, j, ja = self._harmonics(alpha)
        if self.is_identity:
            return alpha.copy()
        return alpha - self.A * (np.sin(ja) @ (self._coef / j))

    def dxi(self, alpha) -> np.ndarray:
        alpha, j, ja = self._harmonics(alpha)
        if self.is_identity:
            return np.ones_like(alpha)
        return 1.0 - self.A * (np.cos(ja) @ self._coef)

    def d2xi(self, alpha) -> np.ndarray:
        alpha, j, ja = self._harmonics(alpha)
        if self.is_identity:
            return np.zeros_like(alpha)
        return self.A * (np.sin(ja) @ (self._coef * j))

    def inverse(self, x, tol: float = 1e-14, maxiter: int = 50) -> np.ndarray:
        """Solve ``xi(beta) = x`` for ``x`` in ``[0, 2pi]`` by Newton's method.

        Falls back to bisection on ``[0, 2pi]`` when an iterate leaves the
        bracket.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.is_identity:
            return x.copy()
        beta = np.empty_like(x)
        for idx, target in enumerate(x):
            b = target
            for _ in range(maxiter):
                step = (self.xi(b) - target) / self.dxi(b)
                b = b - step
                if not (0.0 <= b <= TWO_PI):
                    b = self._bisect(target, tol)
                    break
                if abs(step) <= tol * max(1.0, abs(b)):
                    break
            else:
                raise RuntimeError(
                    f"mesh inversion did not converge at node {idx} (x={target!r})"
                )
            beta[idx] = b
        return beta

    def _bisect(self, target, tol):
        lo, hi = 0.0, TWO_PI
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.xi(mid) < target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol:
                break
        return 0.5 * (lo + hi)


IDENTITY_MAP = MeshMap(0, 1.0)


def mesh_xi(mesh: MeshMap, alpha):
    return mesh.xi(alpha)


def interpolation_matrix(M_from: int, beta: np.ndarray) -> np.ndarray:
    """Matrix evaluating the trigonometric interpolant of ``M_from`` nodal
    values at the points ``beta``."""
    theta = np.subtract.outer(np.asarray(beta, dtype=float), nodes(M_from))
    half = 0.5 * theta
    s = np.sin(half)
    small = np.abs(s) < 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        W = np.sin(M_from * half) * np.cos(half) / (M_from * s)
    # theta = 0 mod 2pi: the periodic sinc equals 1
    W[small] = 1.0
    return W


@lru_cache(maxsize=64)
def regrid_matrix(M_from: int, src: MeshMap, dst: MeshMap, M_new: int) -> np.ndarray:
    """Linear map from values on the ``src`` grid to values on the ``dst``
    grid.  Row ``j`` evaluates the interpolant of ``f o xi_src`` at
    ``xi_src^{-1}(xi_dst(alpha_j))``."""
    if src == dst and M_from == M_new:
        W = np.eye(M_new)
    else:
        beta = src.inverse(dst.xi(nodes(M_new)))
        W = interpolation_matrix(M_from, beta)
    W.setflags(write=False)
    return W


def regrid(f: np.ndarray, src: MeshMap, dst: MeshMap, M_new: int | None = None) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    M_new = f.shape[0] if M_new is None else M_new
    if src == dst and M_new == f.shape[0]:
        return f.copy()
    if src.is_identity and dst.is_identity:
        return resample(f, M_new)
    return regrid_matrix(f.shape[0], src, dst, M_new) @ f


# --------------------------------------------------------------------------
# time/space schedule


@dataclass(frozen=True)
class Segment:
    theta: float
    N: int
    M: int
    mesh: MeshMap = IDENTITY_MAP

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"segment duration theta must be positive, got {self.theta}")
        if self.N < 1:
            raise ValueError(f"segment needs at least one timestep, got N={self.N}")
        if self.M % 2 or self.M < 16:
            raise ValueError(f"grid size must be even and >= 16, got M={self.M}")


@dataclass(frozen=True)
class MeshSchedule:
    """Piecewise time/space discretization: segment ``l`` covers the
    fraction ``theta_l`` of the horizon with ``N_l`` uniform steps on an
    ``M_l``-point grid mapped by ``mesh_l``."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("schedule needs at least one segment")
        total = sum(s.theta for s in segs)
        if abs(total - 1.0) > 1e-14:
            raise ValueError(f"segment durations must sum to 1, got {total!r}")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def uniform(cls, M: int, N: int) -> "MeshSchedule":
        return cls((Segment(1.0, N, M, IDENTITY_MAP),))

    @property
    def M_start(self) -> int:
        return self.segments[0].M

    @property
    def M_end(self) -> int:
        return self.segments[-1].M

    @property
    def total_steps(self) -> int:
        return sum(s.N for s in self.segments)

    def scaled(self, factor: float) -> "MeshSchedule":
        """Refine every segment: ``M`` and ``N`` multiplied by ``factor``."""
        segs = []
        for s in self.segments:
            M = max(16, 2 * int(round(s.M * factor / 2)))
            N = max(1, int(np.ceil(s.N * factor)))
            segs.append(Segment(s.theta, N, M, s.mesh))
        return MeshSchedule(tuple(segs))

    def full_period(self) -> "MeshSchedule":
        """Tile a quarter-period schedule of a symmetric standing wave over
        the whole period.

        With ``q(x, T/2 - t) = q(x + pi, t)`` the quarters run forward,
        reversed and shifted, shifted, reversed.  A shift by ``pi`` moves the
        refinement from ``x = pi`` to ``x = 0`` (``kappa -> -kappa``).
        """
        q = list(self.segments)

        def shift(segs):
            return [Segment(s.theta, s.N, s.M, MeshMap(-s.mesh.kappa, s.mesh.rho)) for s in segs]

        tiled = q + shift(q)[::-1] + shift(q) + q[::-1]
        return MeshSchedule(tuple(Segment(s.theta / 4.0, s.N, s.M, s.mesh) for s in tiled))
