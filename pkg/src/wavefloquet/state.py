"""Surface state and physical parameters shared by all modules."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import spectral
from .spectral import IDENTITY_MAP, MeshMap


@dataclass(frozen=True)
class PhysParams:
    """Gravity ``g``, surface tension over density ``tension`` and fluid
    depth ``depth`` (``np.inf`` for deep water)."""

    g: float = 1.0
    tension: float = 0.0
    depth: float = np.inf

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"gravity must be positive, got {self.g!r}")
        if not self.tension >= 0:
            raise ValueError(f"surface tension must be non-negative, got {self.tension!r}")
        if not self.depth > 0:
            raise ValueError(f"depth must be positive or inf, got {self.depth!r}")

    @property
    def finite_depth(self) -> bool:
        return bool(np.isfinite(self.depth))

    def omega(self, k) -> np.ndarray:
        """Linear gravity-wave frequencies ``sqrt(k g tanh(k h))``."""
        k = np.asarray(k, dtype=float)
        t = np.tanh(k * self.depth) if self.finite_depth else 1.0
        return np.sqrt(k * self.g * t)


@dataclass(frozen=True)
class SurfaceState:
    """Elevation ``eta`` and surface potential ``phi`` sampled at the nodes
    ``x_i = xi(alpha_i)`` of ``mesh``.

    In finite depth the bottom is at ``y = 0`` so ``eta`` has mean ``h``.
    """

    eta: np.ndarray
    phi: np.ndarray
    mesh: MeshMap = IDENTITY_MAP

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if eta.shape != phi.shape or eta.ndim != 1:
            raise ValueError(f"eta and phi must be 1-d of equal length, got {eta.shape}, {phi.shape}")
        if eta.size % 2 or eta.size < 16:
            raise ValueError(f"grid size must be even and >= 16, got {eta.size}")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "phi", phi)

    @property
    def M(self) -> int:
        return self.eta.size

    @property
    def x(self) -> np.ndarray:
        return self.mesh.xi(spectral.nodes(self.M))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.eta, self.phi])

    @classmethod
    def from_stacked(cls, y: np.ndarray, mesh: MeshMap = IDENTITY_MAP) -> "SurfaceState":
        M = y.size // 2
        return cls(y[:M], y[M:], mesh)

    def coefficients(self):
        """Fourier coefficients in the parameter variable (modes ``0..M/2``)."""
        return spectral.coefficients(self.eta), spectral.coefficients(self.phi)

    def regrid(self, mesh: MeshMap, M: int | None = None) -> "SurfaceState":
        M = self.M if M is None else M
        y = spectral.regrid(np.stack([self.eta, self.phi], axis=1), self.mesh, mesh, M)
        return SurfaceState(y[:, 0], y[:, 1], mesh)

    def with_mesh_values(self, eta=None, phi=None) -> "SurfaceState":
        return replace(
            self,
            eta=self.eta if eta is None else eta,
            phi=self.phi if phi is None else phi,
        )

    @classmethod
    def flat(cls, M: int, depth: float = np.inf, mesh: MeshMap = IDENTITY_MAP) -> "SurfaceState":
        h = depth if np.isfinite(depth) else 0.0
        return cls(np.full(M, float(h)), np.zeros(M), mesh)
