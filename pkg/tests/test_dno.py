import numpy as np
import pytest

from wavefloquet import spectral
from wavefloquet.dno import (
    DirichletNeumann,
    DNOError,
    SurfaceGeometry,
    apply_dno,
    assemble_kernels,
    surface_velocities,
)
from wavefloquet.spectral import IDENTITY_MAP, MeshMap


def flat(M, h):
    return np.full(M, h if np.isfinite(h) else 0.0)


def symbol(k, h):
    return k * np.tanh(k * h) if np.isfinite(h) else float(k)


@pytest.mark.parametrize("h", [0.3, 1.0, 4.0, np.inf])
@pytest.mark.parametrize("k", [1, 2, 5, 9])
def test_flat_symbol(h, k):
    M = 64
    x = spectral.nodes(M)
    G = DirichletNeumann(flat(M, h), depth=h)
    for f in (np.cos(k * x), np.sin(k * x)):
        np.testing.assert_allclose(G(f), symbol(k, h) * f, atol=1e-12 * symbol(k, h))


def test_constants_in_kernel():
    G = DirichletNeumann(0.1 * np.cos(spectral.nodes(48)))
    assert np.max(np.abs(G(np.ones(48)))) < 1e-12


def test_image_correction_removes_aliasing():
    # thin layer: the raw trapezoid rule aliases the near-singular image
    # kernel at order exp(-2hM); the corrected operator does not
    M, h = 64, 0.05
    x = spectral.nodes(M)
    geom = SurfaceGeometry(flat(M, h), depth=h)
    raw = assemble_kernels(geom, image_correction=False)
    fixed = assemble_kernels(geom)
    f = np.cos(3 * x)
    exact = symbol(3, h) * f
    e_raw = np.max(np.abs(apply_dno(geom, raw, f) - exact)) / symbol(3, h)
    e_fix = np.max(np.abs(apply_dno(geom, fixed, f) - exact)) / symbol(3, h)
    assert e_fix < 1e-11
    assert e_raw > 1e3 * e_fix


def _harmonic(depth, k, amp, mesh, M):
    x = mesh.xi(spectral.nodes(M))
    h = depth if np.isfinite(depth) else 0.0
    eta = h + amp * np.cos(x) + 0.3 * amp * np.sin(2 * x)
    ex = -amp * np.sin(x) + 0.6 * amp * np.cos(2 * x)
    if np.isfinite(depth):
        P, dP = np.cosh(k * eta), k * np.sinh(k * eta)
    else:
        P, dP = np.exp(k * eta), k * np.exp(k * eta)
    phi = P * np.cos(k * x)
    px = -k * P * np.sin(k * x)
    py = dP * np.cos(k * x)
    return eta, phi, px, py, py - ex * px


@pytest.mark.parametrize("mesh", [IDENTITY_MAP, MeshMap(2, 0.3), MeshMap(-1, 0.5)])
@pytest.mark.parametrize("depth", [np.inf, 1.5])
def test_exact_harmonic_on_curved_surface(mesh, depth):
    M = 128
    eta, phi, px, py, gexact = _harmonic(depth, 2, 0.1, mesh, M)
    geom = SurfaceGeometry(eta, mesh, depth)
    kern = assemble_kernels(geom)
    scale = np.max(np.abs(gexact))
    assert np.max(np.abs(apply_dno(geom, kern, phi) - gexact)) < 1e-10 * scale
    u, v = surface_velocities(geom, phi, kern)
    assert np.max(np.abs(u - px)) < 1e-10 * scale
    assert np.max(np.abs(v - py)) < 1e-10 * scale


def test_spectral_convergence_in_M():
    errs = []
    for M in (32, 64, 128):
        eta, phi, _, _, gexact = _harmonic(np.inf, 3, 0.25, IDENTITY_MAP, M)
        errs.append(np.max(np.abs(DirichletNeumann(eta)(phi) - gexact)))
    assert errs[1] < 1e-3 * errs[0] or errs[1] < 1e-11
    assert errs[2] < 1e-11


def _craig_sulem(eta, phi):
    # third-order expansion about the flat surface, deep water
    M = eta.size
    k = np.fft.fftfreq(M, 1.0 / M)
    D = lambda f: np.real(np.fft.ifft(1j * k * np.fft.fft(f)))
    G0 = lambda f: np.real(np.fft.ifft(np.abs(k) * np.fft.fft(f)))
    D2 = lambda f: -D(D(f))
    g0 = G0(phi)
    g1 = -D(eta * D(phi)) - G0(eta * g0)
    g2 = -0.5 * (D2(eta**2 * g0) + G0(eta**2 * D2(phi))) + G0(eta * G0(eta * g0))
    return g0 + g1 + g2


def test_agrees_with_small_amplitude_expansion():
    # independent oracle: the truncation error is O(eps^3)
    M = 64
    x = spectral.nodes(M)
    phi = np.cos(x) + 0.3 * np.sin(3 * x)
    errs = []
    for eps in (1e-2, 5e-3):
        eta = eps * (np.cos(x) + 0.5 * np.sin(2 * x))
        errs.append(np.max(np.abs(DirichletNeumann(eta)(phi) - _craig_sulem(eta, phi))))
    assert errs[0] < 1e-5
    assert np.log2(errs[0] / errs[1]) == pytest.approx(3.0, abs=0.2)


@pytest.mark.parametrize("depth", [np.inf, 0.8])
def test_symmetric_and_nonnegative(depth, rng):
    M = 64
    mesh = MeshMap(1, 0.6)
    x = mesh.xi(spectral.nodes(M))
    h = depth if np.isfinite(depth) else 0.0
    eta = h + 0.15 * np.cos(x) + 0.05 * np.sin(3 * x)
    G = DirichletNeumann(eta, mesh, depth)
    w = mesh.dxi(spectral.nodes(M))  # dx quadrature weights
    a = spectral.filter36(rng.standard_normal(M))
    b = spectral.filter36(rng.standard_normal(M))
    a, b = spectral.resample(spectral.resample(a, 16), M), spectral.resample(spectral.resample(b, 16), M)
    ga, gb = G(a), G(b)
    assert abs(w @ (a * gb) - w @ (b * ga)) < 1e-10 * np.sqrt((w @ (a * ga)) * (w @ (b * gb)))
    assert w @ (a * ga) > 0


def test_gmres_matches_lu():
    M = 64
    eta, phi, *_ = _harmonic(np.inf, 2, 0.2, IDENTITY_MAP, M)
    geom = SurfaceGeometry(eta)
    a = apply_dno(geom, assemble_kernels(geom), phi)
    b = apply_dno(geom, assemble_kernels(geom, solver="gmres"), phi)
    np.testing.assert_allclose(a, b, atol=1e-11)


def test_batched_columns():
    M = 48
    x = spectral.nodes(M)
    G = DirichletNeumann(0.1 * np.cos(x))
    cols = np.column_stack([np.cos(x), np.sin(2 * x), np.cos(5 * x)])
    out = G(cols)
    for j in range(3):
        np.testing.assert_allclose(out[:, j], G(cols[:, j]), atol=1e-14)


def test_threaded_assembly_is_identical():
    M = 256
    eta = 0.1 * np.cos(spectral.nodes(M))
    geom = SurfaceGeometry(eta)
    a = assemble_kernels(geom)
    b = assemble_kernels(geom, workers=4)
    np.testing.assert_array_equal(a.K, b.K)
    np.testing.assert_array_equal(a.G, b.G)


def test_errors():
    M = 32
    with pytest.raises(DNOError, match="bottom"):
        SurfaceGeometry(np.full(M, -0.1), depth=1.0)
    bad = np.zeros(M)
    bad[3] = np.nan
    with pytest.raises(DNOError, match="non-finite"):
        SurfaceGeometry(bad)
    with pytest.raises(ValueError):
        assemble_kernels(SurfaceGeometry(np.zeros(M)), solver="qr")
