import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavefloquet import spectral
from wavefloquet.spectral import IDENTITY_MAP, MeshMap, MeshSchedule, Segment


def trig_poly(coef_c, coef_s, x):
    out = np.zeros_like(x)
    for k, (a, b) in enumerate(zip(coef_c, coef_s), 1):
        out += a * np.cos(k * x) + b * np.sin(k * x)
    return out


@pytest.mark.parametrize("M", [16, 32, 64])
@pytest.mark.parametrize("k", [1, 3, 7])
def test_derivative_and_hilbert_of_modes(M, k):
    x = spectral.nodes(M)
    np.testing.assert_allclose(spectral.derivative(np.cos(k * x)), -k * np.sin(k * x), atol=1e-12 * k)
    np.testing.assert_allclose(spectral.derivative(np.sin(k * x)), k * np.cos(k * x), atol=1e-12 * k)
    np.testing.assert_allclose(spectral.hilbert(np.cos(k * x)), np.sin(k * x), atol=1e-13)
    np.testing.assert_allclose(spectral.hilbert(np.sin(k * x)), -np.cos(k * x), atol=1e-13)


def test_nyquist_mode_is_removed():
    M = 32
    x = spectral.nodes(M)
    nyq = np.cos(M // 2 * x)
    assert np.max(np.abs(spectral.derivative(nyq))) < 1e-12
    assert np.max(np.abs(spectral.hilbert(nyq))) < 1e-12
    assert np.max(np.abs(spectral.hilbert(np.ones(M)))) < 1e-15


def test_filter_multipliers():
    M = 64
    s = spectral.filter_symbol(M)
    assert s[0] == 1.0
    assert s[-1] == pytest.approx(np.exp(-36.0), rel=1e-14)
    # smooth modes are untouched to rounding
    assert np.all(np.abs(s[: M // 8] - 1) < 1e-15)
    assert np.all(np.diff(s) <= 0)


def test_coefficients_normalization():
    M = 16
    x = spectral.nodes(M)
    fh = spectral.coefficients(3.0 + 2 * np.cos(2 * x) - 4 * np.sin(5 * x))
    assert fh[0] == pytest.approx(3.0)
    assert fh[2] == pytest.approx(1.0)
    assert fh[5] == pytest.approx(2j)
    np.testing.assert_allclose(spectral.from_coefficients(fh, M), 3.0 + 2 * np.cos(2 * x) - 4 * np.sin(5 * x), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=1, max_size=6),
    st.lists(st.floats(-1, 1), min_size=1, max_size=6),
)
def test_derivative_of_random_polynomial(cc, cs):
    M = 32
    x = spectral.nodes(M)
    n = max(len(cc), len(cs))
    cc = list(cc) + [0.0] * (n - len(cc))
    cs = list(cs) + [0.0] * (n - len(cs))
    exact = trig_poly([k * b for k, b in enumerate(cs, 1)], [-k * a for k, a in enumerate(cc, 1)], x)
    np.testing.assert_allclose(spectral.derivative(trig_poly(cc, cs, x)), exact, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=7), st.sampled_from([16, 24, 40]))
def test_resample_round_trip(coef, M):
    x = spectral.nodes(M)
    f = trig_poly(coef, coef[::-1], x)
    up = spectral.resample(f, 3 * M)
    np.testing.assert_allclose(up, trig_poly(coef, coef[::-1], spectral.nodes(3 * M)), atol=1e-12)
    np.testing.assert_allclose(spectral.resample(up, M), f, atol=1e-12)


def test_evaluate_series_matches_grid():
    M = 24
    x = spectral.nodes(M)
    f = np.exp(np.sin(x))
    fh = spectral.coefficients(f)[: M // 2]
    np.testing.assert_allclose(spectral.evaluate_series(fh, x), f, atol=1e-9)


# --------------------------------------------------------------------------
# mesh maps


def test_identity_map():
    a = spectral.nodes(32)
    assert IDENTITY_MAP.is_identity
    np.testing.assert_array_equal(IDENTITY_MAP.xi(a), a)
    np.testing.assert_array_equal(IDENTITY_MAP.dxi(a), np.ones(32))
    assert MeshMap(3, 1.0).is_identity


@settings(max_examples=30, deadline=None)
@given(st.integers(-4, 4).filter(lambda k: k != 0), st.floats(0.05, 1.0))
def test_mesh_map_properties(kappa, rho):
    m = MeshMap(kappa, rho)
    a = spectral.nodes(512)
    d = m.dxi(a)
    assert np.all(d > 0)
    # extreme densities in the prescribed ratio
    assert d.min() / d.max() == pytest.approx(rho, rel=1e-9)
    ends = m.xi(np.array([0.0, np.pi, 2 * np.pi]))
    np.testing.assert_allclose(ends, [0.0, np.pi, 2 * np.pi], atol=1e-13)
    np.testing.assert_allclose(m.inverse(m.xi(a)), a, atol=1e-12)
    np.testing.assert_allclose(spectral.derivative(m.xi(a) - a), d - 1, atol=1e-10)
    np.testing.assert_allclose(spectral.derivative(d), m.d2xi(a), atol=1e-9)


@pytest.mark.parametrize("kappa", [1, 2, -2])
def test_refinement_location(kappa):
    m = MeshMap(kappa, 0.25)
    a = spectral.nodes(256)
    d = m.dxi(a)
    # smallest spacing near pi when kappa > 0, near 0 otherwise
    loc = m.xi(a)[np.argmin(d)]
    assert abs(loc - (np.pi if kappa > 0 else 0.0)) < 1e-12


def test_mesh_map_validation():
    with pytest.raises(ValueError):
        MeshMap(1, 0.0)
    with pytest.raises(ValueError):
        MeshMap(1, 1.5)
    with pytest.raises(ValueError):
        MeshMap(1.5, 0.5)


@pytest.mark.parametrize(
    "src,dst",
    [
        (IDENTITY_MAP, MeshMap(2, 0.4)),
        (MeshMap(2, 0.4), MeshMap(-1, 0.5)),
        (MeshMap(-1, 0.5), IDENTITY_MAP),
    ],
)
def test_regrid_smooth_function(src, dst):
    f = lambda x: np.exp(0.5 * np.cos(x)) + 0.3 * np.sin(2 * x)
    M_from, M_to = 96, 80
    vals = f(src.xi(spectral.nodes(M_from)))
    out = spectral.regrid(vals, src, dst, M_to)
    np.testing.assert_allclose(out, f(dst.xi(spectral.nodes(M_to))), atol=1e-10)


def test_interpolation_matrix_reproduces_nodes():
    W = spectral.interpolation_matrix(20, spectral.nodes(20))
    np.testing.assert_allclose(W, np.eye(20), atol=1e-14)


# --------------------------------------------------------------------------
# schedules


def test_schedule_validation():
    with pytest.raises(ValueError):
        MeshSchedule((Segment(0.5, 4, 32), Segment(0.4, 4, 32)))
    with pytest.raises(ValueError):
        Segment(1.0, 4, 31)
    with pytest.raises(ValueError):
        Segment(1.0, 0, 32)
    with pytest.raises(ValueError):
        MeshSchedule(())


def test_full_period_tiling():
    q = MeshSchedule((Segment(0.25, 3, 32, MeshMap(2, 0.5)), Segment(0.75, 5, 48, IDENTITY_MAP)))
    full = q.full_period()
    assert len(full.segments) == 8
    assert sum(s.theta for s in full.segments) == pytest.approx(1.0, abs=1e-15)
    assert full.total_steps == 4 * q.total_steps
    kappas = [s.mesh.kappa for s in full.segments]
    assert kappas == [2, 0, 0, -2, -2, 0, 0, 2]
    assert full.M_start == 32 and full.M_end == 32


def test_scaled_schedule():
    s = MeshSchedule.uniform(32, 10).scaled(1.5)
    assert s.M_start == 48 and s.total_steps == 15
