import numpy as np
import pytest

from wavefloquet import spectral
from wavefloquet.dynamics import energy
from wavefloquet.spectral import IDENTITY_MAP, MeshMap, MeshSchedule, Segment
from wavefloquet.state import PhysParams, SurfaceState
from wavefloquet.timestep import SCHEMES, BlowUpError, evolve, evolve_tangents, integrate


def test_tableaus_are_consistent():
    for name, (A, B, C) in SCHEMES.items():
        assert B.sum() == pytest.approx(1.0, abs=1e-14), name
        np.testing.assert_allclose(A.sum(axis=1)[: len(B)], C[: len(B)], atol=1e-14)


@pytest.mark.parametrize("scheme", ["rk5", "rk8"])
def test_linear_standing_wave(scheme):
    M = 32
    x = spectral.nodes(M)
    a = 1e-7
    q = SurfaceState(a * np.cos(x), np.zeros(M))
    t = np.pi / 2
    out = evolve(q, t, MeshSchedule.uniform(M, 32), PhysParams(), scheme).final
    # eta = a cos x cos t, phi = -a cos x sin t (nonlinear effects O(a^2))
    assert np.max(np.abs(out.eta - a * np.cos(x) * np.cos(t))) < 1e-12 * 1e-7 / a + 1e-14
    assert np.max(np.abs(out.phi + a * np.cos(x) * np.sin(t))) < 1e-13


def _order(scheme, Ns):
    M = 64
    x = spectral.nodes(M)
    q = SurfaceState(0.1 * np.cos(x), np.zeros(M))
    res = [evolve(q, 1.5, MeshSchedule.uniform(M, N), PhysParams(), scheme).final.eta for N in Ns]
    e1 = np.max(np.abs(res[0] - res[1]))
    e2 = np.max(np.abs(res[1] - res[2]))
    return np.log2(e1 / e2)


def test_rk5_convergence_order():
    assert _order("rk5", [8, 16, 32]) == pytest.approx(5.0, abs=0.4)


def test_rk8_beats_rk5():
    M = 64
    x = spectral.nodes(M)
    q = SurfaceState(0.1 * np.cos(x), np.zeros(M))
    p = PhysParams()
    ref = evolve(q, 1.5, MeshSchedule.uniform(M, 64), p, "rk8").final.eta
    e5 = np.max(np.abs(evolve(q, 1.5, MeshSchedule.uniform(M, 8), p, "rk5").final.eta - ref))
    e8 = np.max(np.abs(evolve(q, 1.5, MeshSchedule.uniform(M, 8), p, "rk8").final.eta - ref))
    assert e8 < 1e-2 * e5


def test_energy_conservation():
    M = 64
    x = spectral.nodes(M)
    p = PhysParams(tension=0.01)
    q = SurfaceState(0.15 * np.cos(x), 0.05 * np.sin(2 * x))
    E0 = energy(q, p)
    out = evolve(q, 3.0, MeshSchedule.uniform(M, 60), p).final
    assert abs(energy(out, p) - E0) < 1e-9 * E0


def test_tangents_match_flow_derivative():
    M = 32
    x = spectral.nodes(M)
    p = PhysParams()
    q = SurfaceState(0.1 * np.cos(x), 0.05 * np.sin(x))
    sched = MeshSchedule.uniform(M, 12)
    ed, pd = np.cos(2 * x), np.sin(3 * x)
    traj = integrate(q, 1.0, sched, p, "rk8", (ed, pd))
    eps = 1e-5
    a = evolve(SurfaceState(q.eta + eps * ed, q.phi + eps * pd), 1.0, sched, p).final
    b = evolve(SurfaceState(q.eta - eps * ed, q.phi - eps * pd), 1.0, sched, p).final
    fd_e = (a.eta - b.eta) / (2 * eps)
    fd_p = (a.phi - b.phi) / (2 * eps)
    te, tp = traj.tangents
    assert np.max(np.abs(te[:, 0] - fd_e)) < 1e-8
    assert np.max(np.abs(tp[:, 0] - fd_p)) < 1e-8
    # evolve_tangents recomputes the base alongside
    te2, tp2 = evolve_tangents(traj, ed, pd)
    np.testing.assert_array_equal(te2, te)


def test_graded_schedule_agrees_with_uniform():
    M = 64
    x = spectral.nodes(M)
    p = PhysParams()
    q = SurfaceState(0.12 * np.cos(x), np.zeros(M))
    uni = evolve(q, 1.2, MeshSchedule.uniform(M, 24), p).final
    mixed = MeshSchedule((Segment(0.5, 12, 64, MeshMap(1, 0.7)), Segment(0.5, 12, 72, IDENTITY_MAP)))
    out = evolve(q, 1.2, mixed, p)
    fin = out.final.regrid(IDENTITY_MAP, M)
    assert np.max(np.abs(fin.eta - uni.eta)) < 1e-9
    np.testing.assert_allclose(out.times, [0.0, 0.6, 1.2], atol=1e-15)


def test_blow_up_is_reported():
    M = 64
    x = spectral.nodes(M)
    q = SurfaceState(0.3 * np.cos(x), np.zeros(M))
    with pytest.raises(BlowUpError) as exc:
        evolve(q, 60.0, MeshSchedule.uniform(M, 6), PhysParams(), "rk5")
    assert exc.value.step >= 1


def test_bad_arguments():
    q = SurfaceState.flat(16)
    with pytest.raises(ValueError):
        evolve(q, 1.0, MeshSchedule.uniform(16, 2), PhysParams(), "euler")
    with pytest.raises(ValueError):
        evolve(q, -1.0, MeshSchedule.uniform(16, 2), PhysParams())
