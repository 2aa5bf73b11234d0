"""Acceptance criteria, one test each, printing a PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -s``; the lines are also
collected in the terminal summary.  Criterion 9 takes hours and only runs
with ``RUN_EXTENDED=1``.
"""
import os
import time

import numpy as np
import pytest

from conftest import record
from wavefloquet import spectral
from wavefloquet.cli import rest_state
from wavefloquet.dno import DirichletNeumann
from wavefloquet.dynamics import crest_acceleration
from wavefloquet.floquet import (
    assemble_monodromy,
    eigen_spectrum,
    run_algorithm1,
    zero_amplitude_reference,
)
from wavefloquet.matching import SpectrumColumn, assign, assignment_cost, brute_force_assign, clamp, track_family
from wavefloquet.shooting import (
    Evaluation,
    ShootingSetup,
    build_initial_state,
    period_correction_coefficient,
    continue_family,
    linear_standing_guess,
    minimize,
    residual,
)
from wavefloquet.spectral import MeshSchedule
from wavefloquet.state import PhysParams, SurfaceState


def standing_wave(c1, M, N, n, params=None):
    params = params or PhysParams()
    setup = ShootingSetup(MeshSchedule.uniform(M, N), params)
    res = minimize(linear_standing_guess(c1, n, params), setup, frozen=1)
    assert res.converged, res.message
    return res, setup


def test_criterion_1_zero_amplitude_monodromy():
    t0 = time.perf_counter()
    M, k_max, T = 128, 24, 2 * np.pi
    p = PhysParams()
    blk = assemble_monodromy(SurfaceState.flat(M), T, k_max, MeshSchedule.uniform(M, 256), p)
    ref = zero_amplitude_reference(k_max, M, T, p)
    entry = np.max(np.abs(blk.J - ref.J))
    recs = eigen_spectrum(blk)
    eig_err = k_err = 0.0
    for r in recs:
        k = round(r.kmean)
        k_err = max(k_err, abs(r.kmean - k))
        w = 2 * np.pi * np.sqrt(k)
        eig_err = max(eig_err, min(abs(r.lam - np.exp(1j * w)), abs(r.lam - np.exp(-1j * w))))
    counts = np.bincount([round(r.kmean) for r in recs])
    elapsed = time.perf_counter() - t0
    ok = entry < 1e-9 and eig_err < 1e-9 and k_err < 1e-9 and np.all(counts[1:] == 4) and elapsed < 60
    record(1, ok, f"entries {entry:.1e}, eigenvalues {eig_err:.1e}, <k> {k_err:.1e}, {elapsed:.1f} s")
    assert ok


def test_criterion_2_multiplier_phases():
    recs = eigen_spectrum(zero_amplitude_reference(6, 16, 2 * np.pi))
    errs = {}
    for k, printed in ((3, 0.535898), (5, 0.472136)):
        phases = sorted(r.sigma / np.pi for r in recs if round(r.kmean) == k)
        # two cosine and two sine multipliers at +-sigma
        errs[k] = max(abs(abs(s) - printed) for s in phases)
        assert min(phases) < 0 < max(phases)
    ok = max(errs.values()) < 1e-5
    record(2, ok, f"k=3 phase error {errs[3]:.1e} pi, k=5 {errs[5]:.1e} pi")
    assert ok


def test_criterion_3_dno_symbol():
    M = 256
    x = spectral.nodes(M)
    worst = 0.0
    for h in (0.05, 1.0, np.inf):
        G = DirichletNeumann(np.full(M, h if np.isfinite(h) else 0.0), depth=h)
        for k in range(1, 11):
            s = k * np.tanh(k * h) if np.isfinite(h) else float(k)
            for f in (np.cos(k * x), np.sin(k * x)):
                worst = max(worst, np.max(np.abs(G(f) - s * f)) / s)
    ok = worst < 1e-11
    record(3, ok, f"max relative error {worst:.1e}")
    assert ok


def test_criterion_4_jacobian():
    t0 = time.perf_counter()
    res, setup = standing_wave(0.01, 64, 16, 12)
    c = res.params
    J = Evaluation(c, setup, jacobian=True).J
    cols = []
    for j in range(c.c.size):
        h = 1e-6 * max(1.0, abs(c.c[j]))
        cp, cm = c.c.copy(), c.c.copy()
        cp[j] += h
        cm[j] -= h
        cols.append((residual(c.with_c(cp), setup) - residual(c.with_c(cm), setup)) / (2 * h))
    J_fd = np.column_stack(cols)
    rel = np.max(np.abs(J - J_fd)) / np.max(np.abs(J_fd))
    elapsed = time.perf_counter() - t0
    ok = rel < 1e-6 and elapsed < 60
    record(4, ok, f"relative error {rel:.1e}, {elapsed:.1f} s")
    assert ok


def test_criterion_5_period_asymptotics():
    # gravity part: T/(2 pi) - 1 against c1^2 / 4
    lines, ok_grav = [], True
    for c1 in (0.01, 0.02, 0.04):
        res, _ = standing_wave(c1, 48, 32, 16)
        dev = abs(res.T / (2 * np.pi) - 1 - c1**2 / 4)
        ok_grav &= dev < 5 * c1**4
        lines.append(f"c1={c1}: {dev:.2e} vs {5 * c1**4:.1e}")
    # gravity-capillary part at unit tension
    p = PhysParams(tension=1.0)
    coef = period_correction_coefficient(1.0)
    ok_cap = True
    for c1 in (0.01, 0.02, 0.04):
        res, _ = standing_wave(c1, 32, 48, 12, p)
        dev = abs(res.T * np.sqrt(2) / (2 * np.pi) - 1 - coef * c1**2)
        ok_cap &= dev < 5 * c1**4
        lines.append(f"tension 1, c1={c1}: {dev:.2e} vs {5 * c1**4:.1e}")
    record("5a", ok_grav, "gravity: " + "; ".join(lines[:3]))
    record("5b", ok_cap, "gravity-capillary: " + "; ".join(lines[3:]))
    assert ok_cap
    assert ok_grav


@pytest.fixture(scope="module")
def c005_spectrum():
    t0 = time.perf_counter()
    res, setup = standing_wave(0.05, 64, 32, 24)
    q0 = build_initial_state(res.params, 64)
    out = run_algorithm1(q0, res.T, setup.params, 60, M=192, n=120, N=256, max_refinements=0)
    return out, time.perf_counter() - t0


def test_criterion_6_small_amplitude_stability(c005_spectrum):
    out, elapsed = c005_spectrum
    rep = out.cluster
    others = [r for r in out.records if not r.jordan]
    dev = max(abs(r.modulus - 1) for r in others)
    # split of order sqrt(machine epsilon), about 1.5e-8
    ok = (
        dev < 1e-7
        and rep.size == 4
        and len(rep.pairs) == 2
        and rep.reciprocity < 1e-12
        and 1e-9 < rep.split < 1e-6
        and elapsed < 600
    )
    record(
        6,
        ok,
        f"max ||lam|-1| {dev:.1e}, cluster {rep.size} ({rep.pattern}), reciprocity {rep.reciprocity:.1e}, "
        f"split {rep.split:.1e}, {elapsed:.0f} s",
    )
    assert ok


def test_criterion_7_spectrum_symmetries(c005_spectrum):
    out, _ = c005_spectrum
    lam = np.array([r.lam for r in out.records])
    tol = 10 * max(r.err for r in out.records)
    conj_ok = all(np.any(lam == np.conj(l)) for l in lam)
    inv = max(np.min(np.abs(lam - 1 / l)) for l in lam)
    ok = conj_ok and inv <= tol
    record(7, ok, f"conjugate-closed {conj_ok}, inverse defect {inv:.1e} vs {tol:.1e}")
    assert ok


def test_criterion_8_assignment_optimality():
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(2, 10))
        C = rng.random((n, n)) * rng.choice([1.0, 100.0])
        P, _ = assign(C)
        if assignment_cost(C, P) != brute_force_assign(C)[1]:
            mismatches += 1
    clamp_ok = clamp(7) == 5 and clamp(-7) == -5
    ok = mismatches == 0 and clamp_ok
    record(8, ok, f"{mismatches} of 200 differ from exhaustive search; clamp {clamp_ok}")
    assert ok


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("RUN_EXTENDED") != "1", reason="hours of compute; set RUN_EXTENDED=1")
def test_criterion_9_instability_bubble():
    p = PhysParams()
    M, N = 256, 480
    seed, setup = standing_wave(0.05, M, N, 64, p)
    members, Ac = [seed], []
    # continue in c1 until the crest acceleration passes the window
    while True:
        fam = continue_family(members[-1], setup, 1, 0.001, len(members) + 9, previous=members[:-1])
        members = fam.members
        Ac += [crest_acceleration(rest_state(m.params, setup), p) for m in members[len(Ac) :]]
        if Ac[-1] > 0.35 or fam.truncated:
            break
    window = [(a, m) for a, m in zip(Ac, members) if 0.31 <= a <= 0.35]
    cols, departed = [], []
    for a, m in window:
        out = run_algorithm1(build_initial_state(m.params, M), m.T, p, 60, M=M, n=120, N=N)
        cols.append(SpectrumColumn.from_records(out.records[:60], a))
        departed.append([r for r in out.records if not r.jordan and abs(r.modulus - 1) > 1e-7])
    track_family(cols)
    first = next(i for i, d in enumerate(departed) if d)
    onset = 0.5 * (window[first - 1][0] + window[first][0])
    bad = departed[first]
    sigma = max(abs(r.sigma) for r in bad) / np.pi
    kmean = float(np.mean([r.kmean for r in bad]))
    contains = any(d and abs(window[i][0] - 0.333) < 0.01 for i, d in enumerate(departed))
    # parity of the first pair to leave the circle, then of the next one
    order = []
    for d in departed:
        for r in d:
            if r.parity not in order:
                order.append(r.parity)
    ok = contains and abs(onset - 0.3295) < 0.003 and abs(sigma - 0.508) < 0.002 and abs(kmean - 4.16) < 0.05
    ok &= order[:2] == [1, 0]
    record(9, ok, f"onset {onset:.4f}, sigma {sigma:.4f} pi, <k> {kmean:.3f}, parity order {order}")
    assert ok
