"""Command-line driver: compute, continue, analyze and match wave families.

Exit codes: 0 success, 2 non-convergence, 3 invalid configuration,
4 numerical blow-up.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, matching
from .dno import DNOError
from .dynamics import crest_acceleration, energy, project_mean, wave_height
from .floquet import run_algorithm1
from .io import FormatError, SolutionRecord
from .shooting import (
    SOLITARY_TENSION,
    STANDING,
    TRAVELING,
    AmplitudeConstraint,
    ConfigurationError,
    LMSettings,
    ParamVector,
    ShootingResult,
    ShootingSetup,
    build_initial_state,
    continue_family,
    counterpropagating_guess,
    linear_standing_guess,
    minimize,
    residual,
    solitary_guess,
)
from .spectral import IDENTITY_MAP
from .state import SurfaceState
from .timestep import BlowUpError, integrate

log = logging.getLogger("wavefloquet")

EXIT_OK = 0
EXIT_NONCONVERGED = 2
EXIT_CONFIG = 3
EXIT_BLOWUP = 4

COMMON_KEYS = {"g", "tension", "depth", "M", "N", "segments", "scheme", "tol_f", "max_iter"}
KEYS = {
    "standing": COMMON_KEYS | {"n", "c1", "frozen", "guess", "retries", "amplitude", "position", "weight"},
    "travel": COMMON_KEYS | {"n", "solitary", "guess", "amplitude", "position", "weight", "speed"},
    "counterprop": COMMON_KEYS | {"source", "n", "amplitude", "weight", "frozen"},
    "continue": COMMON_KEYS | {"seed", "index", "step", "steps", "min_step", "switch"},
    "floquet": {"n_keep", "M", "N", "n", "tol", "max_refinements", "scheme", "parameter", "batch_size"},
    "match": {"swaps"},
    "diag": set(),
}


# --------------------------------------------------------------------------
# helpers


def _config(args, command) -> dict:
    if not args.config:
        return {}
    cfg = io.read_config(args.config)
    unknown = sorted(set(cfg) - KEYS[command])
    if unknown:
        raise FormatError(f"{args.config}: keys not used by '{command}': {', '.join(unknown)}")
    return cfg


def _settings(cfg, args) -> LMSettings:
    s = LMSettings()
    if "tol_f" in cfg:
        s.tol_f = float(cfg["tol_f"])
    if args.tol_f is not None:
        s.tol_f = args.tol_f
    if "max_iter" in cfg:
        s.max_iter = int(cfg["max_iter"])
    return s


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pad(c: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n + 1)
    m = min(n + 1, c.size)
    out[:m] = c[:m]
    return out


def rest_state(res_params: ParamVector, setup: ShootingSetup) -> SurfaceState:
    """State at a quarter period on the uniform output grid, potential
    projected to zero mean."""
    q0 = build_initial_state(res_params, setup.M, setup.params.depth, setup.schedule.segments[0].mesh)
    traj = integrate(q0, res_params.T / 4, setup.schedule, setup.params, setup.scheme, workers=setup.workers)
    q = traj.final.regrid(IDENTITY_MAP, setup.schedule.M_end)
    return SurfaceState(q.eta, project_mean(q.phi, np.ones(q.M)))


def _diagnostics(res: ShootingResult, setup: ShootingSetup):
    d = {
        "nfev": str(res.nfev),
        "njev": str(res.njev),
        "iterations": str(res.iterations),
        "tail_eta": res.tail_eta,
        "tail_phi": res.tail_phi,
        "period": res.T,
    }
    rest = None
    p = res.params
    if p.family == STANDING:
        rest = rest_state(p, setup)
        if np.max(np.abs(rest.phi)) < 1e-6:
            d["crest_acceleration"] = crest_acceleration(SurfaceState(rest.eta, np.zeros(rest.M)), setup.params)
        d["height"] = wave_height(rest).full
        d["energy"] = energy(rest, setup.params)
    else:
        d["speed"] = 2 * np.pi / res.T
        q0 = build_initial_state(p, setup.M, setup.params.depth)
        d["height"] = wave_height(q0).full
        d["energy"] = energy(q0, setup.params)
    return d, rest


def _record(res: ShootingResult, setup: ShootingSetup, with_diag: bool = True) -> SolutionRecord:
    diag, rest = _diagnostics(res, setup) if with_diag else ({}, None)
    return SolutionRecord(
        res.params,
        setup.params,
        setup.schedule,
        res.f,
        res.converged,
        setup.scheme,
        diag,
        None if rest is None else rest.eta,
        None if rest is None else rest.phi,
    )


def _report(res: ShootingResult, path: Path):
    state = "converged" if res.converged else "NOT converged"
    print(f"{state}: f = {res.f:.3e}, T = {res.T:.15g}, iterations = {res.iterations}, "
          f"nfev = {res.nfev}, njev = {res.njev} -> {path}")


def _constraint(cfg, default_position=0.0):
    if "amplitude" not in cfg:
        return None
    return AmplitudeConstraint(
        float(cfg.get("position", default_position)), float(cfg["amplitude"]), float(cfg.get("weight", 1.0))
    )


def _setup(cfg, args, phys, schedule=None):
    schedule = schedule or io.schedule_from_config(cfg)
    return ShootingSetup(schedule, phys, cfg.get("scheme", "rk8"), workers=args.threads)


# --------------------------------------------------------------------------
# commands


def cmd_standing(args) -> int:
    cfg = _config(args, "standing")
    phys = io.phys_from_config(cfg)
    setup = _setup(cfg, args, phys)
    settings = _settings(cfg, args)
    out = _out(args)
    path = out / "solution.txt"
    n = int(cfg.get("n", 12))
    if args.resume and path.exists():
        c0 = io.read_solution(path).params
    elif "guess" in cfg:
        c0 = io.read_solution(cfg["guess"]).params
    else:
        c0 = linear_standing_guess(float(cfg.get("c1", 0.01)), n, phys)
    con = _constraint(cfg)
    if con is not None:
        c0 = ParamVector(c0.c, STANDING, con)
    frozen = cfg.get("frozen", "1" if con is None else "none")
    frozen = None if frozen == "none" else int(frozen)
    setup.check(c0)
    retries = int(cfg.get("retries", 2))
    res = minimize(c0, setup, frozen, settings)
    attempt = 0
    while not res.converged and attempt < retries:
        attempt += 1
        # retry ladder: more unknowns first, then a finer grid and more steps
        n_new = 4 * int(np.ceil(1.5 * c0.n / 4))
        if attempt >= 2 or n_new >= setup.M // 2:
            setup = ShootingSetup(setup.schedule.scaled(1.5), phys, setup.scheme, setup.workers)
        c0 = c0.with_c(_pad(res.c, min(n_new, setup.M // 2 - 1)))
        log.info("retry %d: n = %d, M = %d", attempt, c0.n, setup.M)
        print(f"retry {attempt}: n = {c0.n}, M = {setup.M}, N = {setup.schedule.total_steps}")
        res = minimize(c0, setup, frozen, settings)
    io.write_solution(path, _record(res, setup))
    _report(res, path)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_travel(args) -> int:
    cfg = _config(args, "travel")
    out = _out(args)
    path = out / "solution.txt"
    n = int(cfg.get("n", 24))
    if args.resume and path.exists():
        c0 = io.read_solution(path).params
    elif "guess" in cfg and cfg["guess"] != "flat":
        c0 = io.read_solution(cfg["guess"]).params
    elif "solitary" in cfg:
        c0 = solitary_guess(cfg["solitary"], n)
        cfg.setdefault("tension", repr(SOLITARY_TENSION))
    else:
        phys0 = io.phys_from_config(cfg)
        speed = float(cfg.get("speed", 0.0)) or float(
            np.sqrt((phys0.g + phys0.tension) * (np.tanh(phys0.depth) if phys0.finite_depth else 1.0))
        )
        c = np.zeros(n + 1)
        c[0] = 2 * np.pi / speed
        c0 = ParamVector(c, TRAVELING, AmplitudeConstraint(0.0, 0.0))
    con = _constraint(cfg)
    if con is not None:
        c0 = ParamVector(c0.c, TRAVELING, con)
    phys = io.phys_from_config(cfg)
    setup = _setup(cfg, args, phys)
    setup.check(c0)
    res = minimize(c0, setup, None if c0.constraint is not None else 1, _settings(cfg, args))
    io.write_solution(path, _record(res, setup))
    _report(res, path)
    print(f"wave speed = {2 * np.pi / res.T:.15g}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_counterprop(args) -> int:
    cfg = _config(args, "counterprop")
    if "source" not in cfg:
        raise FormatError("counterprop needs 'source = <traveling solution file>'")
    src = io.read_solution(cfg["source"])
    out = _out(args)
    path = out / "solution.txt"
    target = float(cfg["amplitude"]) if "amplitude" in cfg else None
    c0 = counterpropagating_guess(src.params, target, float(cfg.get("weight", 1.0)))
    if args.resume and path.exists():
        c0 = io.read_solution(path).params
    if "n" in cfg:
        c0 = c0.with_c(_pad(c0.c, int(cfg["n"])))
    for k in ("g", "tension", "depth"):
        cfg.setdefault(k, repr(getattr(src.phys, k)))
    phys = io.phys_from_config(cfg)
    setup = _setup(cfg, args, phys)
    setup.check(c0)
    frozen = cfg.get("frozen", "none" if c0.constraint is not None else "1")
    frozen = None if frozen == "none" else int(frozen)
    res = minimize(c0, setup, frozen, _settings(cfg, args))
    io.write_solution(path, _record(res, setup))
    _report(res, path)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _as_result(rec: SolutionRecord) -> ShootingResult:
    return ShootingResult(rec.params, rec.f, np.zeros(0), 0, 0, 0, rec.converged, "loaded")


def cmd_continue(args) -> int:
    cfg = _config(args, "continue")
    if "seed" not in cfg:
        raise FormatError("continue needs 'seed = <solution file>'")
    seed_rec = io.read_solution(cfg["seed"])
    for k in ("g", "tension", "depth"):
        cfg.setdefault(k, repr(getattr(seed_rec.phys, k)))
    phys = io.phys_from_config(cfg)
    schedule = io.schedule_from_config(cfg) if ("M" in cfg or "segments" in cfg) else seed_rec.schedule
    setup = _setup(cfg, args, phys, schedule)
    index = cfg.get("index", "1")
    index = index if index == "amplitude" else int(index)
    step = float(cfg.get("step", 0.01))
    steps = int(cfg.get("steps", 5))
    switch = {}
    for item in cfg.get("switch", "").replace(",", " ").split():
        m, k = item.split(":")
        switch[int(m)] = k if k == "amplitude" else int(k)
    out = _out(args)
    members = sorted(out.glob("member_*.txt")) if args.resume else []
    previous = [_as_result(io.read_solution(p)) for p in members]
    seed = previous.pop() if previous else _as_result(seed_rec)
    setup.check(seed.params)
    fam = continue_family(
        seed,
        setup,
        index,
        step,
        steps,
        _settings(cfg, args),
        min_step=float(cfg["min_step"]) if "min_step" in cfg else None,
        switch_at=switch,
        previous=previous,
    )
    rows = ["member,parameter,T,f,converged"]
    for i, (m, p) in enumerate(zip(fam.members, fam.parameters)):
        path = out / f"member_{i:03d}.txt"
        if i >= len(members):
            io.write_solution(path, seed_rec if i == 0 else _record(m, setup))
        rows.append(f"{i},{p!r},{m.T!r},{m.f!r},{int(m.converged)}")
    (out / "family.csv").write_text(io.FAMILY_HEADER + "\n" + "\n".join(rows) + "\n")
    for line in fam.log:
        print(line)
    return EXIT_NONCONVERGED if fam.truncated else EXIT_OK


def cmd_floquet(args) -> int:
    cfg = _config(args, "floquet")
    if not args.inputs or len(args.inputs) != 1:
        raise FormatError("floquet takes exactly one solution file")
    rec = io.read_solution(args.inputs[0])
    n_keep = int(cfg.get("n_keep", 60))
    M = int(cfg["M"]) if "M" in cfg else None
    n = int(cfg["n"]) if "n" in cfg else None
    q0 = build_initial_state(rec.params, 2 * (rec.params.max_mode() + 1), rec.phys.depth)
    res = run_algorithm1(
        q0,
        rec.params.T,
        rec.phys,
        n_keep,
        M=M,
        n=n,
        N=int(cfg.get("N", 256)),
        tol=float(cfg.get("tol", 1e-8)),
        max_refinements=int(cfg.get("max_refinements", 2)),
        scheme=cfg.get("scheme", "rk8"),
        workers=args.threads,
        batch_size=int(cfg["batch_size"]) if "batch_size" in cfg else None,
    )
    pname = cfg.get("parameter", "crest_acceleration")
    if pname == "T":
        parameter = rec.params.T
    elif pname.startswith("c") and pname[1:].isdigit():
        parameter = float(rec.params.c[int(pname[1:])])
    elif pname in rec.diagnostics:
        parameter = float(rec.diagnostics[pname])
    else:
        parameter = float(rec.params.c[1])
    meta = {
        "converged": int(res.converged),
        "stable": int(res.stable),
        "M": res.block.M,
        "n": res.block.n,
        "source": Path(args.inputs[0]).name,
    }
    if res.cluster is not None:
        meta["cluster_size"] = res.cluster.size
        meta["cluster_split"] = repr(res.cluster.split)
        meta["cluster_pattern"] = res.cluster.pattern
    out = _out(args)
    path = out / (Path(args.inputs[0]).stem + ".spectrum.csv")
    io.write_spectrum(path, res.records, parameter, meta)
    for m in res.log:
        print(m)
    print(f"{'stable' if res.stable else 'UNSTABLE'}; {len(res.records)} records -> {path}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_match(args) -> int:
    cfg = _config(args, "match")
    if not args.inputs or len(args.inputs) < 2:
        raise FormatError("match needs at least two spectrum files")
    tables = sorted((io.read_spectrum(p) for p in args.inputs), key=lambda t: t.parameter)
    nstar = min(t.lam.size for t in tables)
    cols = [
        matching.SpectrumColumn(t.modulus[:nstar], t.sigma[:nstar], t.kmean[:nstar], t.parity[:nstar], t.parameter)
        for t in tables
    ]
    perm, _ = matching.track_family(cols)
    swaps_path = args.swaps or cfg.get("swaps")
    if swaps_path:
        perm = matching.apply_swaps(perm, matching.read_swaps(swaps_path))
    out = _out(args)
    io.write_permutation(out / "perm.txt", perm)
    io.write_family(out / "family.csv", tables, perm)
    curves = out / "curves"
    curves.mkdir(exist_ok=True)
    A = [t.parameter for t in tables]
    for i in range(nstar):
        src = [(t, perm[i, s] - 1) for s, t in enumerate(tables)]
        io.write_curve(curves / f"eig{i + 1:03d}_abs.dat", A, [abs(t.lam[j]) for t, j in src], "abs")
        io.write_curve(curves / f"eig{i + 1:03d}_sigma.dat", A, [t.sigma[j] / np.pi for t, j in src], "sigma/pi")
        io.write_curve(curves / f"eig{i + 1:03d}_kmean.dat", A, [t.kmean[j] for t, j in src], "kmean")
    print(f"matched {nstar} multipliers across {len(tables)} solutions -> {out}")
    return EXIT_OK


def cmd_diag(args) -> int:
    if not args.inputs:
        raise FormatError("diag needs at least one solution file")
    lines = []
    for p in args.inputs:
        rec = io.read_solution(p)
        setup = ShootingSetup(rec.schedule, rec.phys, rec.scheme, workers=args.threads)
        r = residual(rec.params, setup)
        f = 0.5 * float(r @ r)
        rel = abs(f - rec.f) / max(abs(rec.f), np.finfo(float).tiny)
        lines.append(f"{p}: family = {rec.params.family}, T = {rec.params.T!r}, n = {rec.params.n}")
        lines.append(f"  stored f = {rec.f:.6e}, recomputed f = {f:.6e} (relative change {rel:.2e})")
        for k in sorted(rec.diagnostics):
            lines.append(f"  {k} = {rec.diagnostics[k]}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        (_out(args) / "diag.txt").write_text(text + "\n")
    return EXIT_OK


COMMANDS = {
    "standing": cmd_standing,
    "travel": cmd_travel,
    "counterprop": cmd_counterprop,
    "continue": cmd_continue,
    "floquet": cmd_floquet,
    "match": cmd_match,
    "diag": cmd_diag,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--tol-f", type=float, default=None, help="objective tolerance")
    common.add_argument("--resume", action="store_true", help="restart from files in --out")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="wavefloquet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("standing", "travel", "counterprop", "continue"):
        sub.add_parser(name, parents=[common])
    for name in ("floquet", "diag"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("inputs", nargs="*", help="solution file(s)")
    sp = sub.add_parser("match", parents=[common])
    sp.add_argument("inputs", nargs="*", help="spectrum files")
    sp.add_argument("--swaps", help="swap file: 's i1 i2' per line")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except BlowUpError as exc:
        print(f"error: numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except DNOError as exc:
        print(f"error: boundary integral failure: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (FormatError, ConfigurationError, ValueError, OSError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
