"""Command line interface: ``kplab <subcommand> [options]``.

Every subcommand prints a short summary, writes its outputs into a per-run
directory (``--out``) and exits with status 0 only if all in-run checks pass.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import KPLabError
from .report import RunReport, content_hash

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib


# -- config files -------------------------------------------------------------

GRID_KEYS = ("Lx", "Nx", "L", "Ny")
INITIAL_KEYS = ("amplitude", "perturbation", "n", "shape")


def load_config(path) -> dict:
    """Read a TOML or JSON run configuration (chosen by file extension)."""
    path = Path(path)
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    if path.suffix == ".json":
        return json.loads(path.read_text())
    raise ValueError(f"unsupported config format {path.suffix!r}; use .toml or .json")


def _strict(section: dict, keys, name: str) -> dict:
    missing = set(keys) - set(section)
    extra = set(section) - set(keys)
    if missing or extra:
        raise ValueError(f"[{name}] keys missing={sorted(missing)} unknown={sorted(extra)}")
    return dict(section)


def parse_evolve_config(data: dict):
    """Split a full evolve config into (grid, EvolveConfig, initial-data dict); all fields required."""
    from .evolve import EvolveConfig
    from .spectral import Grid2D

    _strict(data, ("grid", "evolve", "initial"), "root")
    g = _strict(data["grid"], GRID_KEYS, "grid")
    ev = dict(data["evolve"])
    if ev.get("dt") == "auto":
        ev["dt"] = None
    cfg = EvolveConfig.from_dict(ev)
    init = _strict(data["initial"], INITIAL_KEYS, "initial")
    return Grid2D(g["Lx"], g["Nx"], g["L"], g["Ny"]), cfg, init


def example_evolve_config() -> dict:
    return {
        "grid": {"Lx": 80.0, "Nx": 256, "L": 1.0, "Ny": 16},
        "evolve": {
            "p": 1,
            "c": 1.0,
            "dt": 0.01,
            "T_final": 10.0,
            "dealias": True,
            "monitor_every": 50,
            "snapshot_every": 0,
            "blowup_factor": 1000.0,
        },
        "initial": {"amplitude": 1.2, "perturbation": 0.3, "n": 1, "shape": "derivative"},
    }


def initial_field(grid, cfg, init: dict):
    """amplitude * R + perturbation * P(x) cos(n y / L), P = R' ("derivative") or x e^{-x^2/4} ("gaussian")."""
    from .profiles import gkdv_soliton
    from .spectral import Field2D

    R = gkdv_soliton(cfg.p, cfg.c, grid)
    if init["shape"] == "derivative":
        P = gkdv_soliton(cfg.p, cfg.c, grid, order=1)
    elif init["shape"] == "gaussian":
        x = grid.x
        P = x * np.exp(-(x**2) / 4)
    else:
        raise ValueError("initial.shape must be 'derivative' or 'gaussian'")
    cos = np.cos(init["n"] * grid.y / grid.L)
    vals = init["amplitude"] * R[:, None] + init["perturbation"] * P[:, None] * cos[None, :]
    return Field2D(grid, vals)


# -- output ---------------------------------------------------------------------


def _run_dir(args, name: str, config: dict) -> Path:
    h = content_hash(config)
    out = Path(args.out) if args.out else Path("runs") / f"{name}-{h[:12]}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps({"command": name, "config": config, "hash": h}, indent=2, default=str))
    return out


def _finish(report: RunReport, out: Path, quiet: bool) -> int:
    report.write(out)
    if not quiet:
        for key, val in report.fits.items():
            if isinstance(val, dict) and "rate" in val:
                print(f"{key}: rate={val['rate']:.6g} r2={val.get('r2', float('nan')):.6f}")
            elif isinstance(val, (int, float)) or val is None:
                print(f"{key}: {val}")
        for key, chk in report.checks.items():
            print(f"check {key}: {'PASS' if chk['passed'] else 'FAIL'}")
        print(f"output: {out}")
    return 0 if report.passed else 1


def _grid2d(args):
    from .spectral import Grid2D

    return Grid2D(args.Lx, args.Nx, args.L, args.Ny)


# -- subcommands ------------------------------------------------------------------


def cmd_soliton_check(args) -> int:
    from .io import write_profile
    from .profiles import gkdv_soliton, soliton_residual
    from .spectral import Grid1D

    grid = Grid1D(args.Lx, args.Nx)
    config = {"p": args.p, "c": args.c, "Lx": args.Lx, "Nx": args.Nx, "tol": args.tol}
    rep = RunReport("soliton-check", config)
    R = gkdv_soliton(args.p, args.c, grid)
    res = soliton_residual(R, args.p, args.c, grid)
    rep.fits["residual"] = res
    rep.fits["amplitude"] = float(R.max())
    rep.check("residual", res <= args.tol, residual=res, tol=args.tol)
    out = _run_dir(args, "soliton-check", config)
    write_profile(out / "profile.csv", grid.x, R)
    return _finish(rep, out, args.quiet)


def cmd_threshold(args) -> int:
    from .linops import find_cstar
    from .quadforms import coercivity_threshold
    from .spectral import Grid1D

    grid = Grid1D(args.Lx, args.Nx)
    config = {"Lx": args.Lx, "Nx": args.Nx, "bracket": args.bracket, "method": args.method, "expect": args.expect}
    rep = RunReport("threshold", config)
    if args.method in ("Mc", "both"):
        rep.fits["cstar_Mc"] = find_cstar(grid, tuple(args.bracket))
    if args.method in ("coercivity", "both"):
        rep.fits["cstar_coercivity"] = coercivity_threshold(grid, 1.0, tuple(args.bracket), p=args.p)
    if args.expect is not None:
        for key in [k for k in rep.fits if k.startswith("cstar")]:
            val = rep.fits[key]
            rep.check(key, abs(val - args.expect) <= args.rtol * args.expect, value=val, expect=args.expect)
    return _finish(rep, _run_dir(args, "threshold", config), args.quiet)


def cmd_spectrum(args) -> int:
    from .linops import build_An, spectrum
    from .spectral import Grid1D

    grid = Grid1D(args.Lx, args.Nx)
    config = {"c": args.c, "p": args.p, "n": args.n, "L": args.L, "Lx": args.Lx, "Nx": args.Nx}
    rep = RunReport("spectrum", config)
    spec = spectrum(build_An(args.c, args.p, args.n, args.L, grid))
    lam = spec.eigenvalues
    accepted = lam[spec.localized & spec.real]
    rep.fits["max_real_accepted"] = float(np.max(accepted.real)) if accepted.size else 0.0
    rep.fits["count"] = int(lam.size)
    gap = float(np.max(np.min(np.abs(lam[:, None] + lam[None, :]), axis=1)))
    rep.fits["reflection_gap"] = gap
    rep.check("reflection_symmetric", gap <= args.sym_tol * max(1.0, float(np.max(np.abs(lam)))), gap=gap)
    out = _run_dir(args, "spectrum", config)
    spec.to_csv(out / "spectrum.csv")
    return _finish(rep, out, args.quiet)


def cmd_sigma_curve(args) -> int:
    from .io import write_rows
    from .linops import find_k0, fit_kappa, sigma_curve
    from .spectral import Grid1D

    grid = Grid1D(args.Lx, args.Nx)
    if args.kmin is None or args.kmax is None:
        k0 = find_k0(args.p, grid)
        args.kmin = args.kmin if args.kmin is not None else 0.97 * k0
        args.kmax = args.kmax if args.kmax is not None else 0.9995 * k0
    ks = np.linspace(args.kmin, args.kmax, args.num)
    config = {"p": args.p, "Lx": args.Lx, "Nx": args.Nx, "kmin": args.kmin, "kmax": args.kmax, "num": args.num}
    rep = RunReport("sigma-curve", config)
    curve = sigma_curve(args.p, grid, ks)
    out = _run_dir(args, "sigma-curve", config)
    write_rows(out / "sigma_curve.csv", [{"k": k, "sigma": s} for k, s in curve])
    try:
        fit = fit_kappa(curve)
        rep.fits.update(fit._asdict())
        rep.check("kappa_positive", fit.kappa > 0, kappa=fit.kappa)
        share = abs(fit.linear) / (abs(fit.kappa) * fit.sigma_max)
        rep.fits["linear_share"] = share
        rep.check("linear_small", share <= 0.02, share=share)
    except KPLabError as exc:
        rep.check("kappa_fit", False, error=str(exc))
    return _finish(rep, out, args.quiet)


def cmd_evolve(args) -> int:
    from .evolve import evolve

    data = load_config(args.config) if args.config else example_evolve_config()
    grid, cfg, init = parse_evolve_config(data)
    u0 = initial_field(grid, cfg, init)
    final, rep = evolve(u0, cfg)
    l2, H = rep.column("l2"), rep.column("hamiltonian")
    rep.fits["l2_drift"] = float(np.max(np.abs(l2 / l2[0] - 1)))
    rep.fits["hamiltonian_drift"] = float(np.max(np.abs(H / H[0] - 1))) if H[0] else float("nan")
    rep.check("finite", bool(np.all(np.isfinite(final.values))))
    rep.snapshots.append(final)
    return _finish(rep, _run_dir(args, "evolve", data), args.quiet)


def cmd_stability(args) -> int:
    from .lab import run_stability

    grid = _grid2d(args)
    rep = run_stability(
        args.c, args.delta, args.T, grid, p=args.p, kind=args.kind, n=args.n, l2_match=args.l2_match, dt=args.dt
    )
    return _finish(rep, _run_dir(args, "stability", rep.config | {"grid": grid.as_dict()}), args.quiet)


def cmd_instability(args) -> int:
    from .lab import run_instability

    grid = _grid2d(args)
    rep = run_instability(
        args.c, args.delta, args.T, grid, p=args.p, eta=args.eta, backward=args.backward, dt=args.dt
    )
    return _finish(rep, _run_dir(args, "instability", rep.config | {"grid": grid.as_dict()}), args.quiet)


def cmd_manifold(args) -> int:
    from .lab import run_stable_manifold

    grid = _grid2d(args)
    rep = run_stable_manifold(
        args.c,
        args.p,
        args.M,
        args.delta,
        args.T,
        grid,
        picard_iterations=args.picard,
        dt=args.dt,
        reverse_check=args.reverse_check,
    )
    return _finish(rep, _run_dir(args, "manifold", rep.config | {"grid": grid.as_dict()}), args.quiet)


def cmd_sweep(args) -> int:
    from .lab import sweep

    data = load_config(args.cells)
    cells = data["cells"] if isinstance(data, dict) else data
    kind = args.kind or (data.get("kind") if isinstance(data, dict) else None)
    if kind is None:
        raise ValueError("sweep kind missing: pass --kind or set 'kind' in the cells file")
    out = _run_dir(args, "sweep", {"kind": kind, "cells": cells})
    rows = sweep(kind, cells, workers=args.workers, path=out / "results.csv")
    failed = [r for r in rows if r.get("error") or r.get("passed") is False]
    if not args.quiet:
        print(f"{len(rows)} cells, {len(failed)} failed; output: {out}")
    return 0 if not failed else 1


# -- parser ---------------------------------------------------------------------------


def _add_grid(p, Lx=40.0, Nx=256, Ny=16):
    p.add_argument("--Lx", type=float, default=Lx, help="box length in x")
    p.add_argument("--Nx", type=int, default=Nx, help="points in x")
    p.add_argument("--L", type=float, default=1.0, help="transverse period is 2 pi L")
    p.add_argument("--Ny", type=int, default=Ny, help="points in y")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kplab", description=__doc__.splitlines()[0])
    ap.add_argument("--quiet", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="run directory (default runs/<command>-<hash>)")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("soliton-check", help="residual of the closed-form profile")
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--Lx", type=float, default=80.0)
    p.add_argument("--Nx", type=int, default=512)
    p.add_argument("--tol", type=float, default=1e-8)
    common(p)
    p.set_defaults(func=cmd_soliton_check)

    p = sub.add_parser("threshold", help="critical speed by bisection")
    p.add_argument("--method", choices=["Mc", "coercivity", "both"], default="both")
    p.add_argument("--p", type=int, default=1, help="exponent for the coercivity threshold")
    p.add_argument("--Lx", type=float, default=120.0)
    p.add_argument("--Nx", type=int, default=1024)
    p.add_argument("--bracket", type=float, nargs=2, default=[2.0, 2.6])
    p.add_argument("--expect", type=float, default=4 / math.sqrt(3))
    p.add_argument("--rtol", type=float, default=0.01)
    common(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("spectrum", help="eigenvalues of the linearized operator at one harmonic")
    p.add_argument("--c", type=float, default=3.0)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--Lx", type=float, default=40.0)
    p.add_argument("--Nx", type=int, default=256)
    p.add_argument("--sym-tol", dest="sym_tol", type=float, default=1e-6)
    common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("sigma-curve", help="speed-one growth rate against transverse wavenumber")
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--kmin", type=float, default=None, help="default 0.97 k0")
    p.add_argument("--kmax", type=float, default=None, help="default 0.9995 k0")
    p.add_argument("--num", type=int, default=12)
    p.add_argument("--Lx", type=float, default=80.0)
    p.add_argument("--Nx", type=int, default=256)
    common(p)
    p.set_defaults(func=cmd_sigma_curve)

    p = sub.add_parser("evolve", help="integrate from a TOML/JSON config")
    p.add_argument("--config", default=None, help="config file; omitted runs the built-in example")
    common(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("stability", help="orbital stability run")
    p.add_argument("--c", type=float, default=1.5)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--T", type=float, default=50.0)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--kind", choices=["transverse", "eigenmode"], default="transverse")
    p.add_argument("--l2-match", dest="l2_match", action="store_true")
    p.add_argument("--dt", type=float, default=None)
    _add_grid(p, Lx=50.0)
    common(p)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("instability", help="transverse instability growth run")
    p.add_argument("--c", type=float, default=3.0)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--delta", type=float, default=1e-4)
    p.add_argument("--T", type=float, default=30.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--backward", action="store_true", help="reflected data integrated to negative times")
    p.add_argument("--dt", type=float, default=None)
    _add_grid(p)
    common(p)
    p.set_defaults(func=cmd_instability)

    p = sub.add_parser("manifold", help="stable-manifold construction and decay fit")
    p.add_argument("--c", type=float, default=3.0)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--M", type=int, default=3)
    p.add_argument("--delta", type=float, default=0.02)
    p.add_argument("--T", type=float, default=20.0)
    p.add_argument("--picard", type=int, default=1, help="Picard iterations")
    p.add_argument("--reverse-check", dest="reverse_check", action="store_true")
    p.add_argument("--dt", type=float, default=None)
    _add_grid(p, Nx=512)
    common(p)
    p.set_defaults(func=cmd_manifold)

    p = sub.add_parser("sweep", help="run one experiment kind over a table of parameter cells")
    p.add_argument("cells", help="TOML/JSON file with a list 'cells' (and optionally 'kind')")
    p.add_argument("--kind", default=None)
    p.add_argument("--workers", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KPLabError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
