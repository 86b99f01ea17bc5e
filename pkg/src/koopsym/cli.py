"""Command-line interface.

Subcommands::

    koopsym systems list [FILTER]
    koopsym eig      --system NAME [--grid lo1,lo2:hi1,hi2:step] [--out DIR] ...
    koopsym verify   {eigenproperty,symmetry,duality,reconstruct,crosscheck} --system NAME ...
    koopsym resonance --system NAME [--max-degree N]

Exit codes
----------
0   success (all points converged / report passed / no resonance)
1   verify report failed; resonance found
2   eig: some grid point did not converge
3   eig: Hurwitz, diagonalizability or resonance gate failed
64  usage or configuration error
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .dynamics import GridSpec, compile_field, get_system, registry
from .dynamics.integrate import DEFAULT_ATOL, DEFAULT_RTOL
from .exceptions import KoopsymError, NotDiagonalizableError, NotHurwitzError
from .geometry import (
    CertificationReport,
    _invert_batch,
    check_conservative,
    check_linearizing,
    check_symmetry,
)
from .koopman import (
    CONVERGED,
    ConvergenceSchedule,
    Eigenfunction,
    estimate_fields,
    estimate_points,
    field_metadata,
    gradient_field,
    log_gradient_frame_field,
    magnitude_floor,
    path_integral_eigenfunction,
    reconstruct_field,
    symmetry_frame_field,
    symmetry_frames,
    verify_eigenfunction_property,
    write_field_csv,
    write_metadata,
)
from .koopman.estimate import EXPONENT_GUARD, eigenfunctions_at_horizon
from .koopman.io import read_field_csv
from .spectral import check_resonance, linearize

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_NOT_CONVERGED = 2
EXIT_GATE = 3
EXIT_USAGE = 64

OUT_ENV = "KOOPSYM_OUT"
SUITES = ("eigenproperty", "symmetry", "duality", "reconstruct", "crosscheck")

DEFAULTS = {
    "system": "vdp-reverse",
    "params": {},
    "grid": "-1,-1:1,1:0.05",
    "T0": 4.0,
    "growth": 1.5,
    "Tmax": 64.0,
    "rel_tol": 1e-6,
    "floor": 1e-12,
    "atol": DEFAULT_ATOL,
    "rtol": DEFAULT_RTOL,
    "seed": 0,
    "threads": 1,
    "force": False,
    "max_degree": 10,
}

# per-suite defaults: points, tolerance
SUITE_DEFAULTS = {
    "eigenproperty": (100, 1e-2),
    "symmetry": (20, 1e-3),
    "duality": (20, 1e-2),
    "reconstruct": (20, 5e-2),
    "crosscheck": (25, 1e-3),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _param(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected k=v, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter value must be a number: {text!r}") from None


def _add_common(p):
    p.add_argument("--config", help="YAML/JSON run config; flags override its values")
    p.add_argument("--system", help="registry name or path to a system file")
    p.add_argument("--param", action="append", type=_param, metavar="K=V",
                   help="system parameter override (repeatable)")
    p.add_argument("--T0", type=float)
    p.add_argument("--growth", type=float)
    p.add_argument("--Tmax", type=float)
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--floor", type=float, help="magnitude floor in the convergence test")
    p.add_argument("--atol", type=float, help="integrator absolute tolerance")
    p.add_argument("--rtol", type=float, help="integrator relative tolerance")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or the current directory)")
    p.add_argument("--force", action="store_true", default=None,
                   help="run even if the non-resonance gate fails")
    p.add_argument("--max-degree", dest="max_degree", type=int)


def build_parser():
    parser = _Parser(prog="koopsym", description="Principal Koopman eigenfunctions and symmetry checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    systems = sub.add_parser("systems", help="inspect the system registry")
    ssub = systems.add_subparsers(dest="action", required=True, parser_class=_Parser)
    lst = ssub.add_parser("list", help="list built-in systems")
    lst.add_argument("filter", nargs="?", default="", help="substring filter on the name")

    eig = sub.add_parser("eig", help="estimate eigenfunctions on a grid and write CSV files")
    _add_common(eig)
    eig.add_argument("--grid", help="lo1,lo2:hi1,hi2:step")
    eig.add_argument("--index", type=int, action="append",
                     help="eigenvalue index, 1-based (repeatable; default all)")
    eig.add_argument("--seed", type=int)

    ver = sub.add_parser("verify", help="run a certification suite and write a JSON report")
    ver.add_argument("suite", choices=SUITES)
    _add_common(ver)
    ver.add_argument("--seed", type=int)
    ver.add_argument("--npoints", type=int)
    ver.add_argument("--tol", type=float, help="suite tolerance")
    ver.add_argument("--annulus", help="radii rmin:rmax for frame suites (default 0.3:0.9)")
    ver.add_argument("--box", help="sampling box lo:hi per axis (default -0.8:0.8)")
    ver.add_argument("--generator", help="comma-separated expressions for a candidate symmetry")
    ver.add_argument("--index", type=int, help="eigenvalue index, 1-based (default 1)")
    ver.add_argument("--t-probe", dest="t_probe", type=float, help="probe time (default 1)")
    ver.add_argument("--field", help="eigenfunction CSV written by 'eig' (eigenproperty suite)")

    res = sub.add_parser("resonance", help="test the spectrum for resonances")
    _add_common(res)
    return parser


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        cfg = yaml.safe_load(fh) if not str(path).endswith(".json") else json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config file must contain a mapping")
    flat = {}
    for key, value in cfg.items():
        if key in ("schedule", "tolerances") and isinstance(value, dict):
            flat.update(value)
        elif key == "grid" and isinstance(value, dict):
            flat["grid"] = GridSpec(value["lower"], value["upper"], value["spacing"])
        elif key == "output":
            flat["out"] = value
        else:
            flat[key] = value
    unknown = set(flat) - set(DEFAULTS) - {"out", "npoints", "tol", "annulus", "box", "generator",
                                           "index", "t_probe"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return flat


def resolve(args):
    """Merge defaults, the config file and command-line flags (flags win)."""
    cfg = dict(DEFAULTS)
    cfg.update(_load_config(getattr(args, "config", None)))
    for key, value in vars(args).items():
        if key in ("config", "command", "param") or value is None:
            continue
        cfg[key] = value
    params = dict(cfg.get("params") or {})
    params.update(dict(args.param or []))
    cfg["params"] = params
    if isinstance(cfg.get("grid"), str):
        cfg["grid"] = GridSpec.parse(cfg["grid"])
    cfg["out"] = Path(cfg.get("out") or os.environ.get(OUT_ENV) or ".")
    return cfg


def _system(cfg):
    return get_system(cfg["system"], **cfg["params"])


def _schedule(cfg):
    return ConvergenceSchedule(cfg["T0"], cfg["growth"], cfg["Tmax"], cfg["rel_tol"], cfg["floor"])


def _tol(cfg):
    return (float(cfg["atol"]), float(cfg["rtol"]))


def _write_json(obj, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- systems ---------------------------------------------------------------


def cmd_systems_list(args):
    rows = [("name", "dim", "params", "equilibrium")]
    for s in registry():
        if args.filter and args.filter not in s.name:
            continue
        params = ",".join(f"{k}={v:g}" for k, v in sorted(dict(s.params).items())) or "-"
        eq = "(" + ", ".join(f"{v:g}" for v in s.equilibrium) + ")"
        rows.append((s.name, str(s.dim), params, eq))
    widths = [max(len(r[k]) for r in rows) for k in range(4)]
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return EXIT_OK


# -- eig -------------------------------------------------------------------


def _gate(system, cfg):
    """Linearize and run the resonance gate; returns ``(spec, report)`` or raises."""
    spec = linearize(system)
    report = check_resonance(spec, cfg["max_degree"])
    return spec, report


def cmd_eig(args):
    cfg = resolve(args)
    system = _system(cfg)
    try:
        spec, report = _gate(system, cfg)
    except (NotHurwitzError, NotDiagonalizableError) as exc:
        print(f"gate failed: {exc}", file=sys.stderr)
        return EXIT_GATE
    if report.resonant:
        alpha, k, gap = report.violations[0]
        msg = f"resonance: alpha = {alpha} -> lambda_{k + 1} (gap {gap:.3e})"
        if not cfg["force"]:
            print(f"gate failed: {msg}; use --force to run anyway", file=sys.stderr)
            return EXIT_GATE
        print(f"warning: {msg}; continuing because of --force", file=sys.stderr)
    grid = cfg["grid"]
    if grid.dim != system.dim:
        raise UsageError(f"grid has dimension {grid.dim} but {system.name} has {system.dim}")
    indices = [i - 1 for i in (cfg.get("index") or range(1, system.dim + 1))]
    for i in indices:
        if not 0 <= i < system.dim:
            raise UsageError(f"index {i + 1} out of range 1..{system.dim}")
    fields = estimate_fields(system, spec, grid, indices, _schedule(cfg), _tol(cfg), cfg["threads"])
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(system.name).name
    for f in fields:
        path = write_field_csv(f, out / f"{stem}_psi{f.index + 1}.csv")
        counts = {s: int(np.sum(f.status == s)) for s in sorted(set(f.status))}
        print(f"{path}: lambda = {f.eigenvalue:.6g}, status counts {counts}")
    meta = field_metadata(fields, system, spec, _tol(cfg), __version__)
    meta["resonance"] = report.to_dict()
    write_metadata(meta, out / f"{stem}_meta.json")
    ok = all(f.all_converged for f in fields)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


# -- verify ----------------------------------------------------------------


def _ranges(text, name):
    try:
        lo, hi = (float(v) for v in str(text).split(":"))
    except ValueError:
        raise UsageError(f"bad {name} {text!r}, expected lo:hi") from None
    if not lo < hi:
        raise UsageError(f"{name} lower bound must be below the upper bound")
    return lo, hi


def sample_box(rng, m, dim, lo, hi):
    return rng.uniform(lo, hi, size=(m, dim))


def sample_annulus(rng, m, dim, rmin, rmax, center):
    """Points with ``rmin <= |x - center| <= rmax``, uniform in area/volume."""
    d = rng.standard_normal((m, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = (rng.uniform(rmin**dim, rmax**dim, size=m)) ** (1.0 / dim)
    return center + r[:, None] * d


def _sample(cfg, system, rng, m, kind):
    if kind == "annulus":
        rmin, rmax = _ranges(cfg.get("annulus") or "0.3:0.9", "annulus")
        if rmin < 0:
            raise UsageError("annulus radii must be non-negative")
        return sample_annulus(rng, m, system.dim, rmin, rmax, np.asarray(system.equilibrium))
    lo, hi = _ranges(cfg.get("box") or "-0.8:0.8", "box")
    return np.asarray(system.equilibrium) + sample_box(rng, m, system.dim, lo, hi)


def geometry_horizon(spec, schedule):
    """Fixed horizon for differentiated eigenfunctions: ``Tmax`` within the exponent guard."""
    rate = float(np.max(np.abs(np.real(spec.eigenvalues))))
    return min(schedule.Tmax, 0.9 * EXPONENT_GUARD / rate)


def _suite_report(name, reports, extra=None):
    passed = bool(reports) and all(r.passed for r in reports)
    out = {"suite": name, "pass": passed, "reports": [r.to_dict() for r in reports]}
    out.update(extra or {})
    return out


def _field_interpolant_from_csv(path, dim):
    from scipy.interpolate import RegularGridInterpolator

    data = read_field_csv(path)
    axes = [np.unique(data["points"][:, k]) for k in range(dim)]
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != len(data["points"]):
        raise UsageError(f"{path} is not a full rectangular grid")
    vals = np.where(data["status"] == CONVERGED, data["values"], np.nan).reshape(shape)
    method = "cubic" if all(n >= 4 for n in shape) else "linear"
    parts = [RegularGridInterpolator(axes, v, method=method, bounds_error=False, fill_value=np.nan)
             for v in (vals.real, vals.imag)]
    return lambda X: parts[0](X) + 1j * parts[1](X)


def verify_eigenproperty(cfg, system, spec, X, tol):
    i = (cfg.get("index") or 1) - 1
    lam = complex(spec.eigenvalues[i])
    if cfg.get("field"):
        psi = _field_interpolant_from_csv(cfg["field"], system.dim)
    else:
        psi = Eigenfunction(system, spec, i, schedule=_schedule(cfg), tol=_tol(cfg), threads=cfg["threads"])
    rep = verify_eigenfunction_property(psi, lam, system, X, cfg.get("t_probe") or 1.0, tol, cfg["floor"], _tol(cfg))
    return [rep]


def _psis(cfg, system, spec, X):
    T = geometry_horizon(spec, _schedule(cfg))
    psis = [Eigenfunction(system, spec, i, horizon=T, tol=_tol(cfg)) for i in range(system.dim)]
    vals, _ = eigenfunctions_at_horizon(system, spec, X, T, tol=_tol(cfg))
    return psis, magnitude_floor(vals), T


def verify_symmetry(cfg, system, spec, X, tol):
    if cfg.get("generator"):
        G = compile_field([e.strip() for e in cfg["generator"].split(",")], cfg["params"])
        if np.shape(G(X[:1])) != (1, system.dim):
            raise UsageError("generator dimension does not match the system")
        return [check_symmetry(G, system, X, tol, name="symmetry[generator]")]
    psis, floor, _ = _psis(cfg, system, spec, X)
    sample = symmetry_frames(psis, X, floor=floor)
    flags = sample.flags
    Ef = symmetry_frame_field(psis, floor=floor)
    Xf = log_gradient_frame_field(psis, floor=floor)
    reports = []
    n = system.dim
    for i in range(n):
        reports.append(check_symmetry(Ef.column(i), system, X, tol, name=f"bracket[E{i + 1},F]", flags=flags))
    for i in range(n):
        for j in range(i + 1, n):
            reports.append(check_symmetry(Ef.column(i), Ef.column(j), X, tol,
                                          name=f"bracket[E{i + 1},E{j + 1}]", flags=flags))
    for i in range(n):
        reports.append(check_conservative(Xf.column(i), X, tol=tol, name=f"conservative[X{i + 1}]", flags=flags))
        reports.append(check_linearizing(Xf.column(i), system, spec.eigenvalues[i], X, tol,
                                         name=f"linearizing[X{i + 1}]", flags=flags))
    return reports


def verify_duality(cfg, system, spec, X, tol):
    psis, floor, _ = _psis(cfg, system, spec, X)
    s = symmetry_frames(psis, X, floor=floor)
    n = system.dim
    eye = np.eye(n)
    with np.errstate(all="ignore"):
        prod = np.einsum("mji,mjk->mik", s.X.conj(), s.E)
        r_prod = np.max(np.abs(prod - eye), axis=(1, 2))
        back, _ = _invert_batch(s.E)
        r_inv = np.max(np.abs(back - s.X), axis=(1, 2)) / np.maximum(1.0, np.max(np.abs(s.X), axis=(1, 2)))
        F = system.rhs(X)
        pairing = np.einsum("mji,mj->mi", s.X.conj(), F)
        lam = np.asarray(spec.eigenvalues)
        r_pair = np.max(np.abs(pairing - lam[None, :]) / np.maximum(1.0, np.abs(lam))[None, :], axis=1)
    tight = min(tol, 1e-10)
    return [
        CertificationReport.from_residuals("product-identity", X, r_prod, tight, s.flags),
        CertificationReport.from_residuals("involution", X, r_inv, min(tol, 1e-9), s.flags),
        CertificationReport.from_residuals("pairing", X, r_pair, tol, s.flags),
    ]


def verify_reconstruct(cfg, system, spec, X, tol):
    psis, _, _ = _psis(cfg, system, spec, X)
    F, imag, cond = reconstruct_field(psis, spec.eigenvalues, X)
    true = system.rhs(X)
    with np.errstate(all="ignore"):
        err = np.linalg.norm(F - true, axis=1) / np.maximum(np.linalg.norm(true, axis=1), 1e-12)
    limit = 1e6
    flags = {k: "ill-conditioned" for k in range(len(X)) if not cond[k] <= limit}
    details = {"max_condition": float(np.max(cond[np.isfinite(cond)])) if np.any(np.isfinite(cond)) else None,
               "condition_limit": limit}
    return [
        CertificationReport.from_residuals("reconstruction-error", X, err, tol, flags, details),
        CertificationReport.from_residuals("imaginary-residual", X, imag, min(tol, 1e-3), flags),
    ]


def verify_crosscheck(cfg, system, spec, X, tol):
    sched = _schedule(cfg)
    res = estimate_points(system, spec, X, None, sched, _tol(cfg), cfg["threads"])
    T_end = geometry_horizon(spec, sched)
    n = system.dim
    resid = np.full(len(X), np.nan)
    flags = {}
    for k, x in enumerate(X):
        if not np.all(res["status"][k] == CONVERGED):
            flags[k] = "not-converged"
            continue
        try:
            pi = np.array([path_integral_eigenfunction(system, spec, i, x, T_end, tol=_tol(cfg)) for i in range(n)])
        except KoopsymError:
            flags[k] = "diverged-trajectory"
            continue
        est = res["values"][k]
        resid[k] = np.max(np.abs(est - pi) / np.maximum(np.abs(est), cfg["floor"]))
    reports = [CertificationReport.from_residuals("path-integral", X, resid, tol, flags, {"T_end": T_end})]
    # dual-route gradient check at the first few clean points
    T = geometry_horizon(spec, sched)
    psi = Eigenfunction(system, spec, 0, horizon=T, tol=_tol(cfg))
    clean = [k for k in range(len(X)) if k not in flags][:5]
    gres = np.full(len(X), np.nan)
    gflags = {k: "skipped" for k in range(len(X)) if k not in clean}
    for k in clean:
        fd = gradient_field(psi, X[k])
        ref = psi.gradient(X[k][None, :])[0]
        gres[k] = np.linalg.norm(fd - ref) / np.linalg.norm(ref)
    reports.append(CertificationReport.from_residuals("gradient-routes", X, gres, 1e-4, gflags))
    return reports


_VERIFY = {
    "eigenproperty": (verify_eigenproperty, "box"),
    "symmetry": (verify_symmetry, "annulus"),
    "duality": (verify_duality, "annulus"),
    "reconstruct": (verify_reconstruct, "annulus"),
    "crosscheck": (verify_crosscheck, "box"),
}


def cmd_verify(args):
    cfg = resolve(args)
    suite = args.suite
    system = _system(cfg)
    try:
        spec = linearize(system)
    except (NotHurwitzError, NotDiagonalizableError) as exc:
        print(f"gate failed: {exc}", file=sys.stderr)
        return EXIT_GATE
    npts, tol = SUITE_DEFAULTS[suite]
    npts = cfg.get("npoints") or npts
    tol = cfg.get("tol") or tol
    fn, kind = _VERIFY[suite]
    rng = np.random.default_rng(cfg["seed"])
    X = _sample(cfg, system, rng, npts, kind)
    reports = fn(cfg, system, spec, X, tol)
    out = _suite_report(suite, reports, {"system": system.name, "seed": cfg["seed"], "points": int(npts)})
    path = _write_json(out, cfg["out"] / f"verify_{suite}_{Path(system.name).name}.json")
    for r in reports:
        verdict = "PASS" if r.passed else "FAIL"
        print(f"{verdict} {r.check_name}: max residual {r.max_residual:.3e} "
              f"(tol {r.tolerance:.1e}, {r.points_tested} points, {len(r.flagged_points)} flagged)")
    print(f"report written to {path}")
    return EXIT_OK if out["pass"] else EXIT_FAIL


# -- resonance -------------------------------------------------------------


def cmd_resonance(args):
    cfg = resolve(args)
    if cfg["max_degree"] < 2:
        raise UsageError("max degree must be at least 2")
    system = _system(cfg)
    try:
        spec = linearize(system)
    except (NotHurwitzError, NotDiagonalizableError) as exc:
        print(f"gate failed: {exc}", file=sys.stderr)
        return EXIT_GATE
    report = check_resonance(spec, cfg["max_degree"])
    lam = ", ".join(f"{z:.6g}" for z in spec.eigenvalues)
    print(f"{system.name}: eigenvalues {lam}")
    print(f"non-resonant up to degree {report.non_resonant_up_to} of {report.requested_degree}; "
          f"sufficient degree {report.sufficient_degree}")
    for alpha, k, gap in report.violations:
        print(f"violation: alpha = {alpha} -> lambda_{k + 1} (gap {gap:.3e})")
    return EXIT_FAIL if report.resonant else EXIT_OK


_COMMANDS = {"systems": cmd_systems_list, "eig": cmd_eig, "verify": cmd_verify, "resonance": cmd_resonance}


_RANGE_FLAGS = ("--grid", "--box", "--annulus")


def _join_range_values(argv):
    # argparse takes "-1,-1:1,1:0.05" for an option; glue it to its flag
    out, it = [], iter(argv)
    for tok in it:
        if tok in _RANGE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_join_range_values(argv))
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"koopsym: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
