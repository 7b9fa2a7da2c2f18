"""Command-line experiment driver.

Subcommands: classify, complete, zoll, lie, geodesic, jacobi.  Every
option can also be given in an INI file passed with ``--config``; the
section name is the subcommand and keys are option names with dashes
replaced by underscores.  Command-line flags override the file.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import curve_model as cm
from . import lie_algebra as la
from .errors import (
    AmbiguousZero,
    DegenerateVelocity,
    InvalidMonodromy,
    PoleHandling,
    StepFailure,
    SturmViolation,
    ZeroLemmaViolation,
)
from .geodesic_engine import (
    LieGroupAtlas,
    flat_connection,
    integrate_geodesic,
    integrate_jacobi,
)
from .ricci_oscillation import verdicts_to_csv, verdict_for_geodesic
from .svgplot import line_plot
from .zoll import (
    ProfileError,
    ZollAtlas,
    gauss_curvature,
    jacobi_zero_completeness,
    zoll_atlas,
    zoll_geodesic_closure,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
NUMERICAL_ERRORS = (StepFailure, PoleHandling, SturmViolation, AmbiguousZero, ZeroLemmaViolation,
                    la.Singular, np.linalg.LinAlgError, FloatingPointError)


class UsageError(Exception):
    pass


# -- connection registry ------------------------------------------------------------

CONNECTIONS = ("flat", "flat-torus", "sphere", "zoll:paper", "zoll:round",
               "lie:so3", "lie:sl2", "lie:heisenberg", "lie:abelian3")


def build_connection(name: str, profile_params: dict | None = None):
    """Return (source, dim, kind) for a registry name."""
    if name in ("flat", "flat-torus"):
        return flat_connection(2, name=name), 2, name
    if name == "sphere":
        return zoll_atlas("round"), 2, "zoll"
    if name.startswith("zoll:"):
        return zoll_atlas(name[5:], **(profile_params or {})), 2, "zoll"
    if name.startswith("lie:"):
        alg = la.get_algebra(name[4:])
        return LieGroupAtlas(la.LeftInvariantConnection.scaled_ad(alg)), alg.dim, "lie"
    raise UsageError(f"unknown connection {name!r}; known: {', '.join(CONNECTIONS)}")


def sweep_initial_data(kind: str, dim: int, count: int, seed: int, source=None):
    """Deterministic list of (x0, v0) pairs for a sweep."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        if kind == "zoll":
            z, th, d = rng.uniform(-0.8, 0.8), rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi)
            out.append(source.unit_initial(z, th, d))
            continue
        v = rng.normal(size=dim)
        v /= np.linalg.norm(v)
        x = rng.uniform(0, 1, size=dim) if kind == "flat-torus" else np.zeros(dim)
        out.append((x, v))
    return out


def _verdict_task(args):
    name, params, gid, x0, v0, window = args
    source, _, kind = build_connection(name, params)
    v = verdict_for_geodesic(source, x0, v0, window, geodesic_id=gid)
    if kind == "zoll" and v.verdict == "undetermined":
        # closed geodesics: fall back on the vanishing Jacobi field certificate
        z, th = x0
        ez = math.sqrt(float(source.metric.g_zz(z)))
        et = math.sqrt(float(source.metric.g_tt(z)))
        direction = math.atan2(v0[0] * ez, v0[1] * et)
        closure = zoll_geodesic_closure(source, z, th, direction)
        if closure.closed:
            jv = jacobi_zero_completeness(source, closure, geodesic_id=gid)
            jv.zeros_backward = v.zeros_backward
            v = jv
    return v


def _map(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))  # map keeps input order


# -- subcommands ---------------------------------------------------------------------


def _parse_bound(text: str) -> float:
    text = text.strip().lower()
    if text in ("inf", "+inf"):
        return math.inf
    if text == "-inf":
        return -math.inf
    scale = 1.0
    if text.endswith("pi"):
        text, scale = text[:-2].rstrip("*") or "1", math.pi
    return float(text) * scale


def run_curve_classify(args, out) -> int:
    if args.interval:
        lo, hi = (_parse_bound(s) for s in args.interval.split(","))
        interval = (lo, hi)
    else:
        interval = args.cover
    if args.topology == "closed" and not args.monodromy:
        raise UsageError("a closed curve needs --monodromy")
    if args.topology == "open" and args.monodromy:
        raise UsageError("open curves take no monodromy")
    mono = cm.Monodromy.parse(args.monodromy) if args.monodromy else None
    try:
        cls = cm.classify_curve_connection(interval, mono)
    except InvalidMonodromy as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out.write(",".join(cm.CurveClass.CSV_HEADER) + "\n")
    out.write(cls.csv_row() + "\n")
    return EXIT_OK


def run_completeness(args, out) -> int:
    params = _profile_params(args)
    source, dim, kind = build_connection(args.conn, params)
    data = sweep_initial_data(kind, dim, args.sweep, args.seed, source)
    tasks = [(args.conn, params, f"{args.conn}#{i}", x0, v0, args.window)
             for i, (x0, v0) in enumerate(data)]
    verdicts = _map(_verdict_task, tasks, args.workers)
    text = verdicts_to_csv(verdicts)
    _emit(text, args.out, out)
    return EXIT_OK


def _profile_params(args) -> dict:
    return {"alpha": args.alpha, "beta": args.beta, "z0": args.z0}


def _zoll_geodesic_task(args):
    profile, params, i, z, th, d = args
    atlas = zoll_atlas(profile, **params)
    c = zoll_geodesic_closure(atlas, z, th, d)
    verdict = jacobi_zero_completeness(atlas, c, geodesic_id=f"zoll#{i}").verdict if c.closed \
        else "undetermined"
    return [str(i), f"{z:.12g}", f"{th:.12g}", f"{d:.12g}", str(c.closed).lower(),
            "" if c.period is None else f"{c.period:.12g}", f"{c.phase_error:.3e}",
            f"{c.clairaut_drift:.3e}", verdict], c


def run_zoll(args, out) -> int:
    params = _profile_params(args)
    atlas: ZollAtlas = zoll_atlas(args.profile, **params)
    z = np.linspace(-args.zmax, args.zmax, args.grid)
    f = atlas.metric.profile(z)
    k = gauss_curvature(atlas.metric, z)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["z", "f", "kappa"])
    for row in zip(z, f, k):
        w.writerow([f"{x:.12g}" for x in row])
    _emit(buf.getvalue(), args.out, out)
    neg = k < 0
    bands = int(np.sum(neg[1:] & ~neg[:-1]) + neg[0])
    print(f"min kappa {k.min():.6g}; negative bands {bands}", file=sys.stderr)
    if args.plot:
        line_plot([(z, k, "kappa"), (z, f, "f")], args.plot, title=f"{args.profile} profile",
                  xlabel="z", hline=0.0)
    if args.geodesics:
        rng = np.random.default_rng(args.seed)
        tasks = [(args.profile, params, i, rng.uniform(-0.8, 0.8), rng.uniform(0, 2 * math.pi),
                  rng.uniform(0, 2 * math.pi)) for i in range(args.geodesics)]
        results = _map(_zoll_geodesic_task, tasks, args.workers)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "z", "theta", "direction", "closed", "period", "phase_error",
                    "clairaut_drift", "verdict"])
        for row, _ in results:
            w.writerow(row)
        _emit(buf.getvalue(), args.geodesic_out, out)
        if args.trace:
            series = []
            for row, c in results[:6]:
                tr = c.trajectory
                ts = np.linspace(0, c.period or tr.t_span[1], 600)
                P = np.array([atlas.embed(*tr.state(t))[0] for t in ts])
                series.append((ts, P[:, 2], f"#{row[0]}"))
            line_plot(series, args.trace, title="height z along geodesics", xlabel="t")
        if not all(r[4] == "true" for r, _ in results):
            return EXIT_NUMERIC
    return EXIT_OK


def _matrix_rows(w, label, M):
    for i, row in enumerate(M):
        w.writerow([label, i + 1] + [f"{x + 0.0:.12g}" for x in row])


def run_lie(args, out) -> int:
    alg = la.load_algebra(args.algebra_file) if args.algebra_file else la.get_algebra(args.algebra)
    conn = la.LeftInvariantConnection.scaled_ad(alg, args.p)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    status = EXIT_OK
    if args.op == "killing":
        w.writerow(["matrix", "row"] + [f"c{j + 1}" for j in range(alg.dim)])
        _matrix_rows(w, "B", la.killing_form(alg))
    elif args.op == "ricci":
        r = la.symmetrized_ricci(conn)
        ref = -0.25 * la.killing_form(alg)
        w.writerow(["matrix", "row"] + [f"c{j + 1}" for j in range(alg.dim)])
        _matrix_rows(w, "r", r)
        _matrix_rows(w, "-B/4", ref)
        print(f"max |r + B/4| = {np.max(np.abs(r - ref)):.3e}", file=sys.stderr)
    elif args.op == "torsion":
        w.writerow(["torsion_free", "max_torsion"])
        w.writerow([str(la.is_torsion_free(conn)).lower(),
                    f"{np.max(np.abs(la.torsion_tensor(conn))):.3e}"])
    elif args.op == "normality":
        rep = la.normality_check(la.projective_lift(conn))
        w.writerow(["normal", "residual", "invariant_residual", "traced_curvature"])
        w.writerow([str(rep.normal).lower(), f"{rep.residual:.3e}",
                    f"{rep.invariant_residual:.3e}", f"{rep.traced_curvature:.3e}"])
    elif args.op == "classify":
        w.writerow(["direction", "r(A,A)", "kind"])
        dirs = _parse_vectors(args.direction, alg.dim) if args.direction else list(np.eye(alg.dim))
        r = la.symmetrized_ricci(conn)
        for A in dirs:
            w.writerow([" ".join(f"{x:g}" for x in A), f"{A @ r @ A:.12g}",
                        la.classify_direction(conn, A)])
    _emit(buf.getvalue(), args.out, out)
    return status


def _parse_vectors(items, dim):
    vecs = []
    for s in items:
        v = np.array([float(x) for x in s.replace(",", " ").split()])
        if len(v) != dim:
            raise UsageError(f"vector {s!r} must have {dim} components")
        vecs.append(v)
    return vecs


def _initial(args, dim):
    x0 = _parse_vectors([args.x0], dim)[0] if args.x0 else np.zeros(dim)
    if not args.v0:
        raise UsageError("--v0 is required")
    v0 = _parse_vectors([args.v0], dim)[0]
    return x0, v0


def run_geodesic(args, out) -> int:
    source, dim, _ = build_connection(args.conn, _profile_params(args))
    x0, v0 = _initial(args, dim)
    traj = integrate_geodesic(source, x0, v0, (0.0, args.t1), rtol=args.rtol, atol=args.atol)
    _emit(traj.to_csv(), args.out, out)
    if traj.exit is not None:
        print(f"left the chart at t={traj.exit.t:.6g}", file=sys.stderr)
    return EXIT_OK


def run_jacobi(args, out) -> int:
    source, dim, _ = build_connection(args.conn, _profile_params(args))
    x0, v0 = _initial(args, dim)
    traj = integrate_geodesic(source, x0, v0, (0.0, args.t1), rtol=args.rtol, atol=args.atol)
    m = dim - 1
    a0 = _parse_vectors([args.a0], m)[0] if args.a0 else np.zeros(m)
    a1 = _parse_vectors([args.a1], m)[0] if args.a1 else np.ones(m)
    jf = integrate_jacobi(traj, a0, a1)
    _emit(jf.to_csv(), args.out, out)
    return EXIT_OK


def _emit(text, path, out):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        out.write(text)


# -- argument parsing ---------------------------------------------------------------


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _add_profile(p):
    p.add_argument("--alpha", type=_positive, default=1.0, help="profile alpha")
    p.add_argument("--beta", type=float, default=0.25, help="profile beta")
    p.add_argument("--z0", type=float, default=0.5, help="profile z0")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="projcomplete", description=__doc__.split("\n")[0])
    ap.add_argument("--config", help="INI file with a section per subcommand")
    sub = ap.add_subparsers(dest="command", required=True)
    ap.set_defaults(_subparsers=sub.choices)

    p = sub.add_parser("classify", help="classify a projective connection on a curve")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--cover", choices=sorted(cm.COVERS), default="full",
                   help="developing interval: full cover, one affine chart, or x > 0")
    g.add_argument("--interval", help="developing interval LO,HI in the global phi "
                                      "coordinate (accepts inf and multiples like 2pi)")
    p.add_argument("--monodromy", help="rot:THETA | trans:S[:N] | dil:R[:N]")
    p.add_argument("--topology", choices=("closed", "open"), default="closed")
    p.set_defaults(run=run_curve_classify)

    p = sub.add_parser("complete", help="completeness verdicts over a geodesic sweep")
    p.add_argument("--conn", default="sphere", help=f"one of {', '.join(CONNECTIONS)}")
    p.add_argument("--sweep", type=int, default=8, help="number of geodesics")
    p.add_argument("--window", type=_positive, default=60.0, help="affine parameter window")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV output path (default stdout)")
    _add_profile(p)
    p.set_defaults(run=run_completeness)

    p = sub.add_parser("zoll", help="curvature table, plots and closure sweep for a Zoll metric")
    p.add_argument("--profile", choices=("paper", "round"), default="paper")
    _add_profile(p)
    p.add_argument("--grid", type=int, default=201)
    p.add_argument("--zmax", type=_positive, default=0.99)
    p.add_argument("--plot", help="SVG plot of kappa(z)")
    p.add_argument("--out", help="curvature CSV path (default stdout)")
    p.add_argument("--geodesics", type=int, default=0, help="closure sweep size")
    p.add_argument("--geodesic-out", help="closure CSV path (default stdout)")
    p.add_argument("--trace", help="SVG plot of z(t) along the first sweep geodesics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(run=run_zoll)

    p = sub.add_parser("lie", help="left-invariant connection Gamma = p ad on a Lie algebra")
    p.add_argument("--algebra", default="so3", help="registry name: so3, sl2, heisenberg, abelianN")
    p.add_argument("--algebra-file", help="text file: 'dim n' then lines 'i j k value'")
    p.add_argument("--op", choices=("killing", "ricci", "torsion", "normality", "classify"),
                   default="ricci")
    p.add_argument("--p", type=float, default=0.5, help="Gamma = p ad")
    p.add_argument("--direction", action="append", help="direction for --op classify")
    p.add_argument("--out")
    p.set_defaults(run=run_lie)

    for name, fn, helptext in (("geodesic", run_geodesic, "integrate one geodesic"),
                               ("jacobi", run_jacobi, "Jacobi field along one geodesic")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--conn", default="sphere")
        p.add_argument("--x0", help="start point, e.g. '0.1 0'")
        p.add_argument("--v0", help="initial velocity")
        p.add_argument("--t1", type=_positive, default=2 * math.pi)
        p.add_argument("--rtol", type=_positive, default=1e-10)
        p.add_argument("--atol", type=_positive, default=1e-10)
        p.add_argument("--out")
        _add_profile(p)
        if name == "jacobi":
            p.add_argument("--a0", help="initial normal components")
            p.add_argument("--a1", help="initial normal derivatives")
        p.set_defaults(run=fn)
    return ap


def _apply_config(parser, argv):
    """Re-parse with defaults taken from the --config file."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = configparser.ConfigParser()
    if not cfg.read(args.config):
        raise UsageError(f"cannot read config {args.config!r}")
    if not cfg.has_section(args.command):
        return args
    sub = args._subparsers[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items(args.command):
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"unknown key {key!r} in [{args.command}]")
        action = known[dest]
        if isinstance(action, argparse._AppendAction):
            defaults[dest] = [v for v in value.split(";") if v.strip()]
        elif action.type is not None:
            try:
                defaults[dest] = action.type(value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"[{args.command}] {key}: {exc}") from None
        else:
            defaults[dest] = value
        if action.choices is not None and defaults[dest] not in action.choices:
            raise UsageError(f"[{args.command}] {key}: {value!r} not in {sorted(action.choices)}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.run(args, out)
    except (UsageError, ProfileError, KeyError, ValueError, DegenerateVelocity,
            la.InvalidStructureConstants, OSError) as exc:
        if isinstance(exc, NUMERICAL_ERRORS):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
