"""Command-line front end.

Every subcommand writes its artifacts plus ``manifest.json`` into
``--out-dir``.  Exit codes: 0 success, 2 domain error, 3 numerical failure,
64 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .entropy import DEFAULT_R, entropy_series, first_variation_check
from .errors import DomainError, NumericalError
from .expander_solver import (
    ShootingSpec,
    asymptotic_aperture,
    find_nonuniqueness_pair,
    integrate_profile,
    match_cone,
    read_pair,
    write_pair,
)
from .geometry_core import RotCone, expander_residual, fmt, write_curve
from .jacobi_analysis import verify_barrier
from .normal_graph import (
    build_graph_field,
    graph_pde_residual,
    trace_at_infinity,
    verify_pointwise_decay,
)

EXIT_OK, EXIT_DOMAIN, EXIT_NUMERICAL, EXIT_USAGE = 0, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}") from exc


def _json_default(o):
    if isinstance(o, (np.floating, float)):
        return float(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _round17(o):
    """Round floats through 17 significant digits (a no-op for binary64)."""
    if isinstance(o, float):
        return float(fmt(o)) if math.isfinite(o) else o
    if isinstance(o, dict):
        return {k: _round17(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_round17(v) for v in o]
    return o


def _write_json(path: Path, data) -> Path:
    data = json.loads(json.dumps(data, default=_json_default))
    path.write_text(json.dumps(_round17(data), indent=2, sort_keys=True, allow_nan=True) + "\n")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _spec(args, kind: str | None = None) -> ShootingSpec:
    kw = {"n": args.n}
    if kind or getattr(args, "kind", None):
        kw["kind"] = kind or args.kind
    if args.tol is not None:
        kw["tol"] = args.tol
    return ShootingSpec(**kw)


def _aperture(args) -> float:
    if args.aperture is None:
        raise DomainError("--aperture is required")
    return math.radians(args.aperture) if args.deg else float(args.aperture)


# ---------------------------------------------------------------------------
# Subcommands; each returns (outputs, inputs, summary)
# ---------------------------------------------------------------------------


def cmd_solve(args, out: Path):
    if args.shoot is None:
        raise DomainError("--shoot is required")
    spec = _spec(args)
    curve = integrate_profile(spec, args.shoot)
    fit = asymptotic_aperture(curve)
    res = expander_residual(curve)
    csv_path, side = write_curve(curve, out / "curve.csv")
    report = {"aperture": fit.to_dict(), "max_expander_residual": float(np.max(np.abs(res))),
              "kind": spec.kind, "shoot": args.shoot}
    rep = _write_json(out / "aperture.json", report)
    return [csv_path, side, rep], [], {"aperture": fit.aperture}


def cmd_match_cone(args, out: Path):
    spec = _spec(args)
    a = _aperture(args)
    cone = RotCone.double(args.n, a) if args.double_cone else RotCone.single(args.n, a)
    curve = match_cone(cone, spec.kind, spec, args.branch)
    fit = asymptotic_aperture(curve)
    csv_path, side = write_curve(curve, out / "curve.csv")
    rep = _write_json(out / "match.json", {"target": a, "shoot": curve.shoot, "aperture": fit.to_dict()})
    return [csv_path, side, rep], [], {"shoot": curve.shoot, "aperture": fit.aperture}


def cmd_pair(args, out: Path):
    if not args.double_cone:
        raise DomainError("disk/catenoid pairs need --double-cone")
    a = _aperture(args)
    pairs = find_nonuniqueness_pair(RotCone.double(args.n, a), _spec(args, "disk"))
    if not pairs:
        raise DomainError(f"aperture a = {a!r}: no catenoid over this cone")
    pair = pairs[args.branch]
    path = write_pair(pair, out)
    return [path, out / "sigma0.csv", out / "sigma1.csv"], [], {"shoots": list(pair.shoots),
                                                                 "branches": len(pairs)}


def _load_pair(args):
    if not args.pair:
        raise DomainError("--pair is required")
    return read_pair(args.pair)


def cmd_entropy(args, out: Path):
    pair = _load_pair(args)
    R = args.r or list(DEFAULT_R)
    method = "cutoff-phi" if args.delta is not None else "ball-truncation"
    series = entropy_series(pair, R, method, args.delta if args.delta is not None else 0.5,
                            extrapolate=args.extrapolate, R_split=args.r_split)
    csv_path = series.to_csv(out / "entropy.csv")
    report = series.to_dict()
    if args.oracle:
        from .oracle import OracleSettings, pair_oracle

        R_or = [r for r in R if r <= 24]
        st = OracleSettings(rho_big=max(23.0, max(R_or) + 3.0))
        ref = pair_oracle(pair, R_values=tuple(R_or), settings=st)
        ours = dict(zip(series.R.tolist(), series.E.tolist()))
        rel = [abs(ours[r] - e) / abs(e) for r, e in zip(ref.R, ref.E)]
        report["oracle"] = {"R": ref.R, "E": ref.E, "max_rel_diff": max(rel), "neck_shift": ref.neck_shift}
    rep = _write_json(out / "entropy.json", report)
    return [csv_path, rep], [Path(args.pair)], {"E_limit": series.E_limit, "fit_order": series.fit_order}


def cmd_trace(args, out: Path):
    pair = _load_pair(args)
    f = build_graph_field(pair)
    tr = trace_at_infinity(f)
    csv_path = f.to_csv(out / "graph.csv")
    rep = _write_json(out / "trace.json", tr.to_dict())
    return [csv_path, rep], [Path(args.pair)], {"trace": tr.trace, "rate": tr.rate}


def cmd_variation(args, out: Path):
    a = _aperture(args)
    step = args.step
    k = args.points // 2
    grid = [a + (i - k) * step for i in range(args.points)]
    chk = first_variation_check(grid, spec=_spec(args, "disk"), branch=args.branch)
    rep = chk.to_json(out / "variation.json")
    return [rep], [], {"max_rel_error": max(chk.rel_error)}


def cmd_verify(args, out: Path):
    pair = _load_pair(args)
    f = build_graph_field(pair)
    decay = verify_pointwise_decay(f)
    tr = trace_at_infinity(f)
    pde = graph_pde_residual(f, pair.sigma0)
    bA = verify_barrier(pair.sigma0, "w_A", {"A": 10.0}, (8.0, 20.0))
    be = verify_barrier(pair.sigma0, "w_eps", {"eps": 0.1}, (8.0, 25.0))
    report = {
        "decay": decay.to_dict(),
        "trace": tr.to_dict(),
        "pde_residual": pde.to_dict(),
        "barrier_w_A": bA.to_dict(),
        "barrier_w_eps": be.to_dict(),
    }
    for key in ("barrier_w_A", "barrier_w_eps"):
        report[key].pop("rho")
        report[key].pop("margin")
    rep = _write_json(out / "verify.json", report)
    return [rep], [Path(args.pair)], {"slope": decay.slope, "rate": tr.rate}


COMMANDS = {
    "solve": cmd_solve,
    "match-cone": cmd_match_cone,
    "pair": cmd_pair,
    "entropy": cmd_entropy,
    "trace": cmd_trace,
    "variation": cmd_variation,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--n", type=int, default=2, help="hypersurface dimension")
    common.add_argument("--tol", type=float, default=None, help="relative ODE tolerance")
    common.add_argument("--out-dir", type=Path, default=Path("."), help="artifact directory")
    common.add_argument("--deg", action="store_true", help="apertures are given in degrees")

    p = _Parser(prog="expander-entropy", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", parents=[common], help="integrate one profile curve")
    s.add_argument("--kind", choices=("disk", "catenoid"), default="disk")
    s.add_argument("--shoot", type=float)

    s = sub.add_parser("match-cone", parents=[common], help="solve for a prescribed aperture")
    s.add_argument("--kind", choices=("disk", "catenoid"), default="disk")
    s.add_argument("--aperture", type=float)
    s.add_argument("--double-cone", action="store_true")
    s.add_argument("--branch", type=int, default=-1)

    s = sub.add_parser("pair", parents=[common], help="disk pair and catenoid over a double cone")
    s.add_argument("--aperture", type=float)
    s.add_argument("--double-cone", action="store_true")
    s.add_argument("--branch", type=int, default=-1)

    s = sub.add_parser("entropy", parents=[common], help="relative entropy series")
    s.add_argument("--pair", type=Path)
    s.add_argument("--r", type=_floats, help="comma separated radii")
    s.add_argument("--delta", type=float, help="use the smooth cutoff of this width")
    s.add_argument("--r-split", type=float, default=6.0)
    s.add_argument("--extrapolate", action="store_true")
    s.add_argument("--oracle", action="store_true", help="extended-precision cross-check")

    s = sub.add_parser("trace", parents=[common], help="normal graph and trace at infinity")
    s.add_argument("--pair", type=Path)

    s = sub.add_parser("variation", parents=[common], help="first variation over an aperture family")
    s.add_argument("--aperture", type=float)
    s.add_argument("--step", type=float, default=1e-3)
    s.add_argument("--points", type=int, default=5)
    s.add_argument("--branch", type=int, default=-1)

    s = sub.add_parser("verify", parents=[common], help="aggregated decay, trace and barrier report")
    s.add_argument("--pair", type=Path)
    return p


def _manifest(args, argv, outputs, inputs, summary, wall) -> dict:
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    return {
        "command": args.command,
        "argv": list(argv),
        "parameters": params,
        "version": __version__,
        "tolerances": {"tol": args.tol if args.tol is not None else ShootingSpec().tol},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {Path(p).name: _sha256(p) for p in outputs},
        "summary": summary,
        "wall_time_s": wall,
    }


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        outputs, inputs, summary = COMMANDS[args.command](args, out)
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    wall = time.perf_counter() - t0
    _write_json(out / "manifest.json", _manifest(args, argv, outputs, inputs, summary, wall))
    print(json.dumps(_round17(json.loads(json.dumps(summary, default=_json_default)))))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
