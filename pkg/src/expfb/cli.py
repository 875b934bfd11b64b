"""Command-line front end: solve, sweep-k, freeboundary, diagnose, oracle1d.

Every command that writes files first writes ``manifest.json`` into its
output directory and refuses to reuse an existing non-empty directory
unless ``--force`` is given.  Exit codes: 0 success, 1 configuration or
usage error, 2 solver failure (partial outputs are kept).
"""
import argparse
import datetime
import hashlib
import json
import logging
import os
import shutil
import sys

import numpy as np

from . import __version__, _kernels
from .errors import (DegenerateInput, DomainError, ExpfbError, LineSearchFailure,
                     NonFiniteEnergy, ParseError, ValidationError)
from .grid import field_from_csv, field_to_csv
from .nfunction import INFINITE, EnergyLaw, parse_order
from .problem import load_config
from .solver import oracle_1d, solve

log = logging.getLogger("expfb")

DEFAULT_EPSILONS = "0.02,0.04,0.06,0.08,0.1"
_THREADS = 1


class UsageError(ExpfbError):
    pass


def _fmt(v):
    return f"{v:.17g}"


def _k_label(k):
    return "inf" if k == INFINITE else str(int(k))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _prepare_out(out, force):
    if out is None:
        raise UsageError("no output directory: pass --out or set output_dir in the config")
    if os.path.exists(out):
        if not os.path.isdir(out):
            raise UsageError(f"{out} exists and is not a directory")
        if os.listdir(out):
            if not force:
                raise UsageError(f"{out} is not empty; pass --force to overwrite")
            shutil.rmtree(out)
    os.makedirs(out, exist_ok=True)
    return out


def _manifest(out, command, config_path):
    digest = None
    if config_path is not None and os.path.isfile(config_path):
        with open(config_path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
    _write_json({
        "config_path": None if config_path is None else os.path.abspath(config_path),
        "output_dir": os.path.abspath(out),
        "command": command,
        "tool_version": __version__,
        "config_hash": digest,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "backend": _kernels.BACKEND,
        "threads": _THREADS,
    }, os.path.join(out, "manifest.json"))


def _set_threads(n):
    # The kernels reduce serially in element order, which is what keeps
    # outputs bitwise reproducible; the count is validated and recorded
    # but does not change the computation.
    if n < 1:
        raise UsageError("--threads must be >= 1")
    global _THREADS
    _THREADS = n


def write_trace(trace, path):
    with open(path, "w") as fh:
        fh.write("stage_k,stage_delta,iter,energy,grad_norm,step\n")
        for r in trace:
            fh.write(f"{_k_label(r.stage_k)},{_fmt(r.stage_delta)},{r.iter},"
                     f"{_fmt(r.energy)},{_fmt(r.grad_norm)},{_fmt(r.step)}\n")


def _stage_dict(s):
    return {"k": _k_label(s.k), "delta": s.delta, "iterations": s.iterations,
            "energy": s.energy, "grad_norm": s.grad_norm, "converged": s.converged}


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def cmd_solve(config_path, output_dir=None, force=False):
    spec = load_config(config_path)
    out = _prepare_out(output_dir or spec.output_dir, force)
    _manifest(out, "solve", config_path)
    shutil.copyfile(config_path, os.path.join(out, "config.json"))
    mesh = spec.mesh()
    try:
        result = solve(spec, mesh)
    except (LineSearchFailure, NonFiniteEnergy) as exc:
        log.error("solver failure: %s", exc)
        U = getattr(exc, "iterate", None)
        if U is not None:
            field_to_csv(mesh, U, os.path.join(out, "solution.csv"))
        if getattr(exc, "trace", None):
            write_trace(exc.trace, os.path.join(out, "trace.csv"))
        _write_json({"error": str(exc), "converged": False},
                    os.path.join(out, "breakdown.json"))
        return 2
    field_to_csv(mesh, result.field, os.path.join(out, "solution.csv"))
    write_trace(result.trace, os.path.join(out, "trace.csv"))
    phi, f, g = result.breakdown
    _write_json({
        "phi_term": phi, "f_term": f, "gamma_term": g, "energy": result.energy_value,
        "iterations": result.iterations, "final_grad_norm": result.final_grad_norm,
        "converged": result.converged,
        "per_stage": [_stage_dict(s) for s in result.per_stage],
    }, os.path.join(out, "breakdown.json"))
    if not result.converged:
        log.error("not converged within max_iters at some stage")
        return 2
    return 0


def cmd_sweep_k(config_path, output_dir=None, force=False):
    spec = load_config(config_path)
    out = _prepare_out(output_dir or spec.output_dir, force)
    _manifest(out, "sweep-k", config_path)
    mesh = spec.mesh()
    try:
        result = solve(spec, mesh)
    except (LineSearchFailure, NonFiniteEnergy) as exc:
        log.error("solver failure: %s", exc)
        return 2
    last = spec.solver.delta_schedule[-1]
    stages = [s for s in result.per_stage if s.delta == last]
    final = stages[-1].field
    with open(os.path.join(out, "convergence.csv"), "w") as fh:
        fh.write("k,energy,linf_diff_to_final,grad_norm\n")
        for s in stages:
            diff = float(np.max(np.abs(s.field - final)))
            fh.write(f"{_k_label(s.k)},{_fmt(s.energy)},{_fmt(diff)},{_fmt(s.grad_norm)}\n")
    # smoothing-width ladder at the target order
    top = [s for s in result.per_stage if s.k == spec.law.order]
    with open(os.path.join(out, "delta_convergence.csv"), "w") as fh:
        fh.write("delta,energy,linf_diff_to_final,grad_norm\n")
        for s in top:
            diff = float(np.max(np.abs(s.field - top[-1].field)))
            fh.write(f"{_fmt(s.delta)},{_fmt(s.energy)},{_fmt(diff)},{_fmt(s.grad_norm)}\n")
    return 0 if result.converged else 2


def _load_solution(solution_dir):
    cfg = os.path.join(solution_dir, "config.json")
    sol = os.path.join(solution_dir, "solution.csv")
    if not (os.path.isfile(cfg) and os.path.isfile(sol)):
        raise UsageError(f"{solution_dir} lacks config.json or solution.csv")
    spec = load_config(cfg)
    mesh = spec.mesh()
    return spec, mesh, field_from_csv(mesh, sol), cfg


def cmd_freeboundary(output_dir, epsilons, config_path=None, solution_dir=None,
                     force=False, scales=None):
    from . import geometry
    if (config_path is None) == (solution_dir is None):
        raise UsageError("give exactly one of --config and --solution")
    if solution_dir is not None:
        spec, mesh, U, cfg = _load_solution(solution_dir)
    else:
        spec, cfg = load_config(config_path), config_path
        mesh = spec.mesh()
    out = _prepare_out(output_dir, force)
    _manifest(out, "freeboundary", cfg)
    if solution_dir is None:
        try:
            U = solve(spec, mesh).field
        except (LineSearchFailure, NonFiniteEnergy) as exc:
            log.error("solver failure: %s", exc)
            return 2
    eps = sorted(epsilons)
    if scales is None:
        size = float(np.min(mesh.domain.upper - mesh.domain.lower))
        scales = [size / 4, size / 8, size / 16, size / 32]
    dims = {"scales": list(scales)}
    for side, name in (("plus", "freeboundary.csv"), ("minus", "freeboundary_minus.csv")):
        fb = geometry.free_boundary(mesh, U, side, eps[0])
        geometry.polylines_to_csv(fb.polylines, os.path.join(out, name))
        entry = {"length_marching": fb.length_marching,
                 "plateau_elements": int(fb.plateau_elements.size),
                 "dimension": None, "r2": None}
        if fb.polylines:
            entry["dimension"], entry["r2"] = geometry.box_counting_dimension(fb.polylines, scales)
        dims[side] = entry
    table = geometry.band_table(mesh, U, eps)
    geometry.band_table_to_csv(table, os.path.join(out, "fb_stats.csv"))
    # measure{|u| <= eps} ~ slope * eps; the perimeter is compared with that slope
    slope, r2 = geometry.origin_fit(table[:, 0], table[:, 1])
    dims["band_fit"] = {"slope": slope, "r2": r2}
    for side, col in (("plus", 3), ("minus", 4)):
        per = float(table[0, col])
        dims[side]["perimeter_coarea"] = per
        dims[side]["perimeter_over_band_slope"] = per / slope if slope > 0 else None
    _write_json(dims, os.path.join(out, "dimension.json"))
    return 0


def cmd_diagnose(solution_dir, output_dir=None, force=False, band_epsilon=0.05):
    from .diagnostics import diagnose
    spec, mesh, U, cfg = _load_solution(solution_dir)
    out = _prepare_out(output_dir or os.path.join(solution_dir, "diagnostics"), force)
    _manifest(out, "diagnose", cfg)
    report = diagnose(spec, mesh, U, band_epsilon=band_epsilon)
    _write_json(report.to_dict(), os.path.join(out, "report.json"))
    return 0


def cmd_oracle1d(a, b, gamma_plus, gamma_minus, k="inf", grid_points=10**6):
    law = EnergyLaw(parse_order(k))
    t, e = oracle_1d(a, b, gamma_plus, gamma_minus, law, grid_points)
    print(json.dumps({"t_star": t, "energy_star": e}))
    return 0


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------

def _epsilons(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad epsilon list {text!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("epsilons must be positive")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="expfb", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"expfb {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, metavar="PATH")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--force", action="store_true", help="overwrite a non-empty --out")
        sp.add_argument("--threads", type=int, default=1, metavar="N",
                        help="numba thread count (default 1)")

    common(sub.add_parser("solve", help="run the continuation solve"))
    common(sub.add_parser("sweep-k", help="energies and distances along the k schedule"))
    fb = sub.add_parser("freeboundary", help="extract and measure the free boundary")
    common(fb, config_required=False)
    fb.add_argument("--solution", metavar="DIR", help="output directory of a previous solve")
    fb.add_argument("--epsilons", type=_epsilons, default=_epsilons(DEFAULT_EPSILONS),
                    help=f"band widths (default {DEFAULT_EPSILONS})")
    dg = sub.add_parser("diagnose", help="measure a stored solution")
    dg.add_argument("--solution", required=True, metavar="DIR")
    dg.add_argument("--out", metavar="DIR", help="default: SOLUTION/diagnostics")
    dg.add_argument("--force", action="store_true")
    dg.add_argument("--threads", type=int, default=1, metavar="N")
    dg.add_argument("--band", type=float, default=0.05, help="residual band width")
    oc = sub.add_parser("oracle1d", help="best kink for the 1D two-phase problem")
    oc.add_argument("--a", type=float, required=True, help="u(0) = -a")
    oc.add_argument("--b", type=float, required=True, help="u(1) = b")
    oc.add_argument("--gamma-plus", type=float, required=True)
    oc.add_argument("--gamma-minus", type=float, required=True)
    oc.add_argument("--k", default="inf", help="truncation order or 'inf'")
    oc.add_argument("--grid-points", type=int, default=10**6)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if hasattr(args, "threads"):
            _set_threads(args.threads)
        if args.command == "solve":
            return cmd_solve(args.config, args.out, args.force)
        if args.command == "sweep-k":
            return cmd_sweep_k(args.config, args.out, args.force)
        if args.command == "freeboundary":
            return cmd_freeboundary(args.out, args.epsilons, args.config, args.solution,
                                    args.force)
        if args.command == "diagnose":
            return cmd_diagnose(args.solution, args.out, args.force, args.band)
        return cmd_oracle1d(args.a, args.b, args.gamma_plus, args.gamma_minus, args.k,
                            args.grid_points)
    except (ParseError, ValidationError, DomainError, DegenerateInput, UsageError) as exc:
        print(f"expfb: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
