"""Batch command line front end.

Each run parses arguments, dispatches to the library, and (when --out is
given) drops a manifest next to the artifacts so the exact invocation can
be replayed later.  Numeric output is printed with 17 significant digits
so round trips through text are lossless.
"""

import argparse
import json
import math
import sys
import time
from contextlib import contextmanager

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import fields, smalldev
from .entropy import (EntropyCurve, MixedParams, covering_number,
                      delta_curve, fit_powerlaw, inner_entropy_curve,
                      packing_number, sigma_curve, sigma_infty_curve,
                      sigma_line_curve)
from .ifs import (PointMeasure, builtin_system_names,
                  enumerate_level_words, gamma_exponent,
                  level_cover_at_least, load_system, sample_measure,
                  similarity_dimension, stratified_from_words)


class UsageError(Exception):
    """Bad invocation; reported on stderr with exit status 2."""


class _Parser(argparse.ArgumentParser):
    # argparse normally prints usage plus the message; the contract wants a
    # single diagnostic line on stderr, so route errors through UsageError
    def error(self, message):
        raise UsageError(message)


def _g(x) -> str:
    return format(float(x), ".17g")


def _float_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a comma separated list of numbers, got {text!r}")
    if not vals:
        raise UsageError("empty number list")
    return vals


def _int_list(text):
    vals = _float_list(text)
    out = []
    for v in vals:
        if v != int(v):
            raise UsageError(f"expected integers, got {v}")
        out.append(int(v))
    return out


@contextmanager
def _thread_cap(n):
    if n is None:
        yield
        return
    if n < 1:
        raise UsageError("--threads must be >= 1")
    with threadpool_limits(limits=n):
        yield


# ---------------------------------------------------------------------------
# argument plumbing


def _add_out(p):
    p.add_argument("--out", help="output path prefix; writes <out>.manifest.json "
                   "plus the command's artifacts")
    p.add_argument("--threads", type=int, default=None,
                   help="cap the BLAS thread pools during the computation")


def _add_system(p, required=True):
    p.add_argument("--system", required=required,
                   help="config file (json/toml) or a builtin name: "
                   + ", ".join(builtin_system_names()))


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="fracgauss",
                  description="entropy numbers and small-deviation rates of "
                              "Gaussian fields over fractal measures")
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("dimension", help="similarity dimension of a system")
    _add_system(p)
    _add_out(p)

    p = sub.add_parser("gamma", help="mixed cover-growth exponent and rate")
    _add_system(p)
    p.add_argument("--H", type=float, required=True, dest="h")
    p.add_argument("--q", type=float, required=True)
    _add_out(p)

    p = sub.add_parser("words", help="threshold word cover at a budget level")
    _add_system(p)
    p.add_argument("--H", type=float, required=True, dest="h")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--budget", type=float, required=True,
                   help="level s; covers all words with value <= exp(-s)")
    p.add_argument("--cap", type=int, default=10_000_000)
    _add_out(p)

    p = sub.add_parser("sigma", help="outer mixed entropy curve")
    _add_system(p)
    p.add_argument("--H", type=float, required=True, dest="h")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--ns", type=_int_list, required=True,
                   help="comma separated cover sizes, e.g. 4,16,64,256")
    p.add_argument("--sample-count", type=int, default=None,
                   help="sample this many atoms and run the exact line "
                        "program instead of the word-cover bound (dim 1)")
    p.add_argument("--seed", type=int, default=None)
    _add_out(p)

    p = sub.add_parser("delta", help="inner mixed entropy curve")
    _add_system(p)
    p.add_argument("--H", type=float, required=True, dest="h")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--ns", type=_int_list, required=True)
    p.add_argument("--sample-count", type=int, default=None,
                   help="sample a point cloud and pack dyadic cubes instead "
                        "of word cells")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=20)
    _add_out(p)

    p = sub.add_parser("entropy", help="metric entropy of a point cloud")
    p.add_argument("--kind", required=True,
                   choices=("inner", "sigma-infty", "covering", "packing"))
    _add_system(p, required=False)
    p.add_argument("--grid", type=int, default=None,
                   help="use a uniform grid with about this many points")
    p.add_argument("--dim", type=int, default=1, choices=(1, 2),
                   help="grid dimension (with --grid)")
    p.add_argument("--H", type=float, default=1.0, dest="h")
    p.add_argument("--ns", type=_int_list, default=None,
                   help="sizes for inner/sigma-infty curves")
    p.add_argument("--eps", type=_float_list, default=None,
                   help="radii for covering/packing counts")
    p.add_argument("--sample-count", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    _add_out(p)

    p = sub.add_parser("sample-field", help="draw Gaussian field replicas")
    p.add_argument("--kernel", required=True, help="fbm:H or sheet")
    src = p.add_argument_group("site source (pick one)")
    src.add_argument("--points", type=_float_list, default=None,
                     help="explicit 1-d sites, comma separated")
    src.add_argument("--lebesgue-dim", type=int, default=None, choices=(1, 2))
    _add_system(p, required=False)
    p.add_argument("--cells", type=int, default=256,
                   help="target site count for system/lebesgue sources")
    p.add_argument("--points-per-cell", type=int, default=1)
    p.add_argument("--H", type=float, default=None, dest="h",
                   help="cover parameter for stratified sites; defaults to "
                        "the fbm Hurst index")
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    _add_out(p)

    p = sub.add_parser("smalldev", help="estimate the small-deviation curve")
    p.add_argument("--kernel", required=True)
    p.add_argument("--q", type=float, required=True)
    _add_system(p, required=False)
    p.add_argument("--lebesgue-dim", type=int, default=None, choices=(1, 2))
    p.add_argument("--H", type=float, default=None, dest="h")
    p.add_argument("--cells", type=int, default=256)
    p.add_argument("--points-per-cell", type=int, default=1)
    p.add_argument("--eps", type=_float_list, default=None,
                   help="explicit grid, strictly decreasing")
    p.add_argument("--eps-hi", type=float, default=0.9)
    p.add_argument("--eps-lo", type=float, default=0.25)
    p.add_argument("--eps-count", type=int, default=14)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--block-size", type=int, default=4096)
    p.add_argument("--fit", action="store_true",
                   help="append a weighted rate fit to the report")
    p.add_argument("--seed", type=int, required=True)
    _add_out(p)

    p = sub.add_parser("verify", help="estimate, fit, and compare to theory")
    p.add_argument("--kernel", required=True)
    p.add_argument("--q", type=float, required=True)
    _add_system(p, required=False)
    p.add_argument("--lebesgue-dim", type=int, default=None, choices=(1, 2))
    p.add_argument("--H", type=float, default=None, dest="h")
    p.add_argument("--prediction", default="auto",
                   choices=("auto", "selfsimilar", "hausdorff", "lebesgue"))
    p.add_argument("--sites", type=int, default=256)
    p.add_argument("--reps", type=int, default=200_000)
    p.add_argument("--eps-lo", type=float, default=0.25)
    p.add_argument("--eps-hi", type=float, default=0.9)
    p.add_argument("--eps-count", type=int, default=14)
    p.add_argument("--points-per-cell", type=int, default=1)
    p.add_argument("--block-size", type=int, default=4096)
    p.add_argument("--tolerance", type=float, default=0.25)
    p.add_argument("--seed", type=int, required=True)
    _add_out(p)

    return top


# ---------------------------------------------------------------------------
# shared pieces


def _write_report(prefix, payload, outputs):
    path = f"{prefix}.report.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(path)


def _write_curve(prefix, curve, outputs):
    path = f"{prefix}.curve.csv"
    with open(path, "w") as fh:
        curve.to_csv(fh)
    outputs.append(path)


def _curve_report(curve: EntropyCurve) -> dict:
    payload = {
        "kind": curve.kind,
        "H": curve.params.h,
        "q": "inf" if math.isinf(curve.params.q) else curve.params.q,
        "N": curve.params.dim,
        "r": curve.params.r,
        "bound": curve.bound,
        "points": [[int(n), v] for n, v in curve.points],
    }
    if curve.fit is not None:
        payload["log_slope"] = curve.fit.exponent
    return payload


def _system_dim(args):
    system = load_system(args.system)
    return system, system.dim


def _field_sites(args, kernel):
    """Build the quadrature sites for sample-field/smalldev style commands."""
    sources = [args.points is not None if hasattr(args, "points") else False,
               args.lebesgue_dim is not None,
               args.system is not None]
    if sum(sources) != 1:
        raise UsageError("pick exactly one site source: --points, "
                         "--lebesgue-dim, or --system")
    if getattr(args, "points", None) is not None:
        pts = np.asarray(args.points, dtype=float)[:, None]
        masses = np.full(pts.shape[0], 1.0 / pts.shape[0])
        return PointMeasure(pts, masses), "explicit points"
    if args.lebesgue_dim is not None:
        sites = smalldev.lebesgue_sites(args.lebesgue_dim, args.cells)
        return sites, f"{sites.points.shape[0]} grid sites"
    system = load_system(args.system)
    h = args.h
    if h is None:
        if kernel.family == "fbm":
            h = kernel.h
        else:
            raise UsageError("--H is required for stratified sites with "
                             "the sheet kernel")
    words = level_cover_at_least(system, h, args.q, args.cells)
    site_seed = np.random.SeedSequence(args.seed).spawn(2)[0]
    sites = stratified_from_words(system, words, args.points_per_cell,
                                  site_seed)
    note = (f"{sites.points.shape[0]} sites, {len(words)} cells, "
            f"{args.points_per_cell} per cell")
    return sites, note


# ---------------------------------------------------------------------------
# command handlers; each returns the list of files it wrote


def _cmd_dimension(args, outputs):
    system, _ = _system_dim(args)
    d = similarity_dimension(system)
    residual = abs(float(np.sum(system.scales ** d)) - 1.0)
    print(f"dimension = {_g(d)}")
    if args.out:
        _write_report(args.out, {"command": "dimension",
                                 "system": args.system,
                                 "dimension": d,
                                 "residual": residual}, outputs)


def _cmd_gamma(args, outputs):
    system, _ = _system_dim(args)
    res = gamma_exponent(system, args.h, args.q)
    print(f"gamma = {_g(res.gamma)}")
    print(f"a = {_g(res.a)}")
    if args.out:
        _write_report(args.out, {"command": "gamma", "system": args.system,
                                 "H": args.h,
                                 "q": "inf" if math.isinf(args.q) else args.q,
                                 "gamma": res.gamma, "a": res.a,
                                 "residual": res.residual}, outputs)


def _cmd_words(args, outputs):
    system, _ = _system_dim(args)
    words = enumerate_level_words(system, args.h, args.q, args.budget,
                                  cap=args.cap)
    print(f"count = {len(words)}")
    if args.out:
        listing = [{"indices": list(w.indices), "scale": w.scale,
                    "mass": w.mass, "weight": w.weight} for w in words]
        _write_report(args.out, {"command": "words", "system": args.system,
                                 "H": args.h,
                                 "q": "inf" if math.isinf(args.q) else args.q,
                                 "budget": args.budget,
                                 "count": len(words),
                                 "words": listing}, outputs)


def _cmd_sigma(args, outputs):
    system, dim = _system_dim(args)
    params = MixedParams(args.h, args.q, dim)
    if args.sample_count is not None:
        if args.seed is None:
            raise UsageError("--seed is required with --sample-count")
        cloud = sample_measure(system, args.sample_count, args.seed)
        order = np.argsort(cloud.points[:, 0])
        cloud = PointMeasure(cloud.points[order], cloud.masses[order],
                             box=cloud.box)
        curve = sigma_line_curve(cloud, params, args.ns)
    else:
        curve = sigma_curve(system, params, args.ns)
    fit = fit_powerlaw(curve)
    print(f"log-log slope = {_g(fit.exponent)}")
    if args.out:
        _write_curve(args.out, curve, outputs)
        _write_report(args.out, {"command": "sigma", "system": args.system,
                                 **_curve_report(curve)}, outputs)


def _cmd_delta(args, outputs):
    system, dim = _system_dim(args)
    params = MixedParams(args.h, args.q, dim)
    if args.sample_count is not None:
        if args.seed is None:
            raise UsageError("--seed is required with --sample-count")
        target = sample_measure(system, args.sample_count, args.seed)
    else:
        target = system
    curve = delta_curve(target, params, args.ns, max_depth=args.max_depth)
    fit = fit_powerlaw(curve)
    print(f"log-log slope = {_g(fit.exponent)}")
    if args.out:
        _write_curve(args.out, curve, outputs)
        _write_report(args.out, {"command": "delta", "system": args.system,
                                 **_curve_report(curve)}, outputs)


def _entropy_cloud(args):
    if (args.grid is None) == (args.system is None):
        raise UsageError("pick exactly one of --grid or --system")
    if args.grid is not None:
        if args.dim == 1:
            return np.linspace(0.0, 1.0, max(args.grid, 2))[:, None], 1
        side = max(int(round(math.sqrt(args.grid))), 2)
        axis = np.linspace(0.0, 1.0, side)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1), 2
    if args.seed is None:
        raise UsageError("--seed is required when sampling from a system")
    system = load_system(args.system)
    cloud = sample_measure(system, args.sample_count, args.seed)
    return cloud.points, system.dim


def _cmd_entropy(args, outputs):
    pts, dim = _entropy_cloud(args)
    if args.kind in ("inner", "sigma-infty"):
        if args.ns is None:
            raise UsageError(f"--ns is required for kind {args.kind}")
        if args.kind == "inner":
            curve = inner_entropy_curve(pts, args.ns, h=args.h)
        else:
            curve = sigma_infty_curve(pts, args.h, args.ns)
        fit = fit_powerlaw(curve)
        print(f"log-log slope = {_g(fit.exponent)}")
        if args.out:
            _write_curve(args.out, curve, outputs)
            _write_report(args.out, {"command": "entropy",
                                     **_curve_report(curve)}, outputs)
        return
    if args.eps is None:
        raise UsageError(f"--eps is required for kind {args.kind}")
    fn = covering_number if args.kind == "covering" else packing_number
    bound = "upper" if args.kind == "covering" else "lower"
    rows = [(float(e), int(fn(pts, float(e)))) for e in args.eps]
    for e, count in rows:
        print(f"{args.kind}({_g(e)}) = {count}")
    if args.out:
        path = f"{args.out}.curve.csv"
        with open(path, "w") as fh:
            fh.write("kind,H,q,N,r,n,value,bound\n")
            for e, count in rows:
                fh.write(f"{args.kind},{_g(args.h)},inf,{dim},"
                         f"{_g(dim / args.h)},{count},{_g(e)},{bound}\n")
        outputs.append(path)
        _write_report(args.out, {"command": "entropy", "kind": args.kind,
                                 "counts": [[e, c] for e, c in rows]},
                      outputs)


def _cmd_sample_field(args, outputs):
    dim = (1 if args.points is not None
           else args.lebesgue_dim if args.lebesgue_dim is not None
           else load_system(args.system).dim if args.system is not None
           else 1)
    kernel = fields.parse_kernel(args.kernel, dim=dim)
    sites, note = _field_sites(args, kernel)
    mc_seed = np.random.SeedSequence(args.seed).spawn(2)[1]
    batch = fields.sample(kernel, sites.points, args.reps, mc_seed)
    var = float(np.mean(batch.values ** 2))
    print(f"sites = {sites.points.shape[0]}, reps = {args.reps}, "
          f"mean square = {_g(var)}")
    if args.out:
        path = f"{args.out}.samples.csv"
        with open(path, "w") as fh:
            fields.batch_to_csv(batch, fh)
        outputs.append(path)
        _write_report(args.out, {"command": "sample-field",
                                 "kernel": args.kernel,
                                 "quadrature": note,
                                 "sites": sites.points.shape[0],
                                 "reps": args.reps,
                                 "seed": args.seed,
                                 "jitter_used": batch.jitter_used,
                                 "mean_square": var}, outputs)


def _smalldev_grid(args):
    if args.eps is not None:
        return np.asarray(args.eps, dtype=float)
    if not (0.0 < args.eps_lo < args.eps_hi):
        raise UsageError("need 0 < --eps-lo < --eps-hi")
    return np.geomspace(args.eps_hi, args.eps_lo, args.eps_count)


def _cmd_smalldev(args, outputs):
    dim = (args.lebesgue_dim if args.lebesgue_dim is not None
           else load_system(args.system).dim if args.system is not None
           else 1)
    kernel = fields.parse_kernel(args.kernel, dim=dim)
    args.points = None
    sites, note = _field_sites(args, kernel)
    mc_seed = np.random.SeedSequence(args.seed).spawn(2)[1]
    curve = smalldev.estimate_curve(kernel, sites, args.q, _smalldev_grid(args),
                                    args.reps, mc_seed,
                                    block_size=args.block_size,
                                    quadrature=note)
    payload = {"command": "smalldev", "kernel": args.kernel,
               "q": "inf" if math.isinf(args.q) else args.q,
               "quadrature": note, "reps": args.reps, "seed": args.seed,
               "curve_columns": ["eps", "p_hat", "lo", "hi", "phi", "flag"],
               "curve": curve.rows()}
    if args.fit:
        fit = smalldev.fit_rate(curve)
        payload["fit"] = {"a": fit.a, "beta": fit.beta, "c": fit.c,
                          "window": list(fit.window),
                          "stderr_a": fit.stderr_a, "npoints": fit.npoints}
        print(f"a_fit = {_g(fit.a)} +- {_g(fit.stderr_a)}")
    else:
        print(f"estimated {curve.eps.shape[0]} grid points, "
              f"smallest p_hat = {_g(curve.p_hat.min())}")
    if args.out:
        _write_curve(args.out, curve, outputs)
        _write_report(args.out, payload, outputs)


def _cmd_verify(args, outputs):
    if (args.system is None) == (args.lebesgue_dim is None):
        raise UsageError("give exactly one of --system or --lebesgue-dim")
    system = load_system(args.system) if args.system is not None else None
    dim = system.dim if system is not None else args.lebesgue_dim
    kernel = fields.parse_kernel(args.kernel, dim=dim)
    budget = smalldev.Budget(sites=args.sites, reps=args.reps,
                             eps_lo=args.eps_lo, eps_hi=args.eps_hi,
                             eps_count=args.eps_count,
                             points_per_cell=args.points_per_cell,
                             block_size=args.block_size,
                             tolerance=args.tolerance)
    report = smalldev.verify(kernel, args.q, args.seed, system=system,
                             lebesgue_dim=args.lebesgue_dim, h=args.h,
                             prediction=args.prediction, budget=budget)
    print(f"verdict: {report.verdict} (a_fit = {_g(report.a_fit)}, "
          f"a_pred = {_g(report.a_pred)}, rel = {_g(report.rel_error)})")
    if args.out:
        _write_curve(args.out, report.curve, outputs)
        path = f"{args.out}.report.json"
        with open(path, "w") as fh:
            report.to_json(fh)
        outputs.append(path)


_HANDLERS = {
    "dimension": _cmd_dimension,
    "gamma": _cmd_gamma,
    "words": _cmd_words,
    "sigma": _cmd_sigma,
    "delta": _cmd_delta,
    "entropy": _cmd_entropy,
    "sample-field": _cmd_sample_field,
    "smalldev": _cmd_smalldev,
    "verify": _cmd_verify,
}


def _manifest(args, argv, outputs, wall):
    config = {}
    for key, val in sorted(vars(args).items()):
        if key in ("command",):
            continue
        if isinstance(val, float) and math.isinf(val):
            val = "inf"
        config[key] = val
    return {
        "artifact_version": __version__,
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "outputs": sorted(outputs),
        "wall_time_s": wall,
    }


def run(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    argv = [str(a) for a in argv]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        outputs = []
        start = time.perf_counter()
        with _thread_cap(args.threads):
            _HANDLERS[args.command](args, outputs)
        wall = time.perf_counter() - start
        if args.out:
            path = f"{args.out}.manifest.json"
            with open(path, "w") as fh:
                json.dump(_manifest(args, argv, outputs, wall), fh,
                          indent=2, sort_keys=True)
                fh.write("\n")
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MemoryError:
        print("internal error: out of memory", file=sys.stderr)
        return 1
    except Exception as exc:  # keep the contract: one line, status 1
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
