"""Command-line interface.

Subcommands: bound, reduce, certify, lower-bound, gen-random, bench.
Floats print with 6 significant digits; report files keep full precision.
Exit codes: 0 success (certify: certified robust), 1 certify verdict
not certified, 2 malformed input or solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .backend import SolveSettings
from .certify import SolveFailure, lower_bound_pgd, robustness_certificate
from .model import (
    TargetSpec,
    forward,
    gen_random,
    load_input,
    load_model,
    margin,
    save_model,
)
from .multipliers import MultiplierClass
from .reduction import build_reduced, reduce as reduce_model, reduced_to_json_dict, trivial_partition
from .sdp import build_primal, compress_instance

__all__ = ["main"]


class CliError(Exception):
    pass


def _fmt(x: float) -> str:
    return f"{float(x):.6g}"


def _fmt_vec(v) -> str:
    return "[" + ", ".join(_fmt(x) for x in v) + "]"


def _load_model_checked(path):
    try:
        return load_model(path)
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    except (OSError, ValueError) as e:
        raise CliError(f"{path}: {e}") from None


def _load_input_checked(path, m: int):
    try:
        w0 = load_input(path)
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    except (OSError, ValueError) as e:
        raise CliError(f"{path}: {e}") from None
    if w0.shape != (m,):
        raise CliError(f"{path}: w0 has {w0.shape[0]} entries, model expects {m}")
    return w0


def _settings(args) -> SolveSettings:
    kw = {}
    if getattr(args, "tol", None) is not None:
        kw["abs_tol"] = args.tol
        kw["rel_tol"] = args.tol
    if getattr(args, "max_iters", None) is not None:
        kw["max_iters"] = args.max_iters
    if getattr(args, "solver", None) is not None:
        kw["solver"] = args.solver
    return SolveSettings(**kw)


def _target(args, model) -> TargetSpec:
    w0 = _load_input_checked(args.input, model.m)
    return TargetSpec(w0, args.eps)


def _nonneg_float(s: str) -> float:
    x = float(s)
    if not (x >= 0.0):
        raise argparse.ArgumentTypeError("must be a nonnegative number")
    return x


def _write_report(cert, path) -> None:
    with open(path, "w") as fh:
        json.dump(cert.to_json_dict(), fh, indent=1)
        fh.write("\n")


def _print_certificate(cert, with_margin: bool) -> None:
    print(f"gamma = {_fmt(cert.gamma_upper)}")
    if cert.gamma_dual is not None:
        print(f"gamma_dual = {_fmt(cert.gamma_dual)}  (gap {_fmt(cert.duality_gap)})")
    print(f"n_r = {cert.n_r}")
    print(f"exact = {'true' if cert.exact else 'false'}"
          + (f"  (rank ratio {_fmt(cert.rank_ratio)})" if cert.rank_ratio is not None else ""))
    if cert.w_star is not None:
        print(f"w_star = {_fmt_vec(cert.w_star)}")
    if cert.lower_bound is not None:
        print(f"lower_bound = {_fmt(cert.lower_bound)}")
    if with_margin:
        if cert.margin_value is None:
            print("margin: skipped (needs at least 2 outputs)")
        else:
            print(f"margin = {_fmt(cert.margin_value)}")
        print(f"verdict = {cert.robust_verdict}")


def _cmd_gen_random(args) -> int:
    model = gen_random(args.n, args.m, args.l, args.seed, args.scale)
    save_model(model, args.out)
    print(f"wrote {args.out} (n={args.n}, m={args.m}, l={args.l}, seed={args.seed})")
    return 0


def _cmd_reduce(args) -> int:
    model = _load_model_checked(args.model)
    target = _target(args, model)
    rm = reduce_model(model, target)
    sizes = rm.partition.sizes
    stats = f"|N+| = {sizes[0]}, |N0| = {sizes[1]}, |N_r| = {sizes[2]}"
    payload = json.dumps(reduced_to_json_dict(rm), indent=1) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload)
        print(stats)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(payload)
        print(stats, file=sys.stderr)
    return 0


def _cmd_bound(args) -> int:
    model = _load_model_checked(args.model)
    target = _target(args, model)
    if args.dump_sdp:
        rm = (reduce_model(model, target) if not args.no_reduce
              else build_reduced(model, trivial_partition(model.n)))
        rm_s, target_s = rm, target
        packed = compress_instance(rm, target)
        if packed is not None:
            rm_s, target_s, _ = packed
        prog = build_primal(rm_s, target_s, forward(model, target.w0),
                            MultiplierClass.parse(args.multiplier))
        with open(args.dump_sdp, "w") as fh:
            json.dump(prog.to_json_dict(), fh)
        print(f"wrote SDP dump to {args.dump_sdp}")
    cert = robustness_certificate(
        model, target,
        mclass=MultiplierClass.parse(args.multiplier),
        do_reduce=not args.no_reduce,
        settings=_settings(args),
        pgd_restarts=0,
    )
    _print_certificate(cert, with_margin=False)
    if args.report:
        _write_report(cert, args.report)
    return 0


def _cmd_certify(args) -> int:
    model = _load_model_checked(args.model)
    target = _target(args, model)
    cert = robustness_certificate(
        model, target,
        mclass=MultiplierClass.parse(args.multiplier),
        do_reduce=not args.no_reduce,
        settings=_settings(args),
        pgd_restarts=args.restarts,
        seed=args.seed,
    )
    _print_certificate(cert, with_margin=True)
    if args.report:
        _write_report(cert, args.report)
    return 0 if cert.robust_verdict == "certified_robust" else 1


def _cmd_lower_bound(args) -> int:
    model = _load_model_checked(args.model)
    target = _target(args, model)
    lb, w_lb = lower_bound_pgd(model, target, restarts=args.restarts,
                               steps=args.steps, seed=args.seed)
    print(f"lower_bound = {_fmt(lb)}")
    print(f"w = {_fmt_vec(w_lb)}")
    return 0


# one ensemble instance per seed; sizes and target drawn from the seed so
# bench output is reproducible row by row
def _ensemble_instance(seed: int, n_max: int, m_max: int, l_max: int, eps):
    rng = np.random.default_rng(10_000 + seed)
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(2, m_max + 1))
    l = int(rng.integers(2, l_max + 1))
    model = gen_random(n, m, l, seed)
    w0 = 0.5 * rng.standard_normal(m)
    e = float(eps) if eps is not None else float(0.05 + 0.3 * rng.uniform())
    return model, TargetSpec(w0, e)


def _bench_row(task) -> dict:
    seed, n_max, m_max, l_max, eps, mclass = task
    model, target = _ensemble_instance(seed, n_max, m_max, l_max, eps)
    t0 = time.perf_counter()
    cert = robustness_certificate(
        model, target, mclass=MultiplierClass.parse(mclass), pgd_restarts=0)
    wall = time.perf_counter() - t0
    return {
        "seed": seed, "n": model.n, "m": model.m, "l": model.l,
        "eps": target.eps, "class": mclass,
        "gamma": cert.gamma_upper,
        "gap": cert.duality_gap if cert.duality_gap is not None else "",
        "n_r": cert.n_r, "exact": cert.exact, "time_s": wall,
    }


def _cmd_bench(args) -> int:
    if args.model:
        # reduction curve for a user-supplied model: n_r as a function of eps
        if not args.input:
            raise CliError("bench curve mode needs --input alongside --model")
        model = _load_model_checked(args.model)
        w0 = _load_input_checked(args.input, model.m)
        eps_max = args.eps if args.eps is not None else 1.0
        grid = np.linspace(0.0, eps_max, args.grid_points)
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eps", "n_r"])
            for e in grid:
                e = float(e)
                rm = reduce_model(model, TargetSpec(w0, e))
                writer.writerow([repr(e), rm.n_r])
        print(f"wrote reduction curve ({args.grid_points} points) to {args.out}")
        return 0

    seeds = list(range(1, args.count + 1))
    tasks = [(s, args.n, args.m, args.l, args.eps, args.multiplier) for s in seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_bench_row, tasks))
    else:
        rows = [_bench_row(t) for t in tasks]
    rows.sort(key=lambda r: r["seed"])
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=[
            "seed", "n", "m", "l", "eps", "class", "gamma", "gap", "n_r",
            "exact", "time_s"])
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _add_instance_args(p, with_eps=True):
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--input", required=True, help='input JSON file {"w0": [...]}')
    if with_eps:
        p.add_argument("--eps", required=True, type=_nonneg_float,
                       help="perturbation radius (Euclidean)")


def _add_solver_args(p):
    p.add_argument("--multiplier", choices=["nn", "ozf", "faz"], default="nn")
    p.add_argument("--no-reduce", action="store_true",
                   help="skip neuron elimination, keep all ReLU rows")
    p.add_argument("--tol", type=float, default=None, help="solver tolerance")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--solver", choices=["clarabel", "scs"], default=None)
    p.add_argument("--report", default=None, help="write certificate JSON here")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipcert",
        description="Certified local Lipschitz bounds for one-hidden-layer "
                    "ReLU networks via SDP relaxation.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-random", help="write a random model JSON file")
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--m", required=True, type=int)
    p.add_argument("--l", required=True, type=int)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_random)

    p = sub.add_parser("reduce", help="eliminate ReLU rows fixed on the ball")
    _add_instance_args(p)
    p.add_argument("--out", default=None, help="write reduced model JSON here")
    p.set_defaults(func=_cmd_reduce)

    p = sub.add_parser("bound", help="certified deviation bound + exactness")
    _add_instance_args(p)
    _add_solver_args(p)
    p.add_argument("--dump-sdp", default=None,
                   help="write the assembled primal program JSON here")
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("certify", help="full robustness certificate")
    _add_instance_args(p)
    _add_solver_args(p)
    p.add_argument("--restarts", type=int, default=50, help="PGD restarts")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("lower-bound", help="projected gradient ascent bound")
    _add_instance_args(p)
    p.add_argument("--restarts", type=int, default=50)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_lower_bound)

    p = sub.add_parser("bench", help="ensemble benchmark CSV or reduction curve CSV")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--count", type=int, default=20, help="ensemble size (seeds 1..count)")
    p.add_argument("--n", type=int, default=30, help="max hidden width")
    p.add_argument("--m", type=int, default=10, help="max input dim")
    p.add_argument("--l", type=int, default=5, help="max output dim")
    p.add_argument("--eps", type=_nonneg_float, default=None,
                   help="fixed radius (ensemble) or grid maximum (curve)")
    p.add_argument("--multiplier", choices=["nn", "ozf", "faz"], default="nn")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--model", default=None, help="curve mode: model JSON file")
    p.add_argument("--input", default=None, help="curve mode: input JSON file")
    p.add_argument("--grid-points", type=int, default=10)
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SolveFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
