"""Command line entry point: gen, grid, build-gap, build-eig, eval, verify, bench.

Exit codes: 0 success, 2 a certified claim was violated, 1 operational error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

from . import generators
from .affine import ParameterGrid, chebyshev_grid, load_grid, load_model, save_grid, save_model
from .eigensolve import CLUSTER_ABS, CLUSTER_REL, lowest_clusters
from .gap_cert import conditional_certify_online
from .greedy import GreedyConfig, greedy_eigenspace, greedy_gap, verify_grid, write_report
from .subspace import load_rom, save_rom

log = logging.getLogger("eigengreedy")

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def _f(x) -> str:
    return f"{float(x):.17g}"


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    return max(1, int(os.environ.get("EIGENGREEDY_THREADS", "1")))


def _solver_kw(args) -> dict:
    return dict(tol=args.eig_tol, tol_abs=args.cluster_abs, tol_rel=args.cluster_rel)


def _add_solver_flags(p):
    p.add_argument("--eig-tol", type=float, default=1e-14, help="Lanczos termination tolerance")
    p.add_argument("--cluster-rel", type=float, default=CLUSTER_REL)
    p.add_argument("--cluster-abs", type=float, default=CLUSTER_ABS)
    p.add_argument("--threads", type=int, default=0, help="sweep workers (default $EIGENGREEDY_THREADS or 1)")


def _parse_mu(text: str) -> np.ndarray:
    return np.array([float(t) for t in text.replace(",", " ").split()])


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------
def cmd_gen(args) -> int:
    kind = args.family
    if kind == "xxz":
        fam = generators.xxz_family(args.L)
    elif kind == "blbq":
        fam = generators.blbq_family(args.L)
    elif kind == "random":
        fam = generators.random_quadratic_family(args.n, args.seed)
    elif kind == "example1":
        fam = generators.example1_family()
    else:
        if not args.nodes:
            raise ValueError("lagrange needs --nodes")
        fam = generators.lagrange_rank_one_family(args.nodes)
    save_model(fam, args.out)
    print(f"wrote {args.out}: n={fam.n} Q={fam.Q} p={fam.p}")
    return EXIT_OK


def cmd_grid(args) -> int:
    if args.box:
        box = np.array(args.box, dtype=float).reshape(-1, 2)
    else:
        box = load_model(args.model).domain
    grid = chebyshev_grid(box, args.counts)
    pts = grid.points
    for extra in args.extra or []:
        pts = np.vstack([pts, _parse_mu(extra)])
    if args.extra:
        grid = ParameterGrid(pts, provenance="explicit_list")
    save_grid(grid, args.out)
    print(f"wrote {args.out}: {len(grid)} points")
    return EXIT_OK


def _config(args, grid) -> GreedyConfig:
    return GreedyConfig(grid=grid, tol=args.tol, max_iterations=args.max_iter, initial_index=args.initial_index,
                        eig_tol=args.eig_tol, cluster_abs=args.cluster_abs, cluster_rel=args.cluster_rel,
                        threads=_threads(args), paranoid=args.paranoid)


def cmd_build_gap(args) -> int:
    fam = load_model(args.model)
    grid = load_grid(args.grid)
    state, trace = greedy_gap(fam, _config(args, grid))
    save_rom(state, args.out, store_basis=args.store_basis)
    if args.trace:
        trace.write_csv(args.trace)
    print(f"gap ROM: r={state.r} snapshots={state.J} max Gamma={_f(trace.final_max)} time={trace.seconds:.2f}s")
    return EXIT_OK


def cmd_build_eig(args) -> int:
    fam = load_model(args.model)
    grid = load_grid(args.grid)
    gap_state = load_rom(args.gap_rom)
    eps_gamma = args.eps_gamma if args.eps_gamma is not None else gap_state.meta.get("eps_gamma")
    if eps_gamma is None or not 0 < eps_gamma < 1:
        raise ValueError("eps_gamma must lie in (0, 1); pass --eps-gamma")
    state, trace = greedy_eigenspace(fam, gap_state, _config(args, grid), eps_gamma)
    save_rom(state, args.out, store_basis=args.store_basis)
    if args.trace:
        trace.write_csv(args.trace)
    print(f"eigenspace ROM: r={state.r} snapshots={state.J} max Delta={_f(trace.final_max)} time={trace.seconds:.2f}s")
    return EXIT_OK


def _mu_list(args) -> list[np.ndarray]:
    mus = [_parse_mu(m) for m in (args.mu or [])]
    if args.grid:
        mus.extend(load_grid(args.grid).points)
    if not mus:
        raise ValueError("no parameters given (--mu or --grid)")
    return mus


def cmd_eval(args) -> int:
    eig = load_rom(args.rom_eig)
    gap = load_rom(args.rom_gap)
    if args.lift and eig.V is None:
        raise ValueError("--lift needs an eigenspace ROM built with --store-basis")
    mus = _mu_list(args)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    lifted = []
    try:
        w = csv.writer(out)
        w.writerow(["mu", "lam1_V", "m1_V", "status", "bound", "eps_mu", "coefficients"])
        for mu in mus:
            res = conditional_certify_online(gap, eig, mu, eps_mode=args.eps_mode)
            red = eig.reduced_eig(mu)
            coeffs = red.vectors[:, :red.m1]
            if args.lift:
                lifted.append(eig.lift(coeffs))
            w.writerow([" ".join(_f(x) for x in mu), _f(res.lam1), res.m1, res.status, _f(res.bound),
                        _f(res.eps_mu), " ".join(_f(x) for x in np.real_if_close(coeffs.T.ravel()))])
    finally:
        if args.out:
            out.close()
    if args.lift:
        np.savez(args.lift, *lifted)
    return EXIT_OK


def cmd_verify(args) -> int:
    fam = load_model(args.model)
    grid = load_grid(args.grid)
    gap = load_rom(args.gap_rom)
    eig = load_rom(args.eig_rom) if args.eig_rom else None
    if eig is not None and eig.V is None:
        raise ValueError("verification of projection errors needs an eigenspace ROM built with --store-basis")
    eps_gamma = gap.meta.get("eps_gamma")
    eps_W = eig.meta.get("eps_W") if eig is not None else None
    rows = verify_grid(fam, gap, grid, eig, eps_gamma, eps_W, oracle=True, threads=_threads(args),
                       solver_kw=_solver_kw(args))
    if args.out:
        write_report(rows, args.out)
    bad = [r for r in rows if r["violations"]]
    for r in bad:
        print(f"VIOLATION at mu={' '.join(_f(x) for x in r['mu'])}: {r['violations']}")
    print(f"verified {len(rows)} points, {len(bad)} with violations")
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_bench(args) -> int:
    if args.repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    rom = load_rom(args.rom)
    grid = load_grid(args.grid)
    fam = None if args.rom_only else load_model(args.model)
    t_rom = t_fom = 0.0
    for _ in range(args.repetitions):
        for mu in grid:
            t0 = time.perf_counter()
            rom.reduced_eig(mu)
            t_rom += time.perf_counter() - t0
            if fam is not None:
                t0 = time.perf_counter()
                lowest_clusters(fam, mu, 1, **_solver_kw(args))
                t_fom += time.perf_counter() - t0
    count = args.repetitions * len(grid)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["n", "r", "solves", "rom_mean_s", "fom_mean_s", "speedup"])
        rom_mean = t_rom / count
        fom_mean = t_fom / count if fam is not None else float("nan")
        w.writerow([rom.n, rom.r, count, _f(rom_mean), _f(fom_mean), _f(fom_mean / rom_mean)])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eigengreedy", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a test family in the model file format")
    p.add_argument("family", choices=["xxz", "blbq", "random", "example1", "lagrange"])
    p.add_argument("--L", type=int, default=4)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=float, nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("grid", help="write a Chebyshev-with-endpoints tensor grid")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--box", type=float, nargs="+", help="lo1 hi1 [lo2 hi2 ...]")
    p.add_argument("--counts", type=int, nargs="+", required=True)
    p.add_argument("--extra", action="append", help="additional point, e.g. '1' or '0.5,1'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    for name, func in (("build-gap", cmd_build_gap), ("build-eig", cmd_build_eig)):
        p = sub.add_parser(name, help="greedy build of the gap ROM" if name == "build-gap" else "greedy build of the eigenspace ROM")
        p.add_argument("--model", required=True)
        p.add_argument("--grid", required=True)
        p.add_argument("--tol", type=float, required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--trace")
        p.add_argument("--max-iter", type=int, default=1000)
        p.add_argument("--initial-index", type=int, default=0)
        p.add_argument("--store-basis", action="store_true")
        p.add_argument("--paranoid", action="store_true", help="recompute Gramians after every extension")
        if name == "build-eig":
            p.add_argument("--gap-rom", required=True)
            p.add_argument("--eps-gamma", type=float, help="defaults to the tolerance stored in the gap ROM")
        _add_solver_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="online evaluation with conditional certification")
    p.add_argument("--rom-eig", required=True)
    p.add_argument("--rom-gap", required=True)
    p.add_argument("--mu", action="append")
    p.add_argument("--grid")
    p.add_argument("--eps-mode", choices=["absolute", "relative"], default="absolute")
    p.add_argument("--lift", metavar="NPZ", help="write lifted ground vectors (needs a stored basis)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="full-order oracle sweep checking every certified claim")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--gap-rom", required=True)
    p.add_argument("--eig-rom")
    p.add_argument("--out")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="wall-clock FOM vs ROM solves")
    p.add_argument("--model")
    p.add_argument("--rom", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--rom-only", action="store_true")
    p.add_argument("--out")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "bench" and not args.rom_only and not args.model:
        print("error: bench needs --model unless --rom-only", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - operational errors map to exit code 1
        if args.verbose:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
