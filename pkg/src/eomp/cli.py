"""Command-line entry point: ``eomp <subcommand> ...``.

Exit status is 0 on success, 2 on usage errors and 3 on data or file
errors. All randomness comes from ``--seed`` (default 0).
"""
from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .dictionaries import (
    Dictionary,
    RngSpec,
    gaussian_ensemble,
    k_sparse_gaussian_signal,
    odct_dictionary,
    read_pgm,
    synthetic_frame_pair,
    synthesize,
    write_pgm,
)
from .linalg import MatrixFormatError, read_matrix, write_matrix
from .pursuit import SOLVERS, StopRule


class DataError(Exception):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not np.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError(f"expected a finite number >= 0, got {text!r}")
    return v


def _int_list(text):
    try:
        vals = ex._int_list(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected e.g. '4,8,12' or '40:70' or '4:48:4', got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"values must be positive, got {text!r}")
    return vals


def _algos(text):
    vals = tuple(a.strip() for a in text.split(",") if a.strip())
    bad = [a for a in vals if a not in SOLVERS]
    if bad or not vals:
        raise argparse.ArgumentTypeError(f"unknown algorithm(s) {bad}; choose from {sorted(SOLVERS)}")
    return vals


def _read_vector(path):
    a = read_matrix(path)
    if 1 not in a.shape:
        raise DataError(f"{path}: expected a single row or column, got {a.shape[0]}x{a.shape[1]}")
    return a.ravel()


def _read_frame(path):
    p = Path(path)
    if p.suffix.lower() == ".pgm":
        return read_pgm(p)
    return read_matrix(p)


def _dictionary_from_file(path):
    atoms = read_matrix(path)
    norms = np.linalg.norm(atoms, axis=0)
    unit = bool(np.all(np.abs(norms - 1.0) <= 1e-12))
    deg = norms == 0.0
    return Dictionary(atoms, "file", "unit-l2" if unit else "raw", str(path), deg)


# ----------------------------------------------------------------- handlers


def cmd_gen_dict(args):
    if args.family == "gaussian":
        m = args.m or 2 * args.n
        if m < args.n:
            raise argparse.ArgumentTypeError("--m must be >= --n")
        d = gaussian_ensemble(args.n, m, RngSpec(args.seed))
    else:
        d = odct_dictionary(args.n, args.redundancy)
    write_matrix(args.out, d.atoms)
    print(f"wrote {d.family} dictionary {d.n}x{d.m} to {args.out}")


def cmd_gen_signal(args):
    if args.k > args.m:
        raise argparse.ArgumentTypeError("--k must be <= --m")
    sig = k_sparse_gaussian_signal(args.m, args.k, RngSpec(args.seed))
    write_matrix(args.out, sig.dense()[:, None])
    msg = f"wrote {args.k}-sparse signal of length {args.m} to {args.out}"
    if args.dict:
        d = _dictionary_from_file(args.dict)
        if d.m != args.m:
            raise DataError(f"{args.dict}: dictionary has {d.m} atoms, signal length is {args.m}")
        y = synthesize(d, sig)
        write_matrix(args.obs_out, y[:, None])
        msg += f"; observations to {args.obs_out}"
    print(msg)


def solve_report(algo, res) -> str:
    lines = [
        f"algo: {algo}",
        f"iterations: {res.iterations}",
        f"termination: {res.termination}",
        f"final_residual: {res.final_residual!r}",
        "support: " + " ".join(str(j) for j in res.support),
        "z: " + " ".join(repr(float(v)) for v in res.z),
        "residual_norms: " + " ".join(repr(float(v)) for v in res.residual_norms),
    ]
    if res.x is not None:
        lines.append("x: " + " ".join(repr(float(v)) for v in res.x))
    return "\n".join(lines) + "\n"


def cmd_solve(args):
    d = _dictionary_from_file(args.dict)
    y = _read_vector(args.obs)
    if y.size != d.n:
        raise DataError(f"{args.obs}: observation length {y.size} != dictionary rows {d.n}")
    stop = StopRule(epsilon=args.eps, max_iter=args.max_iter)
    res = SOLVERS[args.algo](d, y, stop, refit=args.refit)
    report = solve_report(args.algo, res)
    if args.report:
        Path(args.report).write_text(report)
    print(report, end="")
    if args.x_out:
        if res.x is None:
            raise DataError("--x-out needs --refit")
        write_matrix(args.x_out, res.dense_x(d.m)[:, None])


def _cfg_or_args(args, name):
    if args.config:
        cfg = ex.load_config(args.config)
        if cfg["experiment"] != name:
            raise DataError(f"{args.config}: config is for {cfg['experiment']!r}, not {name!r}")
        res = ex.run_config(cfg, args.out_dir)
        return res, True
    return None, False


def cmd_exact_recovery(args):
    res, done = _cfg_or_args(args, "exact-recovery")
    if not done:
        scale = ex.FULL if args.paper_scale else ex.DESK
        n, m = args.n or scale["n"], args.m or scale["m"]
        ks = args.k_range or list(range(4, (n * 3) // 4 + 1, 4))
        res = ex.exact_recovery_sweep(n, m, ks, args.trials or scale["trials"], RngSpec(args.seed),
                                      args.algos, args.workers)
        res.write(args.out_dir, manifest={"seed": args.seed})
    parts = [f"k={p:g}: " + " ".join(f"{a}={res.row(p, a).recovery_rate:.3f}" for a in _algos_in(res))
             for p in res.params()]
    print("exact recovery rate | " + "; ".join(parts))


def cmd_recovered_sparsity(args):
    res, done = _cfg_or_args(args, "recovered-sparsity")
    if not done:
        n = args.n or 128
        size = args.redundancy if args.family == "odct" else (args.m or 2 * n)
        ks = args.k_range or list(range(40, 71, 2))
        trials = args.trials or (ex.FULL["trials"] if args.paper_scale else ex.DESK["trials"])
        res = ex.recovered_sparsity_sweep(args.family, n, size, ks, trials, RngSpec(args.seed),
                                          args.algos, args.eps, args.workers)
        res.write(args.out_dir, manifest={"seed": args.seed})
    parts = [f"k={p:g}: " + " ".join(f"{a}={res.row(p, a).mean_recovered_k:.2f}" for a in _algos_in(res))
             for p in res.params()]
    print("mean recovered k | " + "; ".join(parts))


def cmd_psnr_k(args):
    res, done = _cfg_or_args(args, "psnr-k")
    if not done:
        if args.paper_scale:
            block, search, frame = (16, 16), (-23, 24), (112, 112)
        else:
            block, search, frame = (8, 8), (-7, 7), (64, 64)
        block = tuple(args.block) if args.block else block
        search = tuple(args.search) if args.search else search
        if args.reference or args.target:
            if not (args.reference and args.target):
                raise argparse.ArgumentTypeError("--reference and --target go together")
            ref, tgt = _read_frame(args.reference), _read_frame(args.target)
            if ref.shape != tgt.shape:
                raise DataError("reference and target frames differ in size")
        else:
            frame = tuple(args.frame) if args.frame else frame
            ref, tgt = synthetic_frame_pair(frame[0], frame[1], tuple(args.shift), args.noise_sigma,
                                            RngSpec(args.seed))
            if args.save_frames:
                out = Path(args.out_dir)
                out.mkdir(parents=True, exist_ok=True)
                write_pgm(out / "reference.pgm", ref)
                write_pgm(out / "target.pgm", tgt)
        eps = ex.default_eps_grid(args.eps_points)
        res = ex.psnr_vs_k_experiment(ref, tgt, block, search, eps, args.algos)
        res.write(args.out_dir, manifest={"seed": args.seed})
    parts = [f"eps={p:.2e}: " + " ".join(
        f"{a}=(K {res.row(p, a).mean_recovered_k:.2f}, {res.row(p, a).mean_psnr:.2f} dB)"
        for a in _algos_in(res)) for p in res.params()]
    print("PSNR vs K | " + "; ".join(parts))


def cmd_bench(args):
    res, done = _cfg_or_args(args, "runtime")
    if not done:
        trials = args.trials or (ex.FULL["trials"] if args.paper_scale else ex.DESK["trials"])
        res = ex.runtime_benchmark(args.n, args.redundancy, args.k_range or [10, 20, 30, 40, 50, 60],
                                   trials, RngSpec(args.seed), args.algos)
        res.write(args.out_dir, manifest={"seed": args.seed})
    print("eomp/omp wall-time ratio | " + "; ".join(f"k={p:g}: {res.ratio(p):.2f}" for p in res.params()))


def cmd_complexity(args):
    if args.s > min(args.n, args.m):
        raise argparse.ArgumentTypeError("--s must be <= min(--n, --m)")
    omp, eomp_, ratio = ex.complexity_model(args.n, args.m, args.s)
    print(f"omp={omp} eomp={eomp_} ratio={ratio:.6f}")


# ------------------------------------------------------------------- parser


def _experiment_flags(p, algos="omp,eomp"):
    p.add_argument("--config", help="key=value experiment config; overrides the other flags")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--desk-scale", action="store_true", help="small, fast defaults (default)")
    scale.add_argument("--paper-scale", action="store_true", help="full-size defaults (N=128, 500 trials)")
    p.add_argument("--trials", type=_positive_int, help="trials per sweep point")
    p.add_argument("--k-range", type=_int_list, help="sparsity values, e.g. 40:70 or 4:48:4 or 5,10")
    p.add_argument("--algos", type=_algos, default=_algos(algos), help=f"comma list (default {algos})")
    p.add_argument("--seed", type=_seed, default=0, help="base seed (default 0)")
    p.add_argument("--out-dir", default="results", help="directory for CSV output (default results)")
    p.add_argument("--workers", type=_positive_int, default=1, help="worker processes (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="eomp", description="OMP / eOMP sparse recovery toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="print tracebacks on errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dict", help="write a dictionary in matrix text format")
    p.add_argument("--family", choices=("gaussian", "odct"), required=True)
    p.add_argument("--n", type=_positive_int, required=True, help="atom length N")
    p.add_argument("--m", type=_positive_int, help="atom count M for gaussian (default 2N)")
    p.add_argument("--redundancy", type=_positive_int, default=2, help="ODCT redundancy (default 2)")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dict)

    p = sub.add_parser("gen-signal", help="write a planted k-sparse Gaussian signal")
    p.add_argument("--m", type=_positive_int, required=True, help="signal length")
    p.add_argument("--k", type=_positive_int, required=True, help="sparsity")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True, help="file for the dense signal x")
    p.add_argument("--dict", help="dictionary file; also write y = Phi x")
    p.add_argument("--obs-out", help="file for y (with --dict)")
    p.set_defaults(func=cmd_gen_signal)

    p = sub.add_parser("solve", help="run one pursuit")
    p.add_argument("--dict", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--algo", choices=sorted(SOLVERS), default="eomp")
    p.add_argument("--eps", type=_nonneg_float, default=1e-5, help="absolute residual threshold")
    p.add_argument("--max-iter", type=_positive_int, help="iteration cap (default min(N, M))")
    p.add_argument("--refit", action="store_true", help="also solve for x on the original atoms")
    p.add_argument("--x-out", help="write the dense x vector here (needs --refit)")
    p.add_argument("--report", help="also write the text report to this file")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("exact-recovery", help="exact recovery rate vs k")
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--m", type=_positive_int)
    _experiment_flags(p)
    p.set_defaults(func=cmd_exact_recovery)

    p = sub.add_parser("recovered-sparsity", help="recovered support size vs planted k")
    p.add_argument("--family", choices=("gaussian", "odct"), default="gaussian")
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--m", type=_positive_int)
    p.add_argument("--redundancy", type=_positive_int, default=2)
    p.add_argument("--eps", type=_nonneg_float, default=ex.RECOVERY_EPS)
    _experiment_flags(p)
    p.set_defaults(func=cmd_recovered_sparsity)

    p = sub.add_parser("psnr-k", help="block coding over shifted-block dictionaries")
    p.add_argument("--reference", help="reference frame (.pgm or matrix text)")
    p.add_argument("--target", help="target frame (.pgm or matrix text)")
    p.add_argument("--frame", type=_positive_int, nargs=2, metavar=("H", "W"))
    p.add_argument("--shift", type=int, nargs=2, default=(2, -3), metavar=("DR", "DC"))
    p.add_argument("--noise-sigma", type=_nonneg_float, default=2.0)
    p.add_argument("--block", type=_positive_int, nargs=2, metavar=("H", "W"))
    p.add_argument("--search", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--eps-points", type=_positive_int, default=8)
    p.add_argument("--save-frames", action="store_true", help="write the synthetic frames as PGM")
    _experiment_flags(p)
    p.set_defaults(func=cmd_psnr_k)

    p = sub.add_parser("bench", help="wall-time comparison on the 2x ODCT problem")
    p.add_argument("--n", type=_positive_int, default=128)
    p.add_argument("--redundancy", type=_positive_int, default=2)
    _experiment_flags(p, algos="omp,eomp,omp-ls")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("complexity", help="evaluate the multiplication-count model")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--s", type=_positive_int, required=True, help="iterations")
    p.set_defaults(func=cmd_complexity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        args.func(args)
    except argparse.ArgumentTypeError as e:
        print(f"eomp {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (MatrixFormatError, DataError, OSError, ValueError, configparser.Error) as e:
        if args.verbose:
            raise
        print(f"eomp {args.command}: {e}", file=sys.stderr)
        return 3
    return 0


def _algos_in(res):
    return list(dict.fromkeys(r.algo for r in res.rows))


if __name__ == "__main__":
    sys.exit(main())
