"""Benchmark harness: exact recovery, recovered sparsity, block coding, runtime.

Every sweep is a list of independent trials. A trial's randomness comes only
from ``derive_seed(base_seed, experiment, param, trial)``, so paired
algorithms see the same instance and results do not depend on how trials
are scheduled. With ``workers > 1`` trials run in a process pool; results
are sorted back into (param, trial, algo) order before aggregation.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import math
import time
from fractions import Fraction
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dictionaries import (
    RngSpec,
    derive_seed,
    gaussian_ensemble,
    k_sparse_gaussian_signal,
    odct_dictionary,
    shifted_block_dictionary,
    synthesize,
    synthetic_frame_pair,
)
from .pursuit import SOLVERS, StopRule

__all__ = [
    "TrialRecord",
    "SweepRow",
    "SweepResult",
    "aggregate",
    "exact_recovery_sweep",
    "recovered_sparsity_sweep",
    "psnr_vs_k_experiment",
    "block_grid",
    "runtime_benchmark",
    "complexity_model",
    "default_eps_grid",
    "load_config",
    "run_config",
    "DESK",
    "FULL",
]

EXACT_TOL = 1e-5
RECOVERY_EPS = 1e-5
WARMUP_TRIALS = 3

DESK = {"n": 64, "m": 128, "trials": 100}
FULL = {"n": 128, "m": 256, "trials": 500}


@dataclass
class TrialRecord:
    experiment: str
    param: float
    trial: int
    seed: int
    algo: str
    k_true: Optional[int]
    recovered_k: int
    exact_recovered: Optional[bool]
    iterations: int
    final_residual: float
    termination: str
    wall_time: Optional[float] = None
    sq_error: Optional[float] = None
    pixels: Optional[int] = None


@dataclass
class SweepRow:
    param: float
    algo: str
    mean_recovered_k: float
    recovery_rate: Optional[float]
    mean_psnr: Optional[float]
    mean_wall_time: Optional[float]
    total_wall_time: Optional[float]
    trials: int


@dataclass
class SweepResult:
    experiment: str
    rows: list
    records: list
    meta: dict = field(default_factory=dict)

    def row(self, param, algo) -> SweepRow:
        for r in self.rows:
            if r.param == param and r.algo == algo:
                return r
        raise KeyError((param, algo))

    def params(self):
        return sorted({r.param for r in self.rows})

    def series(self, algo, attr="mean_recovered_k"):
        return np.array([getattr(self.row(p, algo), attr) for p in self.params()])

    def ratio(self, param, num="eomp", den="omp") -> float:
        """Total wall-time ratio of two algorithms at one sweep point."""
        return self.row(param, num).total_wall_time / self.row(param, den).total_wall_time

    def sweep_csv(self) -> str:
        return _to_csv(self.rows, SweepRow)

    def trials_csv(self) -> str:
        return _to_csv(self.records, TrialRecord)

    def write(self, out_dir, stem=None, manifest: Optional[dict] = None):
        """Write ``<stem>_sweep.csv``, ``<stem>_trials.csv`` and a manifest."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.experiment
        paths = [out / f"{stem}_sweep.csv", out / f"{stem}_trials.csv", out / f"{stem}_manifest.txt"]
        paths[0].write_text(self.sweep_csv())
        paths[1].write_text(self.trials_csv())
        info = dict(self.meta)
        info.update(manifest or {})
        from . import __version__

        info.setdefault("artifact_version", __version__)
        paths[2].write_text("".join(f"{k} = {info[k]}\n" for k in sorted(info)))
        return paths


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _to_csv(items, cls) -> str:
    names = [f.name for f in fields(cls)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for it in items:
        w.writerow(_fmt(getattr(it, n)) for n in names)
    return buf.getvalue()


def _mean(vals):
    return float(math.fsum(vals) / len(vals)) if vals else None


def aggregate(records: Sequence[TrialRecord], algos: Sequence[str]) -> list:
    """Group records by (param, algo) and compute the sweep rows.

    PSNR is the frame-level value ``10 log10(peak^2 / MSE)`` when records
    carry squared errors; ``peak`` is looked up from the records' meta via
    :func:`_psnr_from`. Other aggregates are plain means.
    """
    groups = {}
    for rec in records:
        groups.setdefault((rec.param, rec.algo), []).append(rec)
    order = {a: i for i, a in enumerate(algos)}
    rows = []
    for (param, algo) in sorted(groups, key=lambda pa: (pa[0], order.get(pa[1], len(order)))):
        recs = groups[(param, algo)]
        exact = [r.exact_recovered for r in recs if r.exact_recovered is not None]
        times = [r.wall_time for r in recs if r.wall_time is not None]
        rows.append(
            SweepRow(
                param=param,
                algo=algo,
                mean_recovered_k=_mean([float(r.recovered_k) for r in recs]),
                recovery_rate=_mean([1.0 if e else 0.0 for e in exact]) if exact else None,
                mean_psnr=None,
                mean_wall_time=_mean(times) if times else None,
                total_wall_time=float(math.fsum(times)) if times else None,
                trials=len(recs),
            )
        )
    return rows


def _frame_psnr(records, peak):
    sse = math.fsum(r.sq_error for r in records)
    pix = sum(r.pixels for r in records)
    mse = sse / pix
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _map(fn, items, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
    return [fn(it) for it in items]


def _flatten_sorted(chunks, algos):
    order = {a: i for i, a in enumerate(algos)}
    recs = [r for chunk in chunks for r in chunk]
    recs.sort(key=lambda r: (r.param, r.trial, order[r.algo]))
    return recs


def _check_algos(algos):
    for a in algos:
        if a not in SOLVERS:
            raise ValueError(f"unknown algorithm {a!r}; choose from {sorted(SOLVERS)}")


# ---------------------------------------------------------------- exact recovery


def _exact_trial(item):
    n, m, k, trial, base_seed, algos = item
    seed = derive_seed(base_seed, "exact-recovery", k, trial)
    dic = gaussian_ensemble(n, m, RngSpec(derive_seed(seed, "dictionary")))
    sig = k_sparse_gaussian_signal(m, k, RngSpec(derive_seed(seed, "signal")))
    y = synthesize(dic, sig)
    x_true = sig.dense()
    scale = np.abs(x_true).max()
    out = []
    for algo in algos:
        res = SOLVERS[algo](dic, y, StopRule(epsilon=0.0, max_iter=k), refit=True)
        ok = set(res.support) == set(sig.support)
        if ok:
            err = np.abs(res.dense_x(m) - x_true).max()
            ok = bool(err <= EXACT_TOL * scale)
        out.append(
            TrialRecord("exact-recovery", k, trial, seed, algo, k, res.iterations, ok,
                        res.iterations, res.final_residual, res.termination)
        )
    return out


def exact_recovery_sweep(n, m, k_values, trials, rng: RngSpec = RngSpec(), algos=("omp", "eomp"),
                         workers=1) -> SweepResult:
    """Recovery rate of planted k-sparse signals after exactly k iterations.

    A trial counts as recovered when the support matches and the refit
    coefficients agree with the planted ones to 1e-5 of their max magnitude.
    """
    _check_algos(algos)
    ks = [int(k) for k in k_values]
    if any(not 1 <= k <= n for k in ks):
        raise ValueError(f"k values must lie in [1, {n}]")
    items = [(n, m, k, t, rng.seed, tuple(algos)) for k in ks for t in range(trials)]
    recs = _flatten_sorted(_map(_exact_trial, items, workers), algos)
    meta = {"experiment": "exact-recovery", "n": n, "m": m, "trials": trials, "base_seed": rng.seed,
            "exact_tol": EXACT_TOL}
    return SweepResult("exact-recovery", aggregate(recs, algos), recs, meta)


# ---------------------------------------------------------- recovered sparsity


def _make_dictionary(family, n, size, seed):
    if family == "gaussian":
        return gaussian_ensemble(n, size, RngSpec(derive_seed(seed, "dictionary")))
    if family == "odct":
        return odct_dictionary(n, size)
    raise ValueError(f"unknown dictionary family {family!r}")


def _sparsity_trial(item):
    family, n, size, k, trial, base_seed, algos, eps, timed = item
    exp = f"recovered-sparsity-{family}"
    seed = derive_seed(base_seed, exp, k, trial)
    dic = _make_dictionary(family, n, size, seed)
    sig = k_sparse_gaussian_signal(dic.m, k, RngSpec(derive_seed(seed, "signal")))
    y = synthesize(dic, sig)
    stop = StopRule(epsilon=eps, max_iter=n)
    out = []
    for algo in algos:
        t0 = time.perf_counter()
        res = SOLVERS[algo](dic, y, stop)
        dt = time.perf_counter() - t0
        out.append(
            TrialRecord(exp, k, trial, seed, algo, k, res.iterations, None, res.iterations,
                        res.final_residual, res.termination, dt if timed else None)
        )
    return out


def recovered_sparsity_sweep(family, n, size, k_values, trials, rng: RngSpec = RngSpec(),
                             algos=("omp", "eomp"), eps=RECOVERY_EPS, workers=1) -> SweepResult:
    """Support size reached when pursuing a planted signal down to ``eps``.

    ``size`` is the atom count M for ``family="gaussian"`` and the
    redundancy factor for ``family="odct"``. Gaussian trials draw a fresh
    dictionary each; the ODCT dictionary is deterministic.
    """
    _check_algos(algos)
    items = [(family, n, size, int(k), t, rng.seed, tuple(algos), eps, False)
             for k in k_values for t in range(trials)]
    recs = _flatten_sorted(_map(_sparsity_trial, items, workers), algos)
    exp = f"recovered-sparsity-{family}"
    meta = {"experiment": exp, "family": family, "n": n, "size": size, "trials": trials,
            "base_seed": rng.seed, "eps": eps}
    return SweepResult(exp, aggregate(recs, algos), recs, meta)


# ----------------------------------------------------------------- block coding


def default_eps_grid(points=8, hi=1e-1, lo=1e-4):
    """Geometric grid of relative residual thresholds, loosest first."""
    return [float(v) for v in np.geomspace(hi, lo, points)]


def block_grid(shape, block, search):
    """Origins of the blocks that fit with their full search window."""
    lo, hi = search
    bh, bw = block
    rows = range(-lo, shape[0] - hi - bh + 1, bh)
    cols = range(-lo, shape[1] - hi - bw + 1, bw)
    return [(r, c) for r in rows for c in cols]


def psnr_vs_k_experiment(reference, target, block=(8, 8), search=(-7, 7), eps_list=None,
                         algos=("omp", "eomp"), peak=None) -> SweepResult:
    """Code every block of ``target`` over its shifted-block dictionary.

    For each relative threshold in ``eps_list`` a block is pursued until
    ``||r|| < eps * ||y||``, where ``y`` is the block with its mean removed
    (the mean is sent separately and added back). The greedy path does not
    depend on the threshold, so each block is pursued once to the tightest
    threshold and the looser ones read off its prefix.

    Only blocks whose search window fits in the reference are coded. Blocks
    with no usable atoms or a flat target are recorded with K = 0.
    ``peak`` defaults to 255 for integer-valued frames and to the
    reference maximum otherwise.
    """
    _check_algos(algos)
    reference = np.asarray(reference, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    eps_list = default_eps_grid() if eps_list is None else [float(e) for e in eps_list]
    if peak is None:
        integer = np.all(reference == np.rint(reference)) and np.all(target == np.rint(target))
        peak = 255.0 if integer else float(reference.max())
    origins = block_grid(target.shape, block, search)
    if not origins:
        raise ValueError("frame too small for one block plus its search window")
    bh, bw = block
    tightest = min(eps_list)
    recs = []
    skipped = 0
    for b, (r0, c0) in enumerate(origins):
        blk = target[r0:r0 + bh, c0:c0 + bw].ravel()
        mean = blk.mean()
        y = blk - mean
        y_norm = float(np.linalg.norm(y))
        dic = shifted_block_dictionary(reference, (r0, c0), block, search)
        usable = not dic.degenerate.all()
        skipped += not usable
        for algo in algos:
            if usable and y_norm > 0:
                res = SOLVERS[algo](dic, y, StopRule(epsilon=tightest * y_norm, max_iter=dic.n))
                norms = res.residual_norms
            else:
                res, norms = None, np.array([y_norm])
            for eps in eps_list:
                hit = np.flatnonzero(norms < eps * y_norm)
                t = int(hit[0]) if hit.size else len(norms) - 1
                approx = res.D[:, :t] @ res.z[:t] if res is not None else np.zeros_like(y)
                err = y - approx
                recs.append(
                    TrialRecord("psnr-k", eps, b, 0, algo, None, t, None, t, float(norms[t]),
                                "prefix" if res is not None else "skipped", None,
                                float(err @ err), err.size)
                )
    recs.sort(key=lambda r: (r.param, r.trial, algos.index(r.algo)))
    rows = aggregate(recs, algos)
    for row in rows:
        group = [r for r in recs if r.param == row.param and r.algo == row.algo]
        row.mean_psnr = _frame_psnr(group, peak)
    meta = {"experiment": "psnr-k", "block": block, "search": search, "peak": peak,
            "blocks": len(origins), "skipped_blocks": skipped}
    return SweepResult("psnr-k", rows, recs, meta)


# -------------------------------------------------------------------- runtime


def runtime_benchmark(n=128, redundancy=2, k_values=(10, 20, 30, 40, 50, 60), trials=100,
                      rng: RngSpec = RngSpec(), algos=("omp", "eomp", "omp-ls"),
                      eps=RECOVERY_EPS) -> SweepResult:
    """Wall time of each solver on the ODCT recovered-sparsity problem.

    Trials run sequentially; only the solver call is timed. The first
    ``WARMUP_TRIALS`` trials at each k are run but not recorded.
    """
    _check_algos(algos)
    recs = []
    for k in k_values:
        for t in range(-WARMUP_TRIALS, trials):
            item = ("odct", n, redundancy, int(k), t, rng.seed, tuple(algos), eps, True)
            out = _sparsity_trial(item)
            if t >= 0:
                recs.extend(out)
    for r in recs:
        r.experiment = "runtime"
    meta = {"experiment": "runtime", "n": n, "redundancy": redundancy, "trials": trials,
            "base_seed": rng.seed, "eps": eps, "warmup": WARMUP_TRIALS}
    return SweepResult("runtime", aggregate(recs, algos), recs, meta)


def complexity_model(n, m, s):
    """Multiplication counts of OMP and eOMP after ``s`` iterations.

    Closed forms, with ``m`` atoms of length ``n``::

        OMP:  ((2m - s + 7) s / 2 + s (s - 1)) n
        eOMP: ((2m - s + 5) s / 2 + 2 (2m - s)(s - 1)) n

    Returns ``(omp, eomp, eomp / omp)``.
    """
    if not 1 <= s <= min(n, m):
        raise ValueError(f"need 1 <= s <= min(n, m), got s={s}")
    omp = (Fraction(2 * m - s + 7) * s / 2 + s * (s - 1)) * n
    eomp_ = (Fraction(2 * m - s + 5) * s / 2 + 2 * (2 * m - s) * (s - 1)) * n
    # both numerators are always even, so the counts are integers
    return int(omp), int(eomp_), float(eomp_ / omp)


# --------------------------------------------------------------------- config


def _int_list(text):
    """Parse ``"4,8,12"``, ``"40:70"`` or ``"4:48:4"`` (inclusive ranges)."""
    text = text.strip()
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) == 2:
            parts.append(1)
        lo, hi, step = parts
        return list(range(lo, hi + 1, step))
    return [int(p) for p in text.replace(" ", "").split(",") if p]


CONFIG_KEYS = {
    "experiment", "n", "m", "redundancy", "family", "k_range", "trials", "base_seed", "eps",
    "algos", "output", "workers", "block", "search", "noise_sigma", "frame", "shift",
}


class ConfigError(ValueError):
    """Malformed experiment config; ``line`` is 1-based."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}: line {line}: {message}")
        self.line = line


def _key_lines(text):
    lines = {}
    for i, raw in enumerate(text.splitlines(), 1):
        key = raw.split("=", 1)[0].strip().lower()
        if "=" in raw and key and not raw.lstrip().startswith(("#", ";")):
            lines.setdefault(key, i)
    return lines


def load_config(path) -> dict:
    """Read a ``key = value`` experiment config (an optional section header is allowed).

    Every error names the offending line.
    """
    text = Path(path).read_text()
    offset = 0
    if not text.lstrip().startswith("["):
        text, offset = "[experiment]\n" + text, 1
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=str(path))
    except configparser.ParsingError as e:
        lineno, line = e.errors[0]
        raise ConfigError(path, lineno - offset, f"cannot parse {line.strip()!r}") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ConfigError(path, e.lineno - offset, e.message.split(":")[-1].strip()) from None
    text = text.split("\n", offset)[-1] if offset else text
    where = _key_lines(text)
    cfg = dict(cp[cp.sections()[0]])
    for key in sorted(set(cfg) - CONFIG_KEYS, key=where.get):
        raise ConfigError(path, where[key], f"unknown key {key!r}")
    if "experiment" not in cfg:
        raise ConfigError(path, 1, "missing 'experiment'")

    def convert(key, fn):
        try:
            return fn(cfg[key])
        except ValueError:
            raise ConfigError(path, where[key], f"bad value for {key}: {cfg[key]!r}") from None

    out = {"experiment": cfg["experiment"].strip()}
    for key in ("n", "m", "redundancy", "trials", "base_seed", "workers"):
        if key in cfg:
            out[key] = convert(key, int)
    for key in ("eps", "noise_sigma"):
        if key in cfg:
            out[key] = convert(key, float)
    if "k_range" in cfg:
        out["k_range"] = convert("k_range", _int_list)
    for key in ("block", "search", "frame", "shift"):
        if key in cfg:
            out[key] = tuple(convert(key, lambda v: _int_list(v.replace(":", ","))))
    if "algos" in cfg:
        out["algos"] = tuple(a.strip() for a in cfg["algos"].split(",") if a.strip())
    for key in ("family", "output"):
        if key in cfg:
            out[key] = cfg[key].strip()
    out["_hash"] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return out


def run_config(cfg: dict, out_dir=None) -> SweepResult:
    """Run the experiment a parsed config describes and write its CSV files."""
    exp = cfg["experiment"]
    rng = RngSpec(cfg.get("base_seed", 0))
    algos = cfg.get("algos", ("omp", "eomp"))
    workers = cfg.get("workers", 1)
    if exp == "exact-recovery":
        res = exact_recovery_sweep(cfg.get("n", DESK["n"]), cfg.get("m", DESK["m"]),
                                   cfg.get("k_range", list(range(4, 49, 4))),
                                   cfg.get("trials", DESK["trials"]), rng, algos, workers)
    elif exp == "recovered-sparsity":
        family = cfg.get("family", "gaussian")
        n = cfg.get("n", 128)
        size = cfg.get("redundancy", 2) if family == "odct" else cfg.get("m", 2 * n)
        res = recovered_sparsity_sweep(family, n, size, cfg.get("k_range", list(range(40, 71, 2))),
                                       cfg.get("trials", DESK["trials"]), rng, algos,
                                       cfg.get("eps", RECOVERY_EPS), workers)
    elif exp == "psnr-k":
        h, w = cfg.get("frame", (64, 64))
        ref, tgt = synthetic_frame_pair(h, w, cfg.get("shift", (2, -3)), cfg.get("noise_sigma", 2.0), rng)
        search = cfg.get("search", (-7, 7))
        res = psnr_vs_k_experiment(ref, tgt, cfg.get("block", (8, 8)), search, None, algos)
    elif exp == "runtime":
        res = runtime_benchmark(cfg.get("n", 128), cfg.get("redundancy", 2),
                                cfg.get("k_range", [10, 20, 30, 40, 50, 60]),
                                cfg.get("trials", DESK["trials"]), rng,
                                cfg.get("algos", ("omp", "eomp", "omp-ls")),
                                cfg.get("eps", RECOVERY_EPS))
    else:
        raise ValueError(f"unknown experiment {exp!r}")
    target = out_dir or cfg.get("output")
    if target:
        manifest = {k.lstrip("_"): v for k, v in cfg.items() if k.startswith("_")}
        manifest["config"] = {k: v for k, v in cfg.items() if not k.startswith("_")}
        res.write(target, manifest=manifest)
    return res
