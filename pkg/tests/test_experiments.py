import itertools
import math

import numpy as np
import pytest

from eomp import RngSpec, StopRule, eomp, omp_incremental, shifted_block_dictionary, synthetic_frame_pair
from eomp.experiments import (
    aggregate,
    block_grid,
    complexity_model,
    default_eps_grid,
    exact_recovery_sweep,
    load_config,
    psnr_vs_k_experiment,
    recovered_sparsity_sweep,
    run_config,
    runtime_benchmark,
)


def test_complexity_model_single_iteration():
    omp, eomp_, ratio = complexity_model(128, 256, 1)
    assert (omp, eomp_) == (259 * 128, 258 * 128) == (33152, 33024)
    assert ratio == pytest.approx(33024 / 33152)


def test_complexity_ratio_tends_to_five():
    # exact ratio is about 5 - 4/s once m dominates
    ratios = [complexity_model(1000, 10**9, s)[2] for s in (50, 200, 800)]
    assert all(abs(r - 5) < 0.1 for r in ratios)
    assert ratios == sorted(ratios)


def eomp_cost_loop(n, m, s):
    total = 0
    for t in range(s):
        total += (m - t) * n  # correlations with the remaining atoms
    for t in range(1, s):
        total += (m - t) * 4 * n  # one-step orthonormalization of the remaining atoms
    return total + 2 * s * n  # residual / coefficient updates


@pytest.mark.parametrize("n, m, s", [(n, m, s) for n in (3, 7, 128) for m in (3, 40, 256) for s in (1, 2, 3)])
def test_eomp_closed_form_matches_summation(n, m, s):
    assert complexity_model(n, m, s)[1] == eomp_cost_loop(n, m, s)


def test_complexity_model_validates():
    with pytest.raises(ValueError):
        complexity_model(4, 8, 5)


def test_exact_recovery_small_k_and_square_k():
    res = exact_recovery_sweep(64, 128, [1], 100, RngSpec(0))
    assert res.row(1, "omp").recovery_rate == res.row(1, "eomp").recovery_rate == 1.0
    sq = exact_recovery_sweep(16, 32, [16], 20, RngSpec(0))
    assert sq.row(16, "omp").recovery_rate <= 0.1
    assert sq.row(16, "eomp").recovery_rate <= 0.1


def test_recovered_sparsity_k1():
    for family, size in (("gaussian", 64), ("odct", 2)):
        res = recovered_sparsity_sweep(family, 32, size, [1], 10, RngSpec(0))
        assert res.row(1, "omp").mean_recovered_k == res.row(1, "eomp").mean_recovered_k == 1.0


def test_sweeps_are_deterministic_across_workers(tmp_path):
    a = recovered_sparsity_sweep("gaussian", 16, 32, [3, 6], 6, RngSpec(5))
    b = recovered_sparsity_sweep("gaussian", 16, 32, [3, 6], 6, RngSpec(5), workers=2)
    assert a.sweep_csv() == b.sweep_csv()
    assert a.trials_csv() == b.trials_csv()
    c = exact_recovery_sweep(16, 32, [2, 4], 5, RngSpec(1), workers=2)
    d = exact_recovery_sweep(16, 32, [2, 4], 5, RngSpec(1))
    assert c.trials_csv() == d.trials_csv()


def test_paired_algorithms_share_instances():
    res = recovered_sparsity_sweep("gaussian", 16, 32, [4], 5, RngSpec(2))
    by_trial = {}
    for r in res.records:
        by_trial.setdefault(r.trial, set()).add(r.seed)
    assert all(len(s) == 1 for s in by_trial.values())


def test_aggregates_recompute_from_records():
    res = exact_recovery_sweep(16, 32, [2, 5], 8, RngSpec(3))
    assert aggregate(res.records, ("omp", "eomp")) == res.rows
    for row in res.rows:
        recs = [r for r in res.records if r.param == row.param and r.algo == row.algo]
        assert row.recovery_rate == sum(r.exact_recovered for r in recs) / len(recs)
        assert row.mean_recovered_k == sum(r.recovered_k for r in recs) / len(recs)


def test_csv_headers_name_fields():
    res = exact_recovery_sweep(8, 16, [2], 2, RngSpec(0))
    header = res.trials_csv().splitlines()[0].split(",")
    assert header[:6] == ["experiment", "param", "trial", "seed", "algo", "k_true"]
    assert "recovered_k" in header and "wall_time" in header
    assert res.sweep_csv().splitlines()[0].startswith("param,algo,mean_recovered_k,recovery_rate")


def test_block_grid():
    origins = block_grid((64, 64), (8, 8), (-7, 7))
    assert origins[0] == (7, 7) and len(origins) == 36
    assert all(r + 7 + 8 <= 64 for r, _ in origins)


def test_default_eps_grid():
    g = default_eps_grid()
    assert len(g) == 8 and g[0] == pytest.approx(1e-1) and g[-1] == pytest.approx(1e-4)
    assert all(b < a for a, b in zip(g, g[1:]))


def test_psnr_noise_free_pair_is_one_atom_per_block():
    ref, tgt = synthetic_frame_pair(64, 64, (2, -3), 0.0, RngSpec(0))
    res = psnr_vs_k_experiment(ref, tgt, (8, 8), (-7, 7), [1e-5])
    for algo in ("omp", "eomp"):
        row = res.row(1e-5, algo)
        assert row.mean_recovered_k == 1.0
        assert row.mean_psnr >= 100


def test_psnr_prefix_matches_direct_runs():
    ref, tgt = synthetic_frame_pair(40, 40, (1, 2), 2.0, RngSpec(4))
    eps = [1e-1, 1e-2]
    res = psnr_vs_k_experiment(ref, tgt, (8, 8), (-7, 7), eps)
    origins = block_grid(tgt.shape, (8, 8), (-7, 7))
    for b, (r0, c0) in enumerate(origins):
        blk = tgt[r0:r0 + 8, c0:c0 + 8].ravel()
        y = blk - blk.mean()
        d = shifted_block_dictionary(ref, (r0, c0), (8, 8), (-7, 7))
        for e in eps:
            for algo, solver in (("omp", omp_incremental), ("eomp", eomp)):
                direct = solver(d, y, StopRule(e * np.linalg.norm(y), max_iter=64))
                rec = next(r for r in res.records if r.param == e and r.trial == b and r.algo == algo)
                assert rec.recovered_k == direct.iterations
                err = y - direct.approximation()
                assert rec.sq_error == pytest.approx(err @ err, rel=1e-9, abs=1e-12)


def test_psnr_single_block_and_peak():
    ref, tgt = synthetic_frame_pair(22, 22, (1, 1), 1.0, RngSpec(8))
    res = psnr_vs_k_experiment(ref, tgt, (8, 8), (-7, 7), [1e-1])
    assert res.meta["blocks"] == 1
    row = res.row(1e-1, "eomp")
    rec = [r for r in res.records if r.algo == "eomp"]
    assert row.mean_recovered_k == rec[0].recovered_k
    assert res.meta["peak"] == pytest.approx(ref.max())
    assert row.mean_psnr == pytest.approx(10 * math.log10(ref.max() ** 2 / (rec[0].sq_error / 64)))
    ints = psnr_vs_k_experiment(np.rint(ref), np.rint(tgt), (8, 8), (-7, 7), [1e-1])
    assert ints.meta["peak"] == 255.0


def test_psnr_flat_reference_is_skipped():
    ref = np.full((24, 24), 7.0)
    tgt = ref + np.random.RandomState(0).standard_normal(ref.shape)
    res = psnr_vs_k_experiment(ref, tgt, (8, 8), (-7, 7), [1e-1])
    assert res.meta["skipped_blocks"] == res.meta["blocks"] == 1
    assert res.row(1e-1, "omp").mean_recovered_k == 0


def test_runtime_benchmark_k1_ratio_near_one():
    res = runtime_benchmark(128, 2, [1], 20, RngSpec(0), algos=("omp", "eomp"))
    assert res.row(1, "omp").mean_recovered_k == res.row(1, "eomp").mean_recovered_k == 1
    assert 0.5 <= res.ratio(1) <= 2.0
    assert all(r.wall_time is not None and r.wall_time > 0 for r in res.records)


def test_config_round_trip(tmp_path):
    cfg_file = tmp_path / "exp.cfg"
    cfg_file.write_text(
        "experiment = recovered-sparsity\nfamily = gaussian\nn = 16\nm = 32\n"
        "k_range = 2:6:2\ntrials = 4\nbase_seed = 9\nalgos = omp, eomp\n"
    )
    cfg = load_config(cfg_file)
    assert cfg["k_range"] == [2, 4, 6] and cfg["algos"] == ("omp", "eomp")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run_config(cfg, out1)
    run_config(load_config(cfg_file), out2)
    for name in ("recovered-sparsity-gaussian_sweep.csv", "recovered-sparsity-gaussian_trials.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    manifest = (out1 / "recovered-sparsity-gaussian_manifest.txt").read_text()
    assert cfg["_hash"] in manifest and "base_seed = 9" in manifest


def test_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("experiment = exact-recovery\nbogus = 1\n")
    with pytest.raises(ValueError):
        load_config(p)


@pytest.mark.parametrize("body, line", [
    ("experiment = exact-recovery\nn = 16\nbogus = 1\n", 3),
    ("experiment = exact-recovery\ntrials = many\n", 2),
    ("experiment = exact-recovery\nthis line has no separator\n", 2),
    ("experiment = exact-recovery\nn = 4\nn = 5\n", 3),
])
def test_config_errors_name_the_line(tmp_path, body, line):
    from eomp.experiments import ConfigError

    p = tmp_path / "bad.cfg"
    p.write_text(body)
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert info.value.line == line
    assert f"line {line}:" in str(info.value)
