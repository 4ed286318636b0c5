import itertools

import numpy as np
import pytest

from eomp import (
    RngSpec,
    SparseSignal,
    gaussian_ensemble,
    k_sparse_gaussian_signal,
    mutual_coherence,
    odct_dictionary,
    shifted_block_dictionary,
    synthesize,
    synthetic_frame_pair,
)
from eomp.dictionaries import derive_seed, read_pgm, write_pgm


def unit_columns(a, tol=1e-12):
    return np.all(np.abs(np.linalg.norm(a, axis=0) - 1.0) <= tol)


def pairwise_coherence(a):
    a = a / np.linalg.norm(a, axis=0)
    best = 0.0
    for i, j in itertools.combinations(range(a.shape[1]), 2):
        best = max(best, abs(sum(a[:, i] * a[:, j])))
    return best


def test_rng_determinism_and_seed_range():
    a = RngSpec(2**64 - 1).generator().standard_normal(5)
    b = RngSpec(2**64 - 1).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        RngSpec(2**64)
    with pytest.raises(ValueError):
        RngSpec(1, "pcg64")


def test_rng_stream_is_frozen():
    # golden draws recorded from the generator; guards against silent changes
    assert RngSpec(0).generator().randint(0, 2**31) == 647325673
    np.testing.assert_array_equal(
        RngSpec(12345).generator().standard_normal(3),
        [0.8949447742704916, -0.3606054829135718, -0.4438733204832529],
    )
    assert derive_seed(0, "x", 1) == derive_seed(0, "x", 1) != derive_seed(0, "x", 2)


def test_gaussian_ensemble_shapes_and_norms():
    d = gaussian_ensemble(128, 256, RngSpec(1))
    assert d.atoms.shape == (128, 256)
    assert unit_columns(d.atoms)
    assert d.family == "gaussian"
    one = gaussian_ensemble(1, 1, RngSpec(5)).atoms
    assert abs(one[0, 0]) == pytest.approx(1.0, abs=1e-15)


def test_gaussian_ensemble_seeding():
    a = gaussian_ensemble(8, 16, RngSpec(42)).atoms
    b = gaussian_ensemble(8, 16, RngSpec(42)).atoms
    c = gaussian_ensemble(8, 16, RngSpec(43)).atoms
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_gaussian_ensemble_rejects_tall():
    with pytest.raises(ValueError):
        gaussian_ensemble(8, 4)


def test_dictionary_is_read_only():
    d = gaussian_ensemble(4, 8)
    with pytest.raises(ValueError):
        d.atoms[0, 0] = 1.0


def test_odct_dc_atom_and_norms():
    d = odct_dictionary(128, 8)
    assert d.atoms.shape == (128, 1024)
    assert unit_columns(d.atoms)
    np.testing.assert_allclose(d.atoms[:, 0], np.full(128, 1 / np.sqrt(128)), atol=1e-15)
    # j >= 1 atoms are zero mean
    assert np.abs(d.atoms[:, 1:].sum(axis=0)).max() < 1e-12


def test_odct_is_more_coherent_than_two_orthonormal_bases():
    d = odct_dictionary(4, 2)
    assert d.atoms.shape == (4, 8)
    h = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]]) / 2.0
    tight = np.hstack([np.eye(4), h]) / np.sqrt(2)  # rows orthonormal
    np.testing.assert_allclose(tight @ tight.T, np.eye(4), atol=1e-15)
    assert pairwise_coherence(d.atoms) > pairwise_coherence(tight)
    assert mutual_coherence(d.atoms) == pytest.approx(pairwise_coherence(d.atoms), abs=1e-14)


def test_k_sparse_signal():
    s = k_sparse_gaussian_signal(256, 50, RngSpec(9))
    assert len(set(s.support)) == 50 and all(0 <= j < 256 for j in s.support)
    assert s == k_sparse_gaussian_signal(256, 50, RngSpec(9))
    full = k_sparse_gaussian_signal(10, 10, RngSpec(1))
    assert sorted(full.support) == list(range(10))
    one = k_sparse_gaussian_signal(10, 1, RngSpec(1))
    assert np.count_nonzero(one.dense()) == 1
    with pytest.raises(ValueError):
        k_sparse_gaussian_signal(5, 6)


def test_sparse_signal_validation():
    with pytest.raises(ValueError):
        SparseSignal(4, (1, 1), (1.0, 2.0))
    with pytest.raises(ValueError):
        SparseSignal(4, (1,), (0.0,))
    with pytest.raises(ValueError):
        SparseSignal(4, (4,), (1.0,))


def test_synthesize():
    d = gaussian_ensemble(16, 32, RngSpec(3))
    np.testing.assert_array_equal(synthesize(d, SparseSignal(32, (7,), (1.0,))), d.atoms[:, 7])
    np.testing.assert_array_equal(synthesize(d, SparseSignal(32, (), ())), np.zeros(16))
    s = k_sparse_gaussian_signal(32, 5, RngSpec(4))
    dense = s.dense()
    matvec = np.array([sum(d.atoms[i, j] * dense[j] for j in range(32)) for i in range(16)])
    np.testing.assert_allclose(synthesize(d, s), matvec, atol=1e-12)
    with pytest.raises(ValueError):
        synthesize(d, SparseSignal(31, (0,), (1.0,)))


def test_shifted_block_dictionary_16x16_blocks_wide_search():
    ref = synthetic_frame_pair(16 + 47, 16 + 47, rng=RngSpec(2))[0]
    d = shifted_block_dictionary(ref, (23, 23), (16, 16), (-23, 24))
    assert (d.n, d.m) == (256, 2304)


def test_shifted_block_dictionary_layout():
    ref, _ = synthetic_frame_pair(40, 40, rng=RngSpec(5))
    d = shifted_block_dictionary(ref, (10, 12), (8, 8), (-7, 7))
    assert (d.n, d.m) == (64, 225)
    assert unit_columns(d.atoms)
    # shifts are ordered (dr, dc) lexicographically
    for idx, (dr, dc) in [(0, (-7, -7)), (1, (-7, -6)), (15, (-6, -7)), (112, (0, 0))]:
        patch = ref[10 + dr:18 + dr, 12 + dc:20 + dc].ravel()
        patch = patch - patch.mean()
        np.testing.assert_allclose(d.atoms[:, idx], patch / np.linalg.norm(patch), atol=1e-13)


def test_shifted_block_dictionary_flags_flat_blocks():
    ref = np.zeros((20, 20))
    ref[:, 10:] = np.arange(200).reshape(20, 10)
    d = shifted_block_dictionary(ref, (6, 6), (4, 4), (-2, 2))
    assert d.degenerate.any() and not d.degenerate.all()
    assert np.all(d.atoms[:, d.degenerate] == 0.0)
    assert unit_columns(d.atoms[:, ~d.degenerate])


def test_shifted_block_dictionary_bounds():
    with pytest.raises(ValueError):
        shifted_block_dictionary(np.ones((10, 10)), (1, 1), (4, 4), (-2, 2))


def test_synthetic_frame_pair_shift():
    ref, tgt = synthetic_frame_pair(32, 32, (2, -3), 0.0, RngSpec(7))
    np.testing.assert_array_equal(tgt[2:, :-3], ref[:-2, 3:])
    ref2, tgt2 = synthetic_frame_pair(32, 32, (2, -3), 0.0, RngSpec(7))
    assert np.array_equal(ref, ref2) and np.array_equal(tgt, tgt2)
    _, noisy = synthetic_frame_pair(32, 32, (2, -3), 2.0, RngSpec(7))
    assert 1.5 < np.std(noisy - tgt) < 2.5


def test_pgm_round_trip(tmp_path):
    img = np.arange(12, dtype=float).reshape(3, 4) * 20
    for binary in (False, True):
        p = tmp_path / f"f{binary}.pgm"
        write_pgm(p, img, binary=binary)
        np.testing.assert_array_equal(read_pgm(p), img)
