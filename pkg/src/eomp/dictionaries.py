"""Dictionary families, planted sparse signals and synthetic frames.

Randomness contract
-------------------
All random draws go through :class:`RngSpec`. The generator is numpy's
legacy ``RandomState`` (MT19937) seeded with the 64-bit seed split into two
32-bit words. Its stream, including ``standard_normal`` (Marsaglia polar
method on the uniform stream) and ``permutation``, is frozen by numpy's
compatibility policy, so a given ``(algorithm_id, seed)`` reproduces the
same draws on every platform and numpy release.

Per-trial seeds are derived with :func:`derive_seed`, a splitmix64 chain
over ``(base_seed, *keys)``; trial results therefore do not depend on the
order in which trials are executed.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "RngSpec",
    "derive_seed",
    "Dictionary",
    "SparseSignal",
    "gaussian_ensemble",
    "odct_dictionary",
    "k_sparse_gaussian_signal",
    "synthesize",
    "shifted_block_dictionary",
    "synthetic_frame_pair",
    "mutual_coherence",
    "read_pgm",
    "write_pgm",
]

MASK64 = (1 << 64) - 1
NORM_TOL = 1e-12
FLAT_TOL = 1e-10


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, *keys: Union[int, str]) -> int:
    """Mix ``base_seed`` with integer or string keys into a new 64-bit seed.

    Strings are folded in through their CRC-32, so the mapping is stable
    across interpreter runs (unlike ``hash``).
    """
    h = _splitmix64(int(base_seed) & MASK64)
    for key in keys:
        if isinstance(key, str):
            key = zlib.crc32(key.encode("utf-8"))
        h = _splitmix64(h ^ (int(key) & MASK64))
    return h


@dataclass(frozen=True)
class RngSpec:
    seed: int = 0
    algorithm_id: str = "mt19937-polar"

    def __post_init__(self):
        if not 0 <= int(self.seed) <= MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.algorithm_id != "mt19937-polar":
            raise ValueError(f"unknown rng algorithm {self.algorithm_id!r}")

    def generator(self) -> np.random.RandomState:
        s = int(self.seed)
        return np.random.RandomState([s & 0xFFFFFFFF, s >> 32])

    def child(self, *keys) -> "RngSpec":
        return RngSpec(derive_seed(self.seed, *keys), self.algorithm_id)


@dataclass(frozen=True, eq=False)
class Dictionary:
    """An N x M matrix of column atoms plus how it was made.

    ``degenerate`` flags atoms that must never be selected (flat blocks in
    shifted-block dictionaries); their columns are all zeros.
    """

    atoms: np.ndarray
    family: str
    normalization: str = "unit-l2"
    provenance: object = None
    degenerate: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        atoms = np.asfortranarray(np.asarray(self.atoms, dtype=np.float64))
        if atoms.ndim != 2 or min(atoms.shape) < 1:
            raise ValueError(f"atoms must be a non-empty matrix, got shape {atoms.shape}")
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        deg = self.degenerate
        deg = np.zeros(atoms.shape[1], dtype=bool) if deg is None else np.asarray(deg, dtype=bool)
        if deg.shape != (atoms.shape[1],):
            raise ValueError("degenerate mask must have one entry per atom")
        deg.setflags(write=False)
        object.__setattr__(self, "degenerate", deg)

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def m(self) -> int:
        return self.atoms.shape[1]

    @classmethod
    def from_matrix(cls, atoms, family="raw", normalize=True):
        """Wrap a user matrix, optionally scaling columns to unit norm.

        Zero columns are flagged degenerate instead of normalized.
        """
        atoms = np.array(atoms, dtype=np.float64, order="F")
        norms = np.linalg.norm(atoms, axis=0)
        deg = norms < FLAT_TOL
        if normalize:
            atoms[:, ~deg] /= norms[~deg]
            atoms[:, deg] = 0.0
        return cls(atoms, family, "unit-l2" if normalize else "raw", None, deg)


@dataclass(frozen=True)
class SparseSignal:
    length: int
    support: tuple
    amplitudes: tuple

    def __post_init__(self):
        if len(self.support) != len(self.amplitudes):
            raise ValueError("support and amplitudes differ in length")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support indices must be distinct")
        if any(not 0 <= j < self.length for j in self.support):
            raise ValueError("support index out of range")
        if any(a == 0.0 for a in self.amplitudes):
            raise ValueError("amplitudes must be nonzero")

    @property
    def k(self) -> int:
        return len(self.support)

    def dense(self) -> np.ndarray:
        x = np.zeros(self.length)
        x[list(self.support)] = self.amplitudes
        return x


def _unit_columns(atoms):
    norms = np.linalg.norm(atoms, axis=0)
    return atoms / norms, norms


def gaussian_ensemble(n: int, m: int, rng: RngSpec = RngSpec()) -> Dictionary:
    """i.i.d. standard normal n x m matrix with unit-norm columns."""
    if n < 1 or m < n:
        raise ValueError(f"need 1 <= n <= m, got n={n}, m={m}")
    g = rng.generator().standard_normal((n, m))
    atoms, _ = _unit_columns(g)
    return Dictionary(atoms, "gaussian", "unit-l2", rng)


def odct_dictionary(n: int, redundancy: int = 2) -> Dictionary:
    """Overcomplete sampled-cosine dictionary with ``redundancy * n`` atoms.

    Atom j holds ``cos(pi * (i + 0.5) * j / M)``; atoms j >= 1 are made zero
    mean, then every atom is scaled to unit norm.
    """
    if n < 2 or redundancy < 2:
        raise ValueError(f"need n >= 2 and redundancy >= 2, got {n}, {redundancy}")
    m = redundancy * n
    i = np.arange(n)[:, None] + 0.5
    j = np.arange(m)[None, :]
    atoms = np.cos(np.pi * i * j / m)
    atoms[:, 1:] -= atoms[:, 1:].mean(axis=0)
    norms = np.linalg.norm(atoms, axis=0)
    if np.any(norms < NORM_TOL):
        bad = int(np.flatnonzero(norms < NORM_TOL)[0])
        raise ValueError(f"ODCT atom {bad} vanishes after mean removal")
    return Dictionary(atoms / norms, "odct", "unit-l2", {"redundancy": redundancy})


def k_sparse_gaussian_signal(m: int, k: int, rng: RngSpec = RngSpec()) -> SparseSignal:
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= k <= m, got k={k}, m={m}")
    gen = rng.generator()
    support = gen.permutation(m)[:k]
    amps = gen.standard_normal(k)
    while np.any(amps == 0.0):
        zero = amps == 0.0
        amps[zero] = gen.standard_normal(int(zero.sum()))
    return SparseSignal(m, tuple(int(j) for j in support), tuple(float(a) for a in amps))


def synthesize(dictionary: Dictionary, signal: SparseSignal) -> np.ndarray:
    """Return ``sum_j amplitude_j * atom_j`` over the signal's support."""
    if signal.length != dictionary.m:
        raise ValueError(f"signal length {signal.length} != dictionary size {dictionary.m}")
    if signal.k == 0:
        return np.zeros(dictionary.n)
    cols = dictionary.atoms[:, list(signal.support)]
    return cols @ np.asarray(signal.amplitudes)


def mutual_coherence(atoms) -> float:
    """Largest |<a_i, a_j>| over distinct pairs of normalized columns."""
    a, _ = _unit_columns(np.asarray(atoms, dtype=np.float64))
    g = np.abs(a.T @ a)
    np.fill_diagonal(g, 0.0)
    return float(g.max())


def shifted_block_dictionary(reference, block_origin, block, search) -> Dictionary:
    """All shifted copies of one block of ``reference`` within a search window.

    The atom for shift ``(dr, dc)`` is the ``block``-sized patch at
    ``block_origin + (dr, dc)``, flattened row-major, mean-removed and
    unit-normalized. Atoms are ordered by ``(dr, dc)`` lexicographically.
    Flat patches are kept as zero columns and flagged degenerate.
    """
    ref = np.asarray(reference, dtype=np.float64)
    r0, c0 = block_origin
    h, w = block
    lo, hi = search
    if hi < lo:
        raise ValueError("empty search range")
    if r0 + lo < 0 or c0 + lo < 0 or r0 + hi + h > ref.shape[0] or c0 + hi + w > ref.shape[1]:
        raise ValueError(
            f"search {lo}..{hi} around block at {block_origin} leaves the {ref.shape} frame"
        )
    window = ref[r0 + lo : r0 + hi + h, c0 + lo : c0 + hi + w]
    patches = sliding_window_view(window, (h, w))  # (S, S, h, w), indexed by shift
    s = hi - lo + 1
    atoms = patches.reshape(s * s, h * w).T.copy()
    atoms -= atoms.mean(axis=0)
    norms = np.linalg.norm(atoms, axis=0)
    deg = norms < FLAT_TOL
    atoms[:, ~deg] /= norms[~deg]
    atoms[:, deg] = 0.0
    prov = {"origin": (r0, c0), "block": (h, w), "search": (lo, hi)}
    return Dictionary(atoms, "shifted-block", "unit-l2", prov, deg)


def synthetic_frame_pair(h, w, global_shift=(0, 0), noise_sigma=0.0, rng: RngSpec = RngSpec(), margin=None):
    """Smoothed random texture and a translated, optionally noisy copy.

    The texture is a 5x5 moving average of an i.i.d. uniform field on
    [0, 255). ``target[i, j] == reference[i - dr, j - dc]`` wherever both
    sides are inside the frame (before noise).
    """
    dr, dc = global_shift
    pad = max(abs(dr), abs(dc)) if margin is None else margin
    if pad < max(abs(dr), abs(dc)):
        raise ValueError("margin smaller than the shift")
    gen = rng.generator()
    field_ = gen.uniform(0.0, 255.0, size=(h + 2 * pad + 4, w + 2 * pad + 4))
    tex = sliding_window_view(field_, (5, 5)).mean(axis=(-2, -1))
    reference = tex[pad : pad + h, pad : pad + w].copy()
    target = tex[pad - dr : pad - dr + h, pad - dc : pad - dc + w].copy()
    if noise_sigma > 0:
        target += noise_sigma * gen.standard_normal(target.shape)
    return reference, target


def write_pgm(path, frame, maxval=255, binary=False) -> None:
    img = np.clip(np.rint(np.asarray(frame, dtype=np.float64)), 0, maxval).astype(int)
    rows, cols = img.shape
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        header = f"P5\n{cols} {rows}\n{maxval}\n".encode()
        Path(path).write_bytes(header + img.astype(dtype).tobytes())
    else:
        lines = [f"P2\n{cols} {rows}\n{maxval}"]
        lines += [" ".join(str(v) for v in row) for row in img]
        Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    """Read a P2 (ASCII) or P5 (binary) PGM file into a float array."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    # header: magic, width, height, maxval, with '#' comments allowed
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos].decode("ascii"))
    magic, cols, rows, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P5":
        dtype = ">u2" if maxval > 255 else "u1"
        raw = np.frombuffer(data[pos + 1 :], dtype=dtype, count=rows * cols)
        return raw.reshape(rows, cols).astype(np.float64)
    if magic == "P2":
        vals = data[pos:].split()
        if len(vals) < rows * cols:
            raise ValueError(f"{path}: expected {rows * cols} pixels, found {len(vals)}")
        return np.array([int(v) for v in vals[: rows * cols]], dtype=np.float64).reshape(rows, cols)
    raise ValueError(f"{path}: unsupported PGM magic {magic!r}")
