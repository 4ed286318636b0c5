"""Greedy sparse recovery with OMP and eOMP, plus the benchmark harness."""
from .dictionaries import (
    Dictionary,
    RngSpec,
    SparseSignal,
    derive_seed,
    gaussian_ensemble,
    k_sparse_gaussian_signal,
    mutual_coherence,
    odct_dictionary,
    shifted_block_dictionary,
    synthesize,
    synthetic_frame_pair,
)
from .linalg import axpy, dot, least_squares, norm2
from .pursuit import (
    PursuitResult,
    StopRule,
    eomp,
    gram_schmidt_step,
    lemma1_check,
    omp_incremental,
    omp_ls_oracle,
    refit,
    select_max_correlation,
)

__version__ = "0.1.0"
