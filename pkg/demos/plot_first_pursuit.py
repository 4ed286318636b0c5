"""
A first pursuit
===============

Plant a sparse signal in a Gaussian dictionary and recover it with both
greedy solvers.
"""

import numpy as np

from eomp import RngSpec, StopRule, eomp, gaussian_ensemble, k_sparse_gaussian_signal, omp_incremental, synthesize

# a 64 x 128 dictionary with unit-norm columns
rng = RngSpec(0)
phi = gaussian_ensemble(64, 128, rng.child("dictionary"))

# 6 nonzero Gaussian amplitudes at random positions
signal = k_sparse_gaussian_signal(128, 6, rng.child("signal"))
y = synthesize(phi, signal)
print("planted support:", sorted(signal.support))

# pursue until the residual is tiny, and refit x on the original atoms
stop = StopRule(epsilon=1e-5 * np.linalg.norm(y))
for name, solver in (("omp", omp_incremental), ("eomp", eomp)):
    res = solver(phi, y, stop, refit=True)
    err = np.abs(res.dense_x(phi.m) - signal.dense()).max()
    print(f"{name:5s} support {sorted(res.support)}  {res.termination}, max error {err:.1e}")

# the residual shrinks by z_t**2 in energy at every step
res = eomp(phi, y, stop)
print("residual norms:", np.array2string(res.residual_norms, precision=3))
