"""
What the extra orthonormalization costs
=======================================

The multiplication-count model predicts eOMP at roughly five times the
work of OMP per run when the dictionary is much larger than the number
of iterations. A short timing run shows what that means in practice.
"""

from eomp import RngSpec
from eomp.experiments import complexity_model, runtime_benchmark

for s in (1, 10, 60):
    omp, eo, ratio = complexity_model(128, 256, s)
    print(f"s={s:3d}: omp {omp:9d}  eomp {eo:9d}  ratio {ratio:.2f}")

res = runtime_benchmark(128, 2, [10, 40], 10, RngSpec(0), algos=("omp", "eomp"))
for k in res.params():
    print(f"k={k}: total eomp/omp time ratio {res.ratio(k):.2f}, "
          f"mean iterations omp {res.row(k, 'omp').mean_recovered_k:.1f} "
          f"eomp {res.row(k, 'eomp').mean_recovered_k:.1f}")
