"""
Coding video blocks with a shifted-block dictionary
===================================================

Each 8x8 block of a target frame is approximated by blocks of the
reference frame shifted by up to 7 pixels. Tighter thresholds cost more
atoms and buy more PSNR.
"""

from eomp import RngSpec, synthetic_frame_pair
from eomp.experiments import default_eps_grid, psnr_vs_k_experiment

ref, tgt = synthetic_frame_pair(64, 64, (2, -3), 2.0, RngSpec(0))
res = psnr_vs_k_experiment(ref, tgt, (8, 8), (-7, 7), default_eps_grid(8))
print(f"{res.meta['blocks']} blocks, 15 x 15 = 225 candidate shifts per block")
for eps in res.params():
    o, e = res.row(eps, "omp"), res.row(eps, "eomp")
    print(f"eps {eps:.1e}: omp K={o.mean_recovered_k:5.2f} ({o.mean_psnr:5.1f} dB)  "
          f"eomp K={e.mean_recovered_k:5.2f} ({e.mean_psnr:5.1f} dB)")

# without noise, one shifted block explains each target block exactly
ref, tgt = synthetic_frame_pair(64, 64, (2, -3), 0.0, RngSpec(0))
clean = psnr_vs_k_experiment(ref, tgt, (8, 8), (-7, 7), [1e-5])
print("noise-free K:", clean.row(1e-5, "eomp").mean_recovered_k)
