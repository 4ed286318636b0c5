"""
Which atom reduces the residual most?
=====================================

OMP picks the atom most correlated with the residual. eOMP first removes
the chosen directions from every remaining atom, so its pick is the one
that shrinks the residual the most. Here we check both claims by trying
every alternative.
"""

from eomp import RngSpec, gaussian_ensemble, lemma1_check
from eomp.pursuit import lemma1_violations

# small instances, 8 greedy steps each
hits = {"omp": 0, "eomp": 0}
for seed in range(50):
    phi = gaussian_ensemble(16, 32, RngSpec(seed))
    y = RngSpec(seed).child("y").generator().standard_normal(16)
    for algo in hits:
        hits[algo] += lemma1_check(phi, y, 8, algo=algo)

print(f"steps were all optimal in {hits['eomp']}/50 eOMP runs and {hits['omp']}/50 OMP runs")

# look at one OMP run in detail
phi = gaussian_ensemble(16, 32, RngSpec(0))
y = RngSpec(0).child("y").generator().standard_normal(16)
steps = lemma1_violations(phi, y, 8, algo="omp")
print(f"seed 0: OMP picked a suboptimal atom at step(s) {[t + 1 for t in steps]}")
