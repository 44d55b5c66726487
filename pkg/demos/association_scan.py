"""
Testing windows for association
===============================

Plant a phenotype on one window and scan every window with a configuration
by phenotype chi-square test. The planted window should stand out while the
remaining p-values look uniform.
"""

import numpy as np

from vrmrf import NeighborhoodParams, associate_all, estimate_all, influence_windows
from vrmrf.ingest import Phenotype
from vrmrf.simulation import planted_phenotype, simulate_genome

matrix, _ = simulate_genome(2000, 2000, seed=8, concentration=5.0, with_truth=False)
windows = influence_windows(estimate_all(matrix, NeighborhoodParams(1.0, 3, 3)),
                            matrix.chromosomes)
target = next(w for w in windows[len(windows) // 2:] if w.n_sites >= 2)
print(f"{len(windows)} windows; planting on window {target.window_id} "
      f"(sites {target.start_site}..{target.end_site})")

labels = planted_phenotype(matrix, target.start_site, target.end_site, seed=1, accuracy=0.8)
results, significant = associate_all(matrix, windows, Phenotype(labels))

###############################################################################
# The top of the list.
for r in significant[:5]:
    print(f"window {r.window_id:>4}  chi2={r.chi2:9.2f}  df={r.df:>3}  -log10 p={r.score:7.2f}")

###############################################################################
# Away from the planted window the p-values should be roughly uniform.
p = np.array([r.p_value for r in results if r.window_id != target.window_id])
print("deciles:", np.round(np.quantile(p, np.linspace(0.1, 0.9, 9)), 2))
