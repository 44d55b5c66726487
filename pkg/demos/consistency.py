"""
Recovering a basic neighborhood as the sample grows
===================================================

A nine-site binary model made of three independent blocks. The centre site
sits in the block 4..6, so its true neighborhood is two sites to the right.
We sample increasingly large datasets and count how often the penalized
likelihood estimate lands on it.
"""

import numpy as np

from vrmrf import NeighborhoodParams
from vrmrf.simulation import consistency_experiment, random_block_model, true_neighborhoods

joint = random_block_model(0, 9, [(0, 3), (4, 6), (7, 8)], alphabet_size=2, concentration=1.0)
print("true neighborhoods:", true_neighborhoods(joint))

###############################################################################
# The estimator is scored on the centre site with a small penalty constant.
params = NeighborhoodParams(penalty_c=0.5, max_left=3, max_right=3)
rows, rates = consistency_experiment(joint, 4, [50, 200, 500, 5000], 50, params, seed=0)
for n, rate in rates.items():
    print(f"n={n:>5}  recovery={rate:.2f}")

###############################################################################
# Which mistakes does it make at the smallest size? Mostly too-small arms,
# since the penalty dominates when few contexts are observed.
small = [(r.l_hat, r.r_hat) for r in rows if r.n == 50]
values, counts = np.unique(np.array(small), axis=0, return_counts=True)
for (l, r), k in zip(values, counts):
    print(f"  (l, r)=({l}, {r}): {k}")
