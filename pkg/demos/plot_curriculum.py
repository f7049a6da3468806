"""
Growing the label set with a detection curriculum
=================================================

When only some nuclei are clicked, a detector trained on those clicks
proposes more. Proposals are ranked by how hard they look: far from
known nuclei, large, and low confidence all count as hard. Early on many
easy proposals are admitted. The budget shrinks as the labelled set
grows.
"""

import numpy as np

from pointseg import PointSet, admission_count, candidates_from_heatmap, gaussian_heatmap, select_pseudo_labels
from pointseg.gradcheck import random_disks

rng = np.random.default_rng(3)
inst = random_disks((128, 128), 16, (5, 8), rng)
truth = PointSet(np.rint([np.argwhere(inst == k).mean(axis=0) for k in range(1, inst.max() + 1)]).astype(int))

# a third of the nuclei are annotated
known = PointSet(truth.coords[rng.permutation(len(truth))[: len(truth) // 3]])

###############################################################################
# Stand-in for a trained detector: the ideal heatmap with uneven confidence.
pred = np.clip(gaussian_heatmap(truth, 128, 128, 4, 8, 15), 0, 1)
pred *= rng.uniform(0.75, 1.0, pred.shape)

###############################################################################
# Three rounds. Each round rescans the same prediction against the grown set.
for rnd in range(3):
    cands = candidates_from_heatmap(pred, known, peak_threshold=0.65, k_neighbors=4)
    budget = admission_count(len(cands), len(known))
    new = select_pseudo_labels(cands, known, existing_radius=8.0, n_det=len(cands), n_gt=len(known))
    print(f"round {rnd}: {len(known)} labels, {len(cands)} detections, budget {budget}, admitted {len(new)}")
    if len(new) == 0:
        break
    known = known.merge(PointSet(new.coords))

print(f"final: {len(known)} of {len(truth)} nuclei labelled")
