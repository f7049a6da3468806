"""
Weak labels from point annotations
==================================

A handful of clicks, one per nucleus, is all the supervision we have.
This script turns them into the three training targets used before any
boundary is known: a Gaussian detection heatmap, Voronoi labels and
k-means cluster labels.
"""

import numpy as np

from pointseg import IGNORE, PointSet, cluster_labels, gaussian_heatmap, voronoi_labels
from pointseg.gradcheck import random_disks

rng = np.random.default_rng(0)

###############################################################################
# A synthetic tile: dark purple nuclei on a pale background, plus noise.
inst = random_disks((96, 96), 9, (5, 9), rng)
image = np.full((96, 96, 3), 235.0)
image[inst > 0] = (95, 55, 140)
image = np.clip(image + rng.normal(0, 8, image.shape), 0, 255).astype(np.uint8)

# one click per nucleus, near but not exactly on the centre
clicks = [np.argwhere(inst == k).mean(axis=0) + rng.normal(0, 1, 2) for k in range(1, inst.max() + 1)]
points = PointSet(np.unique(np.rint(clicks).astype(int), axis=0))
print(f"{inst.max()} nuclei, {len(points)} clicks")

###############################################################################
# Detection target. Values near each click follow a Gaussian, a ring around
# it is explicit background, and far pixels are ignored (-1).
heat = gaussian_heatmap(points, 96, 96, sigma=4, r1=8, r2=15)
print("heatmap: foreground", int((heat > 0).sum()), "background", int((heat == 0).sum()),
      "ignored", int((heat == -1).sum()))

###############################################################################
# Voronoi labels mark the cell walls as background and a small disk at each
# click as foreground. Everything else stays unlabeled.
vor = voronoi_labels(points, 96, 96, fg_radius=2)
print("voronoi: foreground", int((vor > 0).sum()), "background", int((vor == 0).sum()),
      "ignored", int((vor == IGNORE).sum()))

###############################################################################
# Cluster labels group pixels by colour and distance to the nearest click.
clu = cluster_labels(image, points, dist_clip=20, seed=0)
fg = clu > 0
print("cluster: foreground", int(fg.sum()), "background", int((clu == 0).sum()),
      "ignored", int((clu == IGNORE).sum()))
print(f"cluster foreground covers {(fg & (inst > 0)).sum() / (inst > 0).sum():.1%} of true nuclei pixels,"
      f" precision {(fg & (inst > 0)).sum() / fg.sum():.1%}")
