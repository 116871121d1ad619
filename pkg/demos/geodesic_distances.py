"""
Longitude/latitude rasters and distances in metres
==================================================

With the geodesic metric, node coordinates and raster cells are in degrees
while distances are great-circle metres. Circles are traced with the
spherical destination formula, so every evaluation point is exactly d metres
from its node.
"""

import numpy as np

from spatialamr import GEODESIC, Complete, InterventionSet, RasterGrid, estimate_amr, sample_circle

###############################################################################
# A quarter of a great circle is pi * R / 2.

print(f"equator to pole: {GEODESIC((0.0, 0.0), (0.0, 90.0)):.3f} m")

###############################################################################
# A 2 km circle near the equator, sampled at eight points (east first, then
# counterclockwise).

circle = sample_circle((32.5, 0.3), 2000.0, 8, GEODESIC)
print(np.round(circle.points, 5))
print("distances:", np.round([GEODESIC(circle.center, p) for p in circle.points], 6))

###############################################################################
# A synthetic 0.005-degree raster where outcomes rise near treated villages.

rng = np.random.default_rng(11)
grid0 = RasterGrid((32.0, 0.0), 0.005, np.zeros((200, 200)))
villages = rng.uniform([32.2, 0.2], [32.8, 0.8], (30, 2))
z = np.zeros(30, dtype=int)
z[:15] = 1
dist = GEODESIC.pairwise(villages, grid0.cell_centers())
values = rng.normal(size=40000) + (np.exp(-dist / 3000.0) * z[:, None]).sum(axis=0)
grid = grid0.with_values(values.reshape(200, 200))

iv = InterventionSet(villages, z, Complete(15))
curve = estimate_amr(iv, grid, [1000, 2000, 4000, 8000], metric=GEODESIC)
print("numpts per distance:", curve.metadata["numpts"])
print("AMR estimates:", np.round(curve.amr_est, 3))
