"""Compare two datasets cell by cell with relative frequencies and LRFR.

Two hand-written cluster OD matrices: dataset "taxi" is concentrated in
C0 -> C0 trips, dataset "device" is spread more evenly. Cells where either
dataset saw no trips stay undefined unless smoothing is requested.
"""

from __future__ import annotations

import numpy as np

from odcompare.compare import ClusterODMatrix, compare_matrices, normalize_per_population

labels = ("C0", "C1", "C2")
taxi = ClusterODMatrix(labels, np.array([[900, 120, 40], [150, 300, 0], [60, 10, 80]]), "taxi")
device = ClusterODMatrix(labels, np.array([[400, 200, 150], [220, 500, 90], [130, 80, 300]]), "device")

report = compare_matrices(taxi, device)
np.set_printoptions(precision=3, suppress=True)
print("RF taxi:\n", report.rf_a.values)
print("RF device:\n", report.rf_b.values)
print("LRFR (positive: taxi over-represents the cell; -- undefined):\n", report.lrfr)

smoothed = compare_matrices(taxi, device, epsilon=1e-4)
print("LRFR with epsilon=1e-4:\n", smoothed.lrfr.data)

per_capita = normalize_per_population(taxi, {"C0": 50_000, "C1": 80_000, "C2": 30_000})
print("\ntaxi trips per resident:")
print(per_capita.to_frame().round(4))
