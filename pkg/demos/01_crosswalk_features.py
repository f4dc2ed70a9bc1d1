"""Map census units onto zones and rebuild zone-level features.

A unit split across two zones contributes its counts pro rata; percentages
are recomputed from the prorated counts, and a zone with no residents is
left undefined.
"""

from __future__ import annotations

import pandas as pd

from odcompare.crosswalk import FeatureSchema, aggregate_features, load_crosswalk

# u2 straddles zones A and B; zone C (say, a park) has no units at all
registry = load_crosswalk(
    [("u1", "A", 1.0), ("u2", "A", 0.5), ("u2", "B", 0.5), ("u3", "B", 1.0)],
    zones=["A", "B", "C"],
)
units = pd.DataFrame(
    {
        "population": [1200, 3000, 800],
        "renters": [600, 2400, 100],
        "households": [500, 1100, 300],
        "income": [52000.0, 38000.0, 91000.0],
    },
    index=pd.Index(["u1", "u2", "u3"], name="unit_id"),
)
schema = FeatureSchema(
    population="population",
    ratios={"renterPercent": ("renters", "population")},
    levels={"medianIncome": "income"},
)

features = aggregate_features(registry, units, schema)
print("zone features:")
print(features.values.round(2))
print("\nundefined zones:", features.metadata["undefined_zones"])
print("approximations:", features.metadata["approximations"])
