"""Stream trip records into a zone-by-zone flow table.

Writes a small taxi-style file with a few bad rows, ingests it with several
worker processes, and shows that the tally and the reject log do not depend
on the worker count.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from odcompare.crosswalk import load_crosswalk
from odcompare.ingest import DateWindow, ingest_od_trips

zones = [str(z) for z in range(1, 11)]
registry = load_crosswalk([(f"u{z}", z, 1.0) for z in zones])
window = DateWindow.parse("2021-01-01..2021-01-07")

rng = np.random.default_rng(0)
lines = ["pickup_datetime,PULocationID,DOLocationID"]
for _ in range(50_000):
    day = 1 + int(rng.integers(0, 8))  # day 8 falls outside the window
    lines.append(f"2021-01-{day:02d} 08:30:00,{rng.choice(zones)},{rng.choice(zones)}")
lines += ["not a date,1,2", "2021-01-02 09:00:00,1,264"]

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "trips.csv"
    path.write_text("\n".join(lines) + "\n")
    single = ingest_od_trips(path, registry, window, workers=1)
    multi = ingest_od_trips(path, registry, window, workers=4)

print(f"records {single.n_records}, accepted {single.n_accepted}, trips {single.total}")
print("rejects:", dict(single.rejected))
print("identical across 1 and 4 workers:", single.identical(multi))
print("busiest cell:", max(single.cells.items(), key=lambda kv: kv[1]))
