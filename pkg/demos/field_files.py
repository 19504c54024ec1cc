"""
Field files and the command line
================================

Every field is a ScalarField on a PhaseGrid. HGRD files store it losslessly
with a validity bitmap and a checksum; CSV is for quick inspection. The
``husimiflow`` command writes the same files, for example::

    husimiflow preset fig1 --grid-points 101 --out out/fig1
    husimiflow compare --config run.json --threads 4
"""

import tempfile
from pathlib import Path

import numpy as np

from husimiflow import PhaseGrid, ScalarField, fields_identical, read_field, write_csv, write_field
from husimiflow.states import displaced_fock_husimi

grid = PhaseGrid.square(5.0, 41)
values = displaced_fock_husimi(1, 1 + 1j, grid.z())
valid = np.abs(grid.z()) < 3.0
field = ScalarField(grid, values, valid, kind="husimi_quantum", time=0.0, meta={"note": "demo"})

with tempfile.TemporaryDirectory() as tmp:
    path = write_field(field, Path(tmp) / "ring.hgrd")
    back = read_field(path)
    print("bytes on disk:", path.stat().st_size)
    print("bitwise round trip:", fields_identical(back, field))
    print("invalid cells stored as NaN:", int(np.isnan(back.values).sum()))
    csv_path = write_csv(field, Path(tmp) / "ring.csv")
    print(csv_path.read_text().splitlines()[:3])
