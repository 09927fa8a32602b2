"""Legacy ASCII VTK export of the prism solid mesh."""

import os
import tempfile

import numpy as np

VTK_WEDGE = 13


def write_solid_vtk(path, solid, cell_data=None, point_data=None, title="shellmmc"):
    """Write the solid mesh as a legacy VTK unstructured grid.

    ``cell_data`` and ``point_data`` are dicts of name -> array; scalar
    arrays of length n_elements / n_nodes, or (n_nodes, 3) vectors for
    point data. The file is written atomically.
    """
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {solid.n_nodes} double",
    ]
    for p in solid.nodes:
        lines.append(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}")
    ne = solid.n_elements
    lines.append(f"CELLS {ne} {7 * ne}")
    for e in solid.elements:
        lines.append("6 " + " ".join(str(int(v)) for v in e))
    lines.append(f"CELL_TYPES {ne}")
    lines.extend([str(VTK_WEDGE)] * ne)

    if cell_data:
        lines.append(f"CELL_DATA {ne}")
        for name, arr in cell_data.items():
            arr = np.asarray(arr)
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{float(v)!r}" for v in arr)
    if point_data:
        lines.append(f"POINT_DATA {solid.n_nodes}")
        for name, arr in point_data.items():
            arr = np.asarray(arr)
            if arr.ndim == 2:
                lines.append(f"VECTORS {name} double")
                lines.extend(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}" for v in arr)
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{float(v)!r}" for v in arr)
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text):
    """Write text to ``path`` via a temp file + rename (no torn files)."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
