"""ASCII legacy-VTK output of cell data on the structured unit-square grid."""


def write_cell_scalars(path, n, name, values, title="dglod field"):
    """Write one scalar per cell of an n x n grid as a STRUCTURED_POINTS file.

    Values are ordered row-major with the bottom row first, matching the
    element numbering of MeshLevel.
    """
    values = list(values)
    if len(values) != n * n:
        raise ValueError("expected %d cell values, got %d" % (n * n, len(values)))
    h = 1.0 / n
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("%s\n" % title)
        fh.write("ASCII\n")
        fh.write("DATASET STRUCTURED_POINTS\n")
        fh.write("DIMENSIONS %d %d 1\n" % (n + 1, n + 1))
        fh.write("ORIGIN 0 0 0\n")
        fh.write("SPACING %.17g %.17g 1\n" % (h, h))
        fh.write("CELL_DATA %d\n" % (n * n))
        fh.write("SCALARS %s double 1\n" % name)
        fh.write("LOOKUP_TABLE default\n")
        for v in values:
            fh.write("%.12e\n" % float(v))
