"""Point-cloud file formats: binary little-endian PLY and a plain text list."""

import numpy as np

from ._validation import check_cloud

_PLY_HEADER = (
    "ply\n"
    "format binary_little_endian 1.0\n"
    "element vertex {n}\n"
    "property float x\n"
    "property float y\n"
    "property float z\n"
    "end_header\n"
)


def write_ply(path, points):
    points = check_cloud(points, allow_empty=True)
    with open(path, "wb") as fh:
        fh.write(_PLY_HEADER.format(n=len(points)).encode("ascii"))
        fh.write(points.astype("<f4").tobytes())


def read_ply(path):
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise ValueError(f"{path}: not a PLY file")
    header = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise ValueError(f"{path}: only binary little-endian PLY is supported")
    props = [line.split()[-1] for line in header if line.startswith("property")]
    if props != ["x", "y", "z"]:
        raise ValueError(f"{path}: expected float x/y/z vertex properties, got {props}")
    counts = [int(line.split()[2]) for line in header if line.startswith("element vertex")]
    if len(counts) != 1:
        raise ValueError(f"{path}: missing vertex element")
    body = data[end + len(b"end_header\n"):]
    n = counts[0]
    if len(body) != n * 12:
        raise ValueError(f"{path}: expected {n * 12} bytes of vertex data, got {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(n, 3).astype(np.float64)


def format_text(points):
    """Text form: the point count, then one ``x y z`` line per point.

    Coordinates use the shortest repr that parses back to the same double.
    """
    points = check_cloud(points, allow_empty=True)
    lines = [str(len(points))]
    lines.extend(" ".join(repr(float(c)) for c in p) for p in points)
    return "\n".join(lines) + "\n"


def parse_text(text):
    lines = text.split("\n")
    try:
        n = int(lines[0])
        rows = [tuple(float(v) for v in line.split()) for line in lines[1 : n + 1]]
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed point-cloud text: {exc}") from None
    if len(rows) != n or any(len(r) != 3 for r in rows):
        raise ValueError(f"malformed point-cloud text: expected {n} rows of 3 values")
    return np.array(rows, dtype=np.float64).reshape(n, 3)


def write_text(path, points):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_text(points))


def read_text(path):
    with open(path, encoding="ascii") as fh:
        return parse_text(fh.read())
