"""File formats: tensor container, point CSV files.

Tensor container
----------------
One ASCII header line of space-separated ``key=value`` fields, starting with
the magic word ``kdsketch``::

    kdsketch kind=standard version=1 encoding=binary p=2 J=15 Jbar=3,5 n=1000 standardized=1 shape=31,31

followed by ``prod(shape)`` values in C (mixed-radix) order: little-endian
float64 bytes when ``encoding=binary``, otherwise one full-precision decimal
per line.  The same container holds sketch tensors, factorized tensors and
transform matrices (``kind=transform``, ``shape=rows,cols``).

Point files
-----------
One point per line, coordinates comma-separated.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
MAGIC = "kdsketch"

__all__ = [
    "FORMAT_VERSION",
    "DataFileError",
    "write_container",
    "read_container",
    "read_points",
    "write_points",
    "atomic_write",
]


class DataFileError(ValueError):
    """Malformed input file; message carries file and line context."""


def atomic_write(path, data: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_container(header: dict, array: np.ndarray, encoding: str = "binary") -> bytes:
    if encoding not in ("binary", "csv"):
        raise ValueError(f"unknown encoding {encoding!r}")
    arr = np.ascontiguousarray(array, dtype="<f8")
    fields = {"kind": header.get("kind", "standard"), "version": FORMAT_VERSION, "encoding": encoding}
    fields.update({k: v for k, v in header.items() if k != "kind"})
    fields["shape"] = ",".join(str(s) for s in arr.shape)
    parts = [MAGIC]
    for k, v in fields.items():
        if isinstance(v, (tuple, list)):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = int(v)
        parts.append(f"{k}={v}")
    head = (" ".join(parts) + "\n").encode("ascii")
    if encoding == "binary":
        return head + arr.tobytes()
    body = "".join(f"{v!r}\n" for v in arr.ravel().tolist())
    return head + body.encode("ascii")


def write_container(path, header: dict, array: np.ndarray, encoding: str = "binary") -> None:
    atomic_write(path, encode_container(header, array, encoding))


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s != "")


def read_container(path) -> tuple[dict, np.ndarray]:
    """Return ``(header, array)``; numeric header fields are converted."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0 or not raw.startswith(MAGIC.encode()):
        raise DataFileError(f"{path}:1: not a kdsketch container")
    header: dict = {}
    for item in raw[:nl].decode("ascii").split()[1:]:
        k, _, v = item.partition("=")
        header[k] = v
    try:
        header["version"] = int(header["version"])
        shape = _int_tuple(header["shape"])
        for k in ("p", "J", "n", "standardized"):
            if k in header:
                header[k] = int(header[k])
        if "Jbar" in header:
            header["Jbar"] = _int_tuple(header["Jbar"])
    except (KeyError, ValueError) as exc:
        raise DataFileError(f"{path}:1: bad header ({exc})") from None
    if header["version"] != FORMAT_VERSION:
        raise DataFileError(f"{path}:1: unsupported format version {header['version']}")
    header["shape"] = shape
    size = int(np.prod(shape))
    body = raw[nl + 1:]
    if header.get("encoding") == "binary":
        if len(body) != 8 * size:
            raise DataFileError(f"{path}: payload has {len(body)} bytes, expected {8 * size}")
        arr = np.frombuffer(body, dtype="<f8").astype(float)
    else:
        lines = body.decode("ascii").split()
        if len(lines) != size:
            raise DataFileError(f"{path}: payload has {len(lines)} values, expected {size}")
        try:
            arr = np.array([float(v) for v in lines])
        except ValueError as exc:
            raise DataFileError(f"{path}: {exc}") from None
    return header, arr.reshape(shape)


def read_points(path, p: int | None = None) -> np.ndarray:
    """Parse a point CSV into an ``(n, p)`` float array.

    Blank lines are skipped.  Raises :class:`DataFileError` naming the first
    offending line.
    """
    rows = []
    width = p
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(v) for v in line.split(",")]
            except ValueError:
                raise DataFileError(f"{path}:{lineno}: cannot parse {line!r}") from None
            if width is None:
                width = len(row)
            if len(row) != width:
                raise DataFileError(f"{path}:{lineno}: expected {width} coordinates, got {len(row)}")
            if not all(np.isfinite(row)):
                raise DataFileError(f"{path}:{lineno}: non-finite coordinate")
            rows.append(row)
    if not rows:
        return np.empty((0, width or 0))
    return np.array(rows, dtype=float)


def write_points(path, points: np.ndarray) -> None:
    pts = np.asarray(points, dtype=float)
    text = "".join(",".join(repr(v) for v in row) + "\n" for row in pts.tolist())
    atomic_write(path, text.encode("ascii"))
