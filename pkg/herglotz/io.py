"""Artifacts on disk.

Field solutions are written as long-format CSV (t, x, u, z^t, z^x) or as a binary dump:

    header  "<4sII6dBB": magic b"HGZ1", nt, nx, t0, t1, x0, x1, dt, dx, periodic-in-x flag,
            u-increment flag
    body    u, z^t, z^x as row-major little-endian float64 (nt x nx each), then the u increment
            (nt values) when flagged

Every file is written to a temporary sibling first and moved into place.
"""
import csv
import hashlib
import io
import json
import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel

from herglotz.config import ExprConfig
from herglotz.errors import GridError
from herglotz.grid import FieldSolution, Grid2D, Provenance

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

FIELD_HEADER = ["t", "x", "u", "z^t", "z^x"]
REPORT_HEADER = ["quantity", "value", "bound", "verdict"]
_MAGIC = b"HGZ1"
_BINARY_HEADER = struct.Struct("<4sII6dBB")
_FLOAT = np.dtype("<f8")


def atomic_write(path: PathLike, data: Union[str, bytes]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode() if isinstance(data, str) else data
    descriptor, temporary = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(descriptor, "wb") as handle:
            handle.write(payload)
        os.replace(temporary, target)
    except BaseException:
        Path(temporary).unlink(missing_ok=True)
        raise
    logger.debug("wrote %s (%d bytes)", target, len(payload))
    return target


def _format(value: float) -> str:
    return format(float(value), ".17g")


def table_text(header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([_format(value) for value in row] for row in rows)
    return buffer.getvalue()


def write_table(path: PathLike, header: Sequence[str], table: np.ndarray) -> Path:
    return atomic_write(path, table_text(header, table))


def write_json(path: PathLike, document: Any) -> Path:
    return atomic_write(path, json.dumps(document, indent=2, sort_keys=True) + "\n")


def write_report_csv(path: PathLike, rows: Iterable[Tuple[str, float, Optional[float], str]]) -> Path:
    """One row per checked quantity; rows without a bound leave `bound` and `verdict` empty."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for name, value, bound, verdict in rows:
        writer.writerow([name, _format(value), "" if bound is None else _format(bound), verdict])
    return atomic_write(path, buffer.getvalue())


def write_field_csv(path: PathLike, solution: FieldSolution) -> Path:
    t, x = solution.grid.mesh()
    columns = [t, x, solution.u, solution.z_t, solution.z_x]
    return write_table(path, FIELD_HEADER, np.column_stack([column.ravel() for column in columns]))


def field_bytes(solution: FieldSolution) -> bytes:
    grid = solution.grid
    header = _BINARY_HEADER.pack(
        _MAGIC,
        grid.nt,
        grid.nx,
        *grid.t_range,
        *grid.x_range,
        grid.dt,
        grid.dx,
        int(grid.periodic(1)),
        int(solution.u_increment is not None),
    )
    arrays = [solution.u, solution.z_t, solution.z_x]
    if solution.u_increment is not None:
        arrays.append(solution.u_increment)
    return header + b"".join(np.ascontiguousarray(array, dtype=_FLOAT).tobytes() for array in arrays)


def write_field_bin(path: PathLike, solution: FieldSolution) -> Path:
    return atomic_write(path, field_bytes(solution))


def read_field_bin(path: PathLike) -> FieldSolution:
    payload = Path(path).read_bytes()
    if len(payload) < _BINARY_HEADER.size:
        raise GridError(f"{path} is too short for a field dump")
    magic, nt, nx, t0, t1, x0, x1, _, _, periodic, has_increment = _BINARY_HEADER.unpack_from(payload)
    if magic != _MAGIC:
        raise GridError(f"{path} is not a field dump (magic {magic!r})")
    grid = Grid2D.uniform((t0, t1), (x0, x1), nt, nx, periodic_x=bool(periodic))
    count = nt * nx
    expected = 3 * count + (nt if has_increment else 0)
    body = np.frombuffer(payload, dtype=_FLOAT, offset=_BINARY_HEADER.size)
    if body.size != expected:
        raise GridError(f"{path} holds {body.size} values, the header announces {expected}")
    u, z_t, z_x = (body[i * count : (i + 1) * count].reshape(nt, nx).copy() for i in range(3))
    increment = body[3 * count :].copy() if has_increment else None
    return FieldSolution(grid=grid, u=u, z_t=z_t, z_x=z_x, provenance=Provenance.SOLVED, u_increment=increment)


def read_field_csv(path: PathLike, *, periodic_x: bool = False) -> FieldSolution:
    """Inverse of `write_field_csv`; the u increment of periodic KdV runs only survives the binary dump."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != FIELD_HEADER:
            raise GridError(f"{path} does not start with the header {','.join(FIELD_HEADER)}")
        table = np.array([[float(value) for value in row] for row in reader])
    t = np.unique(table[:, 0])
    x = np.unique(table[:, 1])
    nt, nx = t.size, x.size
    if table.shape[0] != nt * nx:
        raise GridError(f"{path} has {table.shape[0]} rows, not a full {nt}x{nx} grid")
    x_stop = x[-1] + (x[1] - x[0]) if periodic_x else x[-1]
    grid = Grid2D.uniform((t[0], t[-1]), (x[0], x_stop), nt, nx, periodic_x=periodic_x)
    u, z_t, z_x = (table[:, column].reshape(nt, nx) for column in (2, 3, 4))
    return FieldSolution(grid=grid, u=u, z_t=z_t, z_x=z_x, provenance=Provenance.SOLVED)


def read_field(path: PathLike, *, periodic_x: bool = False) -> FieldSolution:
    if Path(path).suffix == ".bin":
        return read_field_bin(path)
    return read_field_csv(path, periodic_x=periodic_x)


def sha256_of(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


class RunManifest(BaseModel):
    """Everything needed to rerun a command; only `created` and `wall_clock` vary between reruns."""

    input_sha256: str
    subcommand: str
    options: Dict[str, Any]
    version: str
    outputs: List[str]
    wall_clock: float
    created: Optional[str] = None

    Config = ExprConfig

    def write(self, directory: PathLike) -> Path:
        return atomic_write(Path(directory) / "manifest.json", self.json(indent=2, sort_keys=True) + "\n")
