"""Phase-space grids, sampled fields, quadrature and the HGRD file format.

HGRD layout (all integers little-endian)::

    b"HGRD" | version byte (1)
    uint32 metadata length | UTF-8 metadata, space separated key=value pairs
    nq * np float64 values, row-major with q varying fastest (NaN if invalid)
    validity bitmap, one bit per cell (little bit order), padded to a byte
    uint32 CRC32 of everything between the version byte and the checksum
"""

from __future__ import annotations

import csv
import math
import os
import struct
import tempfile
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AllInvalidError,
    ChecksumMismatchError,
    DimensionOverflowError,
    MalformedHeaderError,
    UnsupportedVersionError,
)
from .hamiltonian import SQRT_HALF

__all__ = [
    "PhaseGrid",
    "ScalarField",
    "FIELD_KINDS",
    "renormalize_max",
    "integrate_field",
    "write_field",
    "read_field",
    "write_csv",
    "read_csv",
    "fields_identical",
]

MAGIC = b"HGRD"
VERSION = 1
MAX_CELLS = 1 << 31
FIELD_KINDS = ("husimi_classical", "husimi_quantum", "norm_landscape", "log_norm_landscape")
_RESERVED = ("nq", "np", "q_min", "q_max", "p_min", "p_max", "kind", "time")


@dataclass(frozen=True)
class PhaseGrid:
    """Rectangular lattice of ``n_q * n_p`` points including both endpoints."""

    q_min: float = -7.0
    q_max: float = 7.0
    p_min: float = -7.0
    p_max: float = 7.0
    n_q: int = 201
    n_p: int = 201

    def __post_init__(self):
        if not (self.q_min < self.q_max and self.p_min < self.p_max):
            raise ValueError("grid bounds must satisfy min < max")
        if self.n_q < 2 or self.n_p < 2:
            raise ValueError("grid needs at least two points per axis")
        if self.n_q * self.n_p > MAX_CELLS:
            raise ValueError("grid too large")

    @classmethod
    def square(cls, half_width: float, points: int) -> "PhaseGrid":
        return cls(-half_width, half_width, -half_width, half_width, points, points)

    @property
    def size(self) -> int:
        return self.n_q * self.n_p

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of the 2-D view: ``(n_p, n_q)``, rows indexed by p."""
        return (self.n_p, self.n_q)

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / (self.n_q - 1)

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / (self.n_p - 1)

    @property
    def q_axis(self) -> np.ndarray:
        return self.q_min + np.arange(self.n_q) * self.dq

    @property
    def p_axis(self) -> np.ndarray:
        return self.p_min + np.arange(self.n_p) * self.dp

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened ``q`` and ``p`` for every cell, q varying fastest."""
        Q, P = np.meshgrid(self.q_axis, self.p_axis)
        return Q.ravel(), P.ravel()

    def z(self) -> np.ndarray:
        q, p = self.coords()
        return (q + 1j * p) * SQRT_HALF

    def point(self, i: int, j: int) -> tuple[float, float]:
        return self.q_min + i * self.dq, self.p_min + j * self.dp

    def index_of(self, q: float, p: float) -> tuple[int, int]:
        i = int(round((q - self.q_min) / self.dq))
        j = int(round((p - self.p_min) / self.dp))
        if not (0 <= i < self.n_q and 0 <= j < self.n_p):
            raise IndexError(f"({q}, {p}) outside the grid")
        return i, j

    def flat_index(self, i: int, j: int) -> int:
        return j * self.n_q + i


@dataclass(eq=False)
class ScalarField:
    """Real field sampled on a PhaseGrid with a per-cell validity mask."""

    grid: PhaseGrid
    values: np.ndarray
    valid: np.ndarray | None = None
    kind: str = "husimi_classical"
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {values.size}")
        if self.valid is None:
            valid = np.isfinite(values)
        else:
            valid = np.array(self.valid, dtype=bool).ravel()
            if valid.size != values.size:
                raise ValueError("validity mask has the wrong size")
        if not np.all(np.isfinite(values[valid])):
            raise ValueError("valid cells must hold finite values")
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        values[~valid] = np.nan
        self.values = values
        self.valid = valid
        self.time = float(self.time)
        self.meta = {str(k): str(v) for k, v in self.meta.items()}

    def as_2d(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def max(self) -> float:
        return float(np.max(self.values[self.valid])) if self.valid.any() else math.nan

    def argmax_point(self) -> tuple[float, float]:
        """Phase-space location of the largest valid value."""
        idx = np.where(self.valid, self.values, -np.inf).argmax()
        j, i = divmod(int(idx), self.grid.n_q)
        return self.grid.point(i, j)

    def copy_with(self, values, **kw) -> "ScalarField":
        args = dict(grid=self.grid, values=values, valid=self.valid.copy(),
                    kind=self.kind, time=self.time, meta=dict(self.meta))
        args.update(kw)
        return ScalarField(**args)


def fields_identical(a: ScalarField, b: ScalarField) -> bool:
    """Bitwise equality of grid, values, mask and metadata."""
    return (
        a.grid == b.grid
        and a.kind == b.kind
        and struct.pack("<d", a.time) == struct.pack("<d", b.time)
        and a.meta == b.meta
        and np.array_equal(a.valid, b.valid)
        and a.values.tobytes() == b.values.tobytes()
    )


def renormalize_max(f: ScalarField) -> ScalarField:
    """Divide by the largest valid value; the divisor is kept in ``meta``."""
    vals = f.values[f.valid]
    if vals.size == 0 or not np.any(vals > 0):
        raise AllInvalidError("field has no valid positive value")
    top = float(vals.max())
    meta = dict(f.meta)
    meta["renorm_divisor"] = repr(float(meta.get("renorm_divisor", 1.0)) * top)
    with np.errstate(over="raise"):
        try:
            scaled = f.values / top
        except FloatingPointError:
            raise ValueError(f"dividing by the maximum {top:g} overflows") from None
    return f.copy_with(scaled, meta=meta)


def integrate_field(f: ScalarField) -> float:
    """Trapezoid integral with measure ``dq dp / (2 pi)``.

    Invalid cells count as zero and trigger a warning.
    """
    if not f.valid.all():
        warnings.warn(
            f"{int((~f.valid).sum())} invalid cells treated as zero", RuntimeWarning
        )
    vals = np.where(f.valid, f.values, 0.0).reshape(f.grid.shape)
    inner = np.trapezoid(vals, dx=f.grid.dq, axis=1)
    return float(np.trapezoid(inner, dx=f.grid.dp)) / (2.0 * math.pi)


# -- HGRD ------------------------------------------------------------------


def _encode_meta(f: ScalarField) -> bytes:
    g = f.grid
    pairs = [
        ("nq", str(g.n_q)), ("np", str(g.n_p)),
        ("q_min", repr(float(g.q_min))), ("q_max", repr(float(g.q_max))),
        ("p_min", repr(float(g.p_min))), ("p_max", repr(float(g.p_max))),
        ("kind", f.kind), ("time", repr(f.time)),
    ]
    for k in sorted(f.meta):
        if k in _RESERVED:
            raise ValueError(f"metadata key {k!r} is reserved")
        pairs.append((k, f.meta[k]))
    for k, v in pairs:
        if not k or any(c.isspace() or c == "=" for c in k) or any(c.isspace() for c in v):
            raise ValueError(f"metadata entry {k}={v!r} contains whitespace or '='")
    return " ".join(f"{k}={v}" for k, v in pairs).encode("utf-8")


def _encode(f: ScalarField) -> bytes:
    meta = _encode_meta(f)
    body = b"".join([
        struct.pack("<I", len(meta)),
        meta,
        f.values.astype("<f8").tobytes(),
        np.packbits(f.valid, bitorder="little").tobytes(),
    ])
    return MAGIC + bytes([VERSION]) + body + struct.pack("<I", zlib.crc32(body))


def write_field(f: ScalarField, path) -> Path:
    """Write ``f`` as HGRD atomically (temp file + rename)."""
    path = Path(path)
    data = _encode(f)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_field(path) -> ScalarField:
    data = Path(path).read_bytes()
    if len(data) < 5 or data[:4] != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic")
    if data[4] != VERSION:
        raise UnsupportedVersionError(f"{path}: HGRD version {data[4]} not supported")
    if len(data) < 9:
        raise MalformedHeaderError(f"{path}: truncated header")
    (meta_len,) = struct.unpack_from("<I", data, 5)
    meta_end = 9 + meta_len
    if meta_end > len(data) - 4:
        raise MalformedHeaderError(f"{path}: metadata length exceeds file size")
    try:
        text = data[9:meta_end].decode("utf-8")
        meta = dict(item.split("=", 1) for item in text.split(" "))
        n_q, n_p = int(meta.pop("nq")), int(meta.pop("np"))
        bounds = [float(meta.pop(k)) for k in ("q_min", "q_max", "p_min", "p_max")]
        kind = meta.pop("kind")
        time = float(meta.pop("time"))
    except (UnicodeDecodeError, ValueError, KeyError) as exc:
        raise MalformedHeaderError(f"{path}: unreadable metadata ({exc})") from None
    if n_q < 2 or n_p < 2:
        raise MalformedHeaderError(f"{path}: invalid dimensions {n_q}x{n_p}")
    cells = n_q * n_p
    if cells > MAX_CELLS:
        raise DimensionOverflowError(f"{path}: {n_q}x{n_p} exceeds the cell limit")
    n_bitmap = (cells + 7) // 8
    expected = meta_end + 8 * cells + n_bitmap + 4
    if expected != len(data):
        raise DimensionOverflowError(
            f"{path}: header declares {cells} cells but file holds {len(data)} bytes"
        )
    body = data[5:-4]
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(body) != crc:
        raise ChecksumMismatchError(f"{path}: CRC32 mismatch")
    values = np.frombuffer(data, dtype="<f8", count=cells, offset=meta_end).astype(np.float64)
    bits = np.frombuffer(data, dtype=np.uint8, count=n_bitmap, offset=meta_end + 8 * cells)
    valid = np.unpackbits(bits, count=cells, bitorder="little").astype(bool)
    try:
        grid = PhaseGrid(*bounds, n_q, n_p)
        return ScalarField(grid, values, valid, kind=kind, time=time, meta=meta)
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: {exc}") from None


# -- CSV -------------------------------------------------------------------


def write_csv(f: ScalarField, path) -> Path:
    """Columns ``q, p, value, valid`` with 17 significant digits."""
    path = Path(path)
    q, p = f.grid.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "p", "value", "valid"])
        for qi, pi, v, ok in zip(q, p, f.values, f.valid):
            w.writerow([f"{qi:.17g}", f"{pi:.17g}", f"{v:.17g}", int(ok)])
    return path


def read_csv(path, grid: PhaseGrid, kind: str = "husimi_classical", time: float = 0.0) -> ScalarField:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != grid.size:
        raise ValueError(f"{path}: {len(rows)} rows for a grid of {grid.size} cells")
    values = np.array([float(r["value"]) for r in rows])
    valid = np.array([r["valid"] == "1" for r in rows])
    return ScalarField(grid, values, valid, kind=kind, time=time)
