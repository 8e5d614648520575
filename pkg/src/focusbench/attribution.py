"""Bit-exact attribution-map file I/O and run validation.

``.foc1`` layout (little-endian throughout):

    offset  size  field
    0       4     magic "FOC1" (bytes 46 4F 43 31)
    4       4     u32 width
    8       4     u32 height
    12      4     u32 reserved, must be 0
    16      4*W*H float32 relevance, row-major, top row first

Total file size must equal 16 + 4*W*H bytes. Values must be finite.
Attribution files are named ``<mosaic_id>.foc1`` with ``/`` replaced by
``__`` in the id.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, MapFormatError

MAGIC = b"FOC1"
HEADER = struct.Struct("<4sIII")
HEADER_SIZE = HEADER.size  # 16


def sanitize_id(mosaic_id: str) -> str:
    return mosaic_id.replace("/", "__")


def map_filename(mosaic_id: str) -> str:
    return sanitize_id(mosaic_id) + ".foc1"


@dataclass
class AttributionMap:
    mosaic_id: str
    values: np.ndarray  # float32, shape (H, W)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise DataError(f"attribution map must be 2-D, got shape {self.values.shape}")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def write_map(amap: AttributionMap, path: Path | str) -> None:
    values = amap.values
    if not np.isfinite(values).all():
        raise MapFormatError(MapFormatError.NON_FINITE, "refusing to write non-finite relevance")
    h, w = values.shape
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, w, h, 0))
        fh.write(payload)


def read_map(path: Path | str, mosaic_id: str | None = None) -> AttributionMap:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < HEADER_SIZE:
        raise MapFormatError(MapFormatError.TRUNCATED, f"{path}: file shorter than header")
    magic, w, h, reserved = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MapFormatError(MapFormatError.BAD_MAGIC, f"{path}: bad magic {magic!r}")
    if reserved != 0:
        raise MapFormatError(
            MapFormatError.RESERVED_NONZERO, f"{path}: reserved field is {reserved}, must be 0"
        )
    expected = HEADER_SIZE + 4 * w * h
    if len(data) < expected:
        raise MapFormatError(
            MapFormatError.TRUNCATED,
            f"{path}: truncated payload, header claims {w}x{h} "
            f"({expected} bytes) but file has {len(data)}",
        )
    if len(data) > expected:
        raise MapFormatError(
            MapFormatError.SIZE_MISMATCH,
            f"{path}: size mismatch with header, expected {expected} bytes, got {len(data)}",
        )
    values = np.frombuffer(data, dtype="<f4", offset=HEADER_SIZE).reshape(h, w).copy()
    if not np.isfinite(values).all():
        raise MapFormatError(MapFormatError.NON_FINITE, f"{path}: non-finite relevance values")
    return AttributionMap(mosaic_id if mosaic_id is not None else path.stem, values)


@dataclass
class ValidationEntry:
    mosaic_id: str
    status: str  # "ok" | "missing" | "corrupt" | "dimension-mismatch"
    detail: str = ""


@dataclass
class ValidationReport:
    entries: list[ValidationEntry] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return all(e.status == "ok" for e in self.entries)

    def by_status(self, status: str) -> list[ValidationEntry]:
        return [e for e in self.entries if e.status == status]

    def summary(self) -> str:
        counts: dict[str, int] = {}
        for e in self.entries:
            counts[e.status] = counts.get(e.status, 0) + 1
        parts = [f"{counts.get(s, 0)} {s}" for s in ("ok", "missing", "corrupt", "dimension-mismatch")]
        state = "complete" if self.complete else "incomplete"
        return f"{state} ({', '.join(parts)})"

    def problems(self) -> list[ValidationEntry]:
        return [e for e in self.entries if e.status != "ok"]

    def to_dict(self) -> dict:
        return {
            "complete": self.complete,
            "entries": [
                {"mosaic_id": e.mosaic_id, "status": e.status, "detail": e.detail}
                for e in self.entries
            ],
        }


def validate_run(manifest, attribution_dir: Path | str) -> ValidationReport:
    """Check one attribution file per manifest mosaic: presence, parse, dimensions."""
    attribution_dir = Path(attribution_dir)
    report = ValidationReport()
    for entry in manifest.mosaics:
        mosaic_id = entry.spec.mosaic_id
        path = attribution_dir / map_filename(mosaic_id)
        if not path.is_file():
            report.entries.append(ValidationEntry(mosaic_id, "missing", str(path)))
            continue
        try:
            amap = read_map(path, mosaic_id)
        except MapFormatError as exc:
            report.entries.append(ValidationEntry(mosaic_id, "corrupt", f"{exc.code}: {exc}"))
            continue
        if amap.width != manifest.width or amap.height != manifest.height:
            report.entries.append(
                ValidationEntry(
                    mosaic_id,
                    "dimension-mismatch",
                    f"map is {amap.width}x{amap.height}, mosaic is "
                    f"{manifest.width}x{manifest.height}",
                )
            )
            continue
        report.entries.append(ValidationEntry(mosaic_id, "ok"))
    return report
