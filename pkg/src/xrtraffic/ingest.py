"""Loading labeled packet traces from CSV exports.

A trace is stored column-wise (one numpy array per raw feature) because the
downstream feature extraction works on whole windows at a time.  Individual
packets are available as :class:`PacketRecord` views.
"""

from __future__ import annotations

import csv
import gzip
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import EmptyTrace, MissingColumn, NonMonotonicTime, ParseError

IAT_TOLERANCE = 1e-9


class Direction(str, Enum):
    DOWNLINK = "downlink"
    UPLINK = "uplink"


@dataclass(frozen=True)
class PacketRecord:
    timestamp: float
    length: int
    direction: Direction
    iat: float


@dataclass(frozen=True, eq=False)
class LabeledTrace:
    """An ordered packet trace carrying one service label.

    Construction does not validate; :func:`load_trace` does, and
    :func:`validate_trace` reports problems on any instance.
    """

    service_label: int
    service_name: str
    timestamp: np.ndarray
    length: np.ndarray
    downlink: np.ndarray
    iat: np.ndarray

    def __post_init__(self):
        for name, dtype in (("timestamp", np.float64), ("length", np.int64),
                            ("downlink", np.bool_), ("iat", np.float64)):
            arr = np.array(getattr(self, name), dtype=dtype, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.timestamp)
        if not (len(self.length) == len(self.downlink) == len(self.iat) == n):
            raise ValueError("trace columns must have equal length")

    @classmethod
    def from_arrays(cls, label, name, timestamp, length, downlink, iat=None):
        timestamp = np.asarray(timestamp, dtype=np.float64)
        if iat is None:
            iat = derive_iat(timestamp)
        return cls(int(label), str(name), timestamp, length, downlink, iat)

    def __len__(self):
        return len(self.timestamp)

    def __getitem__(self, j) -> PacketRecord:
        return PacketRecord(
            timestamp=float(self.timestamp[j]),
            length=int(self.length[j]),
            direction=Direction.DOWNLINK if self.downlink[j] else Direction.UPLINK,
            iat=float(self.iat[j]),
        )

    def __iter__(self) -> Iterator[PacketRecord]:
        for j in range(len(self)):
            yield self[j]

    @property
    def packets(self) -> list[PacketRecord]:
        return list(self)

    def slice(self, start: int, stop: int) -> "LabeledTrace":
        """Contiguous sub-trace; stored iats are kept as-is."""
        return LabeledTrace(
            self.service_label,
            self.service_name,
            self.timestamp[start:stop],
            self.length[start:stop],
            self.downlink[start:stop],
            self.iat[start:stop],
        )

    def equals(self, other: "LabeledTrace", atol: float = IAT_TOLERANCE) -> bool:
        return (
            self.service_label == other.service_label
            and len(self) == len(other)
            and np.array_equal(self.length, other.length)
            and np.array_equal(self.downlink, other.downlink)
            and np.allclose(self.timestamp, other.timestamp, rtol=0, atol=atol)
            and np.allclose(self.iat, other.iat, rtol=0, atol=atol)
        )


def derive_iat(timestamp) -> np.ndarray:
    ts = np.asarray(timestamp, dtype=np.float64)
    iat = np.zeros_like(ts)
    if len(ts) > 1:
        iat[1:] = np.diff(ts)
    return iat


DOWNLINK_KEYWORDS = ("downlink", "down", "dl", "rx", "in", "server->client")
UPLINK_KEYWORDS = ("uplink", "up", "ul", "tx", "out", "client->server")


@dataclass(frozen=True)
class ColumnMapping:
    """Maps CSV header names onto the four raw packet features.

    ``direction_mode`` selects how the direction is read:

    * ``"keyword"``: the ``direction`` column holds text such as
      ``downlink``/``uplink`` (case-insensitive, see the keyword tuples).
    * ``"sign"``: the sign of the ``length`` column encodes direction;
      negative lengths are uplink.
    * ``"ip"``: packets whose ``destination`` equals ``client_address`` are
      downlink, everything else is uplink.

    ``iat`` names an optional column; when it is absent from the file the
    inter-arrival times are derived from the timestamps.
    """

    timestamp: str = "time"
    length: str = "length"
    direction: str = "direction"
    iat: Optional[str] = "iat"
    direction_mode: str = "keyword"
    source: str = "source"
    destination: str = "destination"
    client_address: Optional[str] = None
    downlink_keywords: tuple = DOWNLINK_KEYWORDS
    uplink_keywords: tuple = UPLINK_KEYWORDS

    def __post_init__(self):
        if self.direction_mode not in ("keyword", "sign", "ip"):
            raise ValueError(f"unknown direction_mode {self.direction_mode!r}")
        if self.direction_mode == "ip" and not self.client_address:
            raise ValueError("direction_mode 'ip' needs client_address")

    @classmethod
    def wireshark(cls, client_address: str) -> "ColumnMapping":
        """Default Wireshark 'Export Packet Dissections as CSV' columns."""
        return cls(
            timestamp="Time",
            length="Length",
            iat=None,
            direction_mode="ip",
            source="Source",
            destination="Destination",
            client_address=client_address,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMapping":
        d = dict(d)
        for key in ("downlink_keywords", "uplink_keywords"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _open_text(path: Path, mode: str = "rt"):
    if path.suffix == ".gz":
        return gzip.open(path, mode, encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


def _required_columns(schema: ColumnMapping) -> list[str]:
    cols = [schema.timestamp, schema.length]
    if schema.direction_mode == "keyword":
        cols.append(schema.direction)
    elif schema.direction_mode == "ip":
        cols.append(schema.destination)
    return cols


def _parse_float(text, row, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"not a number: {text!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r}", row=row, column=column)
    return value


def _parse_length(text, row, column):
    value = _parse_float(text, row, column)
    if value != int(value):
        raise ParseError(f"length must be an integer: {text!r}", row=row, column=column)
    return int(value)


def load_trace(path, label: int, schema: Optional[ColumnMapping] = None,
               name: Optional[str] = None) -> LabeledTrace:
    """Read one labeled trace from a CSV (optionally gzip-compressed) file.

    Rows are numbered from 1 starting at the first data row; every error
    carries that row number.  Timestamps are rebased so the first packet
    sits at t = 0.
    """
    path = Path(path)
    schema = schema or ColumnMapping()
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTrace(f"{path}: no header row") from None
        header = [h.strip() for h in header]
        index = {h: i for i, h in enumerate(header)}
        for col in _required_columns(schema):
            if col not in index:
                raise MissingColumn(col, path)
        i_ts = index[schema.timestamp]
        i_len = index[schema.length]
        i_dir = index.get(schema.direction)
        i_dst = index.get(schema.destination)
        i_iat = index.get(schema.iat) if schema.iat else None
        dl_words = {w.lower() for w in schema.downlink_keywords}
        ul_words = {w.lower() for w in schema.uplink_keywords}

        ts, lengths, down, iats = [], [], [], []
        prev = None
        for row_no, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, found {len(row)}", row=row_no
                )
            t = _parse_float(row[i_ts], row_no, schema.timestamp)
            if t < 0:
                raise ParseError("negative timestamp", row=row_no, column=schema.timestamp)
            if prev is not None and t < prev:
                raise NonMonotonicTime(row_no, prev, t)
            prev = t
            n = _parse_length(row[i_len], row_no, schema.length)
            if schema.direction_mode == "sign":
                is_down = n > 0
                n = abs(n)
            elif schema.direction_mode == "ip":
                is_down = row[i_dst].strip() == schema.client_address
            else:
                word = row[i_dir].strip().lower()
                if word in dl_words:
                    is_down = True
                elif word in ul_words:
                    is_down = False
                else:
                    raise ParseError(
                        f"unrecognised direction {row[i_dir]!r}",
                        row=row_no, column=schema.direction,
                    )
            if n <= 0:
                raise ParseError("packet length must be positive", row=row_no,
                                 column=schema.length)
            ts.append(t)
            lengths.append(n)
            down.append(is_down)
            if i_iat is not None:
                iats.append(_parse_float(row[i_iat], row_no, schema.iat))

    if not ts:
        raise EmptyTrace(f"{path}: no packets")
    timestamp = np.array(ts, dtype=np.float64)
    if timestamp[0] != 0.0:
        timestamp = timestamp - timestamp[0]
    iat = np.array(iats, dtype=np.float64) if i_iat is not None else None
    if iat is not None:
        iat[0] = 0.0  # a sliced capture may carry the gap to a packet outside the file
        derived = derive_iat(timestamp)
        bad = np.flatnonzero(np.abs(iat - derived) > IAT_TOLERANCE)
        if len(bad):
            r = int(bad[0]) + 1
            raise ParseError(
                f"iat {iat[bad[0]]!r} disagrees with timestamp difference "
                f"{derived[bad[0]]!r}", row=r, column=schema.iat,
            )
    return LabeledTrace.from_arrays(
        label, name if name is not None else path.stem, timestamp,
        np.array(lengths, dtype=np.int64), np.array(down, dtype=bool), iat,
    )


def write_trace(trace: LabeledTrace, path) -> None:
    """Write a trace in the default column layout (time,length,direction,iat)."""
    path = Path(path)
    with _open_text(path, "wt") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "length", "direction", "iat"])
        for t, n, d, a in zip(trace.timestamp.tolist(), trace.length.tolist(),
                              trace.downlink.tolist(), trace.iat.tolist()):
            w.writerow([repr(t), n, "downlink" if d else "uplink", repr(a)])


@dataclass(frozen=True)
class Finding:
    kind: str  # "iat_mismatch" | "zero_length" | "duplicate_timestamp" | "non_monotonic"
    index: int
    detail: str

    @property
    def row(self) -> int:
        return self.index + 1


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    def __bool__(self):
        return bool(self.findings)

    def __len__(self):
        return len(self.findings)

    def of_kind(self, kind: str) -> list[Finding]:
        return [f for f in self.findings if f.kind == kind]


def validate_trace(trace: LabeledTrace) -> ValidationReport:
    """Report-only consistency check; never raises on bad data."""
    findings = []
    ts, iat = trace.timestamp, trace.iat
    expected = derive_iat(ts)
    for j in np.flatnonzero(np.abs(iat - expected) > IAT_TOLERANCE):
        findings.append(Finding("iat_mismatch", int(j),
                                f"stored {iat[j]!r}, timestamps give {expected[j]!r}"))
    for j in np.flatnonzero(trace.length <= 0):
        findings.append(Finding("zero_length", int(j), f"length {trace.length[j]}"))
    if len(ts) > 1:
        step = np.diff(ts)
        for j in np.flatnonzero(step == 0):
            findings.append(Finding("duplicate_timestamp", int(j) + 1, f"t={ts[j + 1]!r}"))
        for j in np.flatnonzero(step < 0):
            findings.append(Finding("non_monotonic", int(j) + 1,
                                    f"{ts[j]!r} -> {ts[j + 1]!r}"))
    findings.sort(key=lambda f: (f.index, f.kind))
    return ValidationReport(findings)

