"""Segment -> 13-feature statistical vector."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import fia
from .errors import EmptySegment
from .fia import FiaConfig, FiaThresholds
from .ingest import LabeledTrace
from .segmenter import Segment, segment

FEATURE_SET_VERSION = 1

FEATURE_NAMES = (
    "length_mean",
    "length_std",
    "length_min",
    "length_max",
    "iat_mean",
    "iat_std",
    "iat_max",
    "downlink_fraction",
    "total_bytes",
    "duration",
    "frame_count",
    "avg_frame_iat",
    "total_frame_duration",
)
N_FEATURES = len(FEATURE_NAMES)
FRAME_FEATURES = (10, 11, 12)


@dataclass(frozen=True, eq=False)
class FrameVector:
    features: np.ndarray
    label: int
    segment_index: int

    def __post_init__(self):
        arr = np.array(self.features, dtype=np.float64, copy=True)
        if arr.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} features, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "features", arr)

    def __getitem__(self, name: str) -> float:
        return float(self.features[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, self.features.tolist()))


def raw_statistics(seg: Segment) -> np.ndarray:
    length = seg.length.astype(np.float64)
    iat = seg.iat
    ts = seg.timestamp
    return np.array([
        length.mean(),
        length.std(),
        length.min(),
        length.max(),
        iat.mean(),
        iat.std(),
        iat.max(),
        np.count_nonzero(seg.downlink) / len(seg),
        length.sum(),
        ts[-1] - ts[0],
    ])


def vectorize(seg: Segment, fia_config: Optional[FiaConfig] = None,
              thresholds: Optional[FiaThresholds] = None) -> FrameVector:
    """Features 1-10 from the raw packets, 11-13 from the frames found in them."""
    if len(seg) == 0:
        raise EmptySegment("cannot vectorize an empty segment")
    frames = fia.detect(seg, fia_config, thresholds)
    features = np.concatenate((
        raw_statistics(seg),
        [frames.count, frames.avg_frame_iat, frames.total_duration],
    ))
    return FrameVector(features, seg.label, seg.index)


def vectorize_segments(segments: Iterable[Segment],
                       fia_config: Optional[FiaConfig] = None) -> list[FrameVector]:
    fia_config = fia_config or FiaConfig()
    out = []
    cache = {}
    for seg in segments:
        thresholds = None
        if fia_config.threshold_scope == "trace":
            key = id(seg.trace)
            if key not in cache:
                cache[key] = fia.compute_thresholds(seg.trace, fia_config)
            thresholds = cache[key]
        out.append(vectorize(seg, fia_config, thresholds))
    return out


def vectorize_trace(trace: LabeledTrace, size: int,
                    fia_config: Optional[FiaConfig] = None) -> list[FrameVector]:
    return vectorize_segments(segment(trace, size), fia_config)


def as_matrix(vectors: Sequence[FrameVector]) -> tuple[np.ndarray, np.ndarray]:
    if not vectors:
        return np.zeros((0, N_FEATURES)), np.zeros(0, dtype=np.int64)
    X = np.vstack([v.features for v in vectors])
    y = np.array([v.label for v in vectors], dtype=np.int64)
    return X, y


def write_feature_csv(vectors: Sequence[FrameVector], path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment_index", *FEATURE_NAMES, "label"])
        for v in vectors:
            w.writerow([v.segment_index, *map(repr, v.features.tolist()), v.label])


def read_feature_csv(path) -> list[FrameVector]:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header[1:-1]) != FEATURE_NAMES:
            raise ValueError("feature columns do not match this version's feature order")
        return [FrameVector([float(x) for x in row[1:-1]], int(row[-1]), int(row[0]))
                for row in r if row]
