"""Video-frame burst detection.

A frame is a run of consecutive large downlink packets sent in quick
succession.  "Large" is relative to the biggest packet in the window
(``len_th``); "quick succession" is bounded by ``dur_th``, taken as the
distance between the first two modes of the inter-arrival histogram.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np

from ._backend import kernels
from .errors import EmptySegment, UnimodalDistribution, ZeroDuration
from .ingest import LabeledTrace
from .segmenter import Segment


@dataclass(frozen=True)
class FiaConfig:
    len_fraction: float = 0.25
    len_th_abs: Optional[int] = None
    bin_width: float = 1e-4
    prominence_fraction: float = 0.05
    hist_max_iat: float = 1.0
    fallback_dur_th: float = 0.005
    min_packets_per_frame: int = 2
    threshold_scope: str = "segment"  # or "trace"

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if not 0 < self.len_fraction <= 1:
            raise ValueError("len_fraction must lie in (0, 1]")
        if self.len_th_abs is not None and self.len_th_abs <= 0:
            raise ValueError("len_th_abs must be positive")
        if self.min_packets_per_frame < 1:
            raise ValueError("min_packets_per_frame must be >= 1")
        if self.threshold_scope not in ("segment", "trace"):
            raise ValueError("threshold_scope must be 'segment' or 'trace'")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FiaConfig":
        return cls(**d)


@dataclass(frozen=True)
class FiaThresholds:
    len_th: int
    dur_th: float
    t1: Optional[float] = None
    t2: Optional[float] = None

    def __post_init__(self):
        if self.len_th <= 0:
            raise ValueError("len_th must be positive")
        if self.dur_th <= 0:
            raise ValueError("dur_th must be positive")
        if self.t1 is not None or self.t2 is not None:
            if not (0 < self.t1 < self.t2):
                raise ValueError(f"need 0 < t1 < t2, got t1={self.t1}, t2={self.t2}")
            if not (self.t1 <= self.dur_th <= self.t2):
                raise ValueError("dur_th must lie between t1 and t2")

    @property
    def from_fallback(self) -> bool:
        return self.t1 is None


@dataclass(frozen=True)
class Frame:
    start_index: int
    end_index: int
    start_time: float
    end_time: float
    packet_count: int
    byte_total: int

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time


@dataclass(frozen=True)
class FrameSet:
    frames: tuple
    thresholds: FiaThresholds
    segment_duration: float

    def __len__(self):
        return len(self.frames)

    @property
    def count(self) -> int:
        return len(self.frames)

    @property
    def start_times(self) -> np.ndarray:
        return np.array([f.start_time for f in self.frames], dtype=np.float64)

    @property
    def total_duration(self) -> float:
        return float(sum(f.duration for f in self.frames))

    @property
    def avg_frame_iat(self) -> float:
        """Mean gap between consecutive frame start times (0 below two frames)."""
        if len(self.frames) < 2:
            return 0.0
        return float(np.mean(np.diff(self.start_times)))


Window = Union[Segment, LabeledTrace]


def _as_segment(window: Window) -> Segment:
    if isinstance(window, LabeledTrace):
        return Segment.whole(window)
    return window


def length_threshold(segment: Window, config: Optional[FiaConfig] = None) -> int:
    config = config or FiaConfig()
    segment = _as_segment(segment)
    if len(segment) == 0:
        raise EmptySegment("cannot threshold an empty segment")
    if config.len_th_abs is not None:
        return int(config.len_th_abs)
    return max(1, math.floor(config.len_fraction * int(segment.length.max())))


def iat_histogram(iats, bin_width: float, max_iat: float = 1.0):
    """Counts per bin of width ``bin_width`` over [0, max_iat]; returns (counts, centers)."""
    iats = np.asarray(iats, dtype=np.float64)
    iats = iats[(iats >= 0) & (iats <= max_iat)]
    if len(iats) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    bins = np.floor(iats / bin_width).astype(np.int64)
    counts = np.bincount(bins)
    centers = (np.arange(len(counts)) + 0.5) * bin_width
    return counts, centers


def histogram_peaks(counts, prominence_fraction: float) -> np.ndarray:
    """Indices of local maxima whose height is at least a fraction of the tallest bin.

    A bin is a local maximum when it is strictly above its left neighbour
    and not below its right neighbour, so a flat top reports its first bin.
    """
    counts = np.asarray(counts)
    if len(counts) == 0:
        return np.zeros(0, dtype=np.int64)
    padded = np.concatenate(([0], counts, [0]))
    mid = padded[1:-1]
    is_peak = (mid > padded[:-2]) & (mid >= padded[2:])
    is_peak &= mid >= prominence_fraction * counts.max()
    return np.flatnonzero(is_peak)


def iat_modes(segment: Window, bin_width: float = 1e-4, prominence_fraction: float = 0.05,
              max_iat: float = 1.0) -> tuple[float, float]:
    """Centers of the first two qualifying peaks of the inter-arrival histogram.

    Only gaps between packets of the window are used (the first stored
    iat points outside it).
    """
    segment = _as_segment(segment)
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if len(segment) < 2:
        raise UnimodalDistribution("need at least two packets")
    counts, centers = iat_histogram(segment.iat[1:], bin_width, max_iat)
    peaks = histogram_peaks(counts, prominence_fraction)
    if len(peaks) < 2:
        raise UnimodalDistribution(f"found {len(peaks)} qualifying peak(s)")
    return float(centers[peaks[0]]), float(centers[peaks[1]])


def compute_thresholds(segment: Window, config: Optional[FiaConfig] = None) -> FiaThresholds:
    config = config or FiaConfig()
    segment = _as_segment(segment)
    len_th = length_threshold(segment, config)
    try:
        t1, t2 = iat_modes(segment, config.bin_width, config.prominence_fraction,
                           config.hist_max_iat)
    except UnimodalDistribution:
        return FiaThresholds(len_th=len_th, dur_th=config.fallback_dur_th)
    return FiaThresholds(len_th=len_th, dur_th=max(t2 - t1, t1), t1=t1, t2=t2)


def identify_frames(segment: Window, thresholds: FiaThresholds,
                    min_packets_per_frame: int = 2) -> FrameSet:
    segment = _as_segment(segment)
    ts = segment.timestamp
    length = segment.length
    starts, ends = kernels.frame_runs(
        length, segment.downlink, segment.iat,
        thresholds.len_th, thresholds.dur_th, min_packets_per_frame,
    )
    if len(starts):
        csum = np.concatenate(([0], np.cumsum(length)))
        byte_totals = csum[ends + 1] - csum[starts]
    else:
        byte_totals = starts
    frames = tuple(
        Frame(int(s), int(e), float(ts[s]), float(ts[e]), int(e - s + 1), int(b))
        for s, e, b in zip(starts.tolist(), ends.tolist(), byte_totals.tolist())
    )
    duration = float(ts[-1] - ts[0]) if len(ts) else 0.0
    return FrameSet(frames, thresholds, duration)


def detect(segment: Window, config: Optional[FiaConfig] = None,
           thresholds: Optional[FiaThresholds] = None) -> FrameSet:
    """Thresholds (unless given) plus frame identification in one call."""
    config = config or FiaConfig()
    if thresholds is None:
        thresholds = compute_thresholds(segment, config)
    return identify_frames(segment, thresholds, config.min_packets_per_frame)


def frame_rate(frames: FrameSet) -> float:
    if frames.segment_duration <= 0:
        raise ZeroDuration("segment spans zero time")
    return frames.count / frames.segment_duration
