"""Synthetic XR-like packet traces with known frame ground truth.

Each frame is a burst of large downlink packets at a short, regular
spacing.  Control/audio packets (mostly small, mostly uplink) fill the
gaps.  A profile may split frames into two bursts at random, which is how
the chat-like preset mimics asynchronous rendering.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import InvalidProfile
from .ingest import LabeledTrace, write_trace

Range = Union[float, int, tuple]

TIME_RESOLUTION = 1e-6  # microseconds, as in pcap exports


def _lohi(r: Range) -> tuple[float, float]:
    if isinstance(r, (tuple, list)):
        lo, hi = r
    else:
        lo = hi = r
    return float(lo), float(hi)


@dataclass(frozen=True)
class ServiceProfile:
    """Generator parameters.  Ranges are ``(low, high)`` uniform draws or a fixed value."""

    name: str
    frame_rate: float
    packets_per_frame: Range
    frame_packet_length: Range
    intra_frame_iat: Range
    control_packet_rate: float
    control_packet_length: Range
    uplink_fraction: float
    jitter: float = 0.0
    duration: float = 10.0
    seed: int = 0
    frame_split_prob: float = 0.0
    split_pause: float = 0.3  # pause inside a split frame, as a fraction of the period
    collide: bool = False  # let control packets land inside bursts
    feature_cv_bound: float = 0.25  # declared ceiling on per-feature CV across segments

    def __post_init__(self):
        problems = []
        if self.frame_rate <= 0:
            problems.append("frame_rate must be > 0")
        if self.duration <= 0:
            problems.append("duration must be > 0")
        if self.control_packet_rate < 0:
            problems.append("control_packet_rate must be >= 0")
        if not 0 <= self.uplink_fraction <= 1:
            problems.append("uplink_fraction must lie in [0, 1]")
        if self.jitter < 0:
            problems.append("jitter must be >= 0")
        if self.feature_cv_bound <= 0:
            problems.append("feature_cv_bound must be > 0")
        if not 0 <= self.frame_split_prob <= 1:
            problems.append("frame_split_prob must lie in [0, 1]")
        for fname in ("packets_per_frame", "frame_packet_length", "intra_frame_iat",
                      "control_packet_length"):
            lo, hi = _lohi(getattr(self, fname))
            if lo <= 0 or hi < lo:
                problems.append(f"{fname} must be a positive value or range")
        if problems:
            raise InvalidProfile("; ".join(problems))

    @property
    def period(self) -> float:
        return 1.0 / self.frame_rate

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ServiceProfile":
        d = dict(d)
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)


@dataclass(frozen=True, eq=False)
class GeneratedTrace:
    trace: LabeledTrace
    profile: ServiceProfile
    frame_starts: np.ndarray  # nominal start time of every rendered frame
    frame_packets: np.ndarray  # packets per rendered frame

    @property
    def n_frames(self) -> int:
        return len(self.frame_starts)

    def ground_truth(self) -> dict:
        return {
            "profile": self.profile.to_dict(),
            "label": self.trace.service_label,
            "n_frames": self.n_frames,
            "frame_rate": self.profile.frame_rate,
            "frames": [{"start_time": float(t), "packets": int(n)}
                       for t, n in zip(self.frame_starts, self.frame_packets)],
        }


def _draw_int(rng, r: Range, size):
    lo, hi = _lohi(r)
    return rng.integers(int(lo), int(hi) + 1, size=size)


def _draw_float(rng, r: Range, size):
    lo, hi = _lohi(r)
    if lo == hi:
        return np.full(size, lo)
    return rng.uniform(lo, hi, size=size)


def generate(profile: ServiceProfile, label: int) -> GeneratedTrace:
    rng = np.random.default_rng(profile.seed)
    period = profile.period
    n_frames = int(np.ceil(profile.duration * profile.frame_rate - 1e-9))
    starts = np.arange(n_frames) * period
    if profile.jitter > 0:
        starts = starts + rng.normal(0.0, profile.jitter * period, n_frames)
        starts = np.maximum.accumulate(np.clip(starts, 0.0, None))
    npk = _draw_int(rng, profile.packets_per_frame, n_frames)

    times, lengths, down = [], [], []
    busy = []  # (first, last) packet time of every burst
    for k in range(n_frames):
        offsets = np.concatenate(([0.0], np.cumsum(_draw_float(rng, profile.intra_frame_iat, npk[k] - 1))))
        if npk[k] >= 4 and rng.random() < profile.frame_split_prob:
            cut = int(rng.integers(2, npk[k] - 1))
            offsets[cut:] += profile.split_pause * period
        t = starts[k] + offsets
        # later frames must not start before this one has finished
        if k + 1 < n_frames and t[-1] >= starts[k + 1]:
            starts[k + 1] = t[-1] + 2 * TIME_RESOLUTION
        times.append(t)
        lengths.append(_draw_int(rng, profile.frame_packet_length, npk[k]))
        down.append(np.ones(npk[k], dtype=bool))
        busy.append((t[0], t[-1]))

    end = max(profile.duration, float(times[-1][-1]) if times else 0.0)
    n_ctrl = int(profile.control_packet_rate * end)
    if n_ctrl:
        ctrl_period = 1.0 / profile.control_packet_rate
        if profile.jitter > 0 or profile.collide:
            ct = np.sort(rng.uniform(0.0, end, n_ctrl))
        else:
            ct = (np.arange(n_ctrl) + 0.5) * ctrl_period
        if not profile.collide and busy:
            b0 = np.array([b[0] for b in busy])
            b1 = np.array([b[1] for b in busy])
            k = np.searchsorted(b0, ct, side="right") - 1
            inside = (k >= 0) & (ct <= b1[np.clip(k, 0, None)] + TIME_RESOLUTION)
            ct = np.where(inside, b1[np.clip(k, 0, None)] + 5 * TIME_RESOLUTION, ct)
        times.append(ct)
        lengths.append(_draw_int(rng, profile.control_packet_length, n_ctrl))
        down.append(rng.random(n_ctrl) >= profile.uplink_fraction)

    t = np.round(np.concatenate(times) / TIME_RESOLUTION) * TIME_RESOLUTION
    order = np.argsort(t, kind="stable")
    t = t[order]
    # strictly increasing at microsecond resolution
    ticks = np.round(t / TIME_RESOLUTION).astype(np.int64)
    ticks = np.maximum.accumulate(ticks - np.arange(len(ticks))) + np.arange(len(ticks))
    t = ticks * TIME_RESOLUTION
    t = t - t[0]
    trace = LabeledTrace.from_arrays(
        label, profile.name, t,
        np.concatenate(lengths)[order], np.concatenate(down)[order],
    )
    return GeneratedTrace(trace, profile, starts.copy(), npk.astype(np.int64))


def preset_suite(duration: float = 60.0, seed: int = 0) -> list[ServiceProfile]:
    """Five XR-like services with clearly different burst statistics.

    Order (class ids 1..5): VR Video, VR Game, VR Chat, AR, MR.  The chat
    preset renders asynchronously (random split bursts, colliding control
    traffic) so frame detection over-counts on it.
    """
    common = dict(duration=duration)
    return [
        ServiceProfile("VR Video", frame_rate=60.0, packets_per_frame=(30, 40),
                       frame_packet_length=(1250, 1400), intra_frame_iat=(8e-5, 1.2e-4),
                       control_packet_rate=30.0, control_packet_length=(60, 120),
                       uplink_fraction=0.6, jitter=0.02, seed=seed + 1, **common),
        ServiceProfile("VR Game", frame_rate=90.0, packets_per_frame=(12, 18),
                       frame_packet_length=(1000, 1400), intra_frame_iat=(5e-5, 8e-5),
                       control_packet_rate=250.0, control_packet_length=(70, 150),
                       uplink_fraction=0.9, jitter=0.03, seed=seed + 2, **common),
        ServiceProfile("VR Chat", frame_rate=45.0, packets_per_frame=(3, 8),
                       frame_packet_length=(400, 1400), intra_frame_iat=(1e-4, 3e-4),
                       control_packet_rate=100.0, control_packet_length=(80, 300),
                       uplink_fraction=0.5, jitter=0.15, seed=seed + 3,
                       frame_split_prob=0.12, collide=True, **common),
        ServiceProfile("AR", frame_rate=30.0, packets_per_frame=(50, 70),
                       frame_packet_length=(1300, 1400), intra_frame_iat=(1.5e-4, 2.5e-4),
                       control_packet_rate=60.0, control_packet_length=(90, 200),
                       uplink_fraction=0.8, jitter=0.02, seed=seed + 4, **common),
        ServiceProfile("MR", frame_rate=72.0, packets_per_frame=(20, 28),
                       frame_packet_length=(1100, 1400), intra_frame_iat=(6e-5, 1e-4),
                       control_packet_rate=120.0, control_packet_length=(60, 180),
                       uplink_fraction=0.7, jitter=0.02, seed=seed + 5, **common),
    ]


def preset(name: str, **overrides) -> ServiceProfile:
    key = name.lower().replace("_", " ").replace("-", " ")
    for p in preset_suite():
        if p.name.lower() == key:
            return replace(p, **overrides)
    raise InvalidProfile(f"unknown preset {name!r}")


def noise_free(profile: ServiceProfile, frame_rate: Optional[float] = None) -> ServiceProfile:
    """Same profile with jitter and collisions removed (optionally re-rated)."""
    return replace(profile, jitter=0.0, collide=False,
                   frame_rate=frame_rate if frame_rate is not None else profile.frame_rate)


def load_profile(path) -> ServiceProfile:
    return ServiceProfile.from_dict(json.loads(Path(path).read_text()))


def write_generated(gen: GeneratedTrace, csv_path, truth_path=None) -> None:
    write_trace(gen.trace, csv_path)
    if truth_path is not None:
        Path(truth_path).write_text(json.dumps(gen.ground_truth(), indent=1))
