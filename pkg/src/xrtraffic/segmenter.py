"""Fixed-size packet windows and train/validation splitting."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence, TypeVar

import numpy as np

from .errors import DegenerateSplit, SizeZero
from .ingest import LabeledTrace

T = TypeVar("T")


@dataclass(frozen=True, eq=False)
class Segment:
    """S contiguous packets of one trace (rows ``start .. start+S-1``)."""

    trace: LabeledTrace
    index: int
    segment_size: int

    @property
    def start(self) -> int:
        return self.index * self.segment_size

    @property
    def stop(self) -> int:
        return self.start + self.segment_size

    @property
    def label(self) -> int:
        return self.trace.service_label

    @property
    def timestamp(self) -> np.ndarray:
        return self.trace.timestamp[self.start:self.stop]

    @property
    def length(self) -> np.ndarray:
        return self.trace.length[self.start:self.stop]

    @property
    def downlink(self) -> np.ndarray:
        return self.trace.downlink[self.start:self.stop]

    @property
    def iat(self) -> np.ndarray:
        return self.trace.iat[self.start:self.stop]

    @property
    def packets(self):
        return [self.trace[j] for j in range(self.start, self.stop)]

    def __len__(self):
        return self.segment_size

    @classmethod
    def whole(cls, trace: LabeledTrace) -> "Segment":
        """The entire trace as a single segment."""
        return cls(trace, 0, len(trace))


def segment_count(n_packets: int, size: int) -> int:
    if size < 1:
        raise SizeZero(f"segment size must be >= 1, got {size}")
    return n_packets // size


def segment(trace: LabeledTrace, size: int) -> list[Segment]:
    """Non-overlapping consecutive windows; a short tail is dropped."""
    return [Segment(trace, k, size) for k in range(segment_count(len(trace), size))]


def holdout_split(trace: LabeledTrace, test_fraction: float) -> tuple[LabeledTrace, LabeledTrace]:
    """Temporal split: the leading packets train, the trailing ``test_fraction`` test."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    cut = len(trace) - int(round(test_fraction * len(trace)))
    return trace.slice(0, cut), trace.slice(cut, len(trace))


def _label_of(item) -> int:
    return item.label


def split_train_val(vectors: Sequence[T], ratio: float, seed: int) -> tuple[list[T], list[T]]:
    """Split into (train, val) with ``round(ratio * n)`` validation items.

    When every class has at least two items the split is stratified: the
    validation quota is apportioned across classes by largest remainder.
    Both partitions keep the input order.
    """
    n = len(vectors)
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    n_val = int(round(ratio * n))
    if n < 2 or n_val < 1 or n_val > n - 1:
        raise DegenerateSplit(f"{n} items at ratio {ratio} gives {n_val} validation items")
    rng = np.random.default_rng(seed)

    by_class = defaultdict(list)
    for i, v in enumerate(vectors):
        by_class[_label_of(v)].append(i)

    if all(len(ix) >= 2 for ix in by_class.values()):
        classes = sorted(by_class)
        exact = np.array([ratio * len(by_class[c]) for c in classes])
        quota = np.floor(exact).astype(int)
        quota = np.clip(quota, 0, [len(by_class[c]) - 1 for c in classes])
        short = n_val - quota.sum()
        order = sorted(range(len(classes)), key=lambda k: (-(exact[k] - quota[k]), classes[k]))
        for k in order:
            if short <= 0:
                break
            if quota[k] < len(by_class[classes[k]]) - 1:
                quota[k] += 1
                short -= 1
        for k in order:
            # only reached when keeping one training item per class is impossible
            take = min(short, len(by_class[classes[k]]) - quota[k])
            quota[k] += take
            short -= take
        val_idx = []
        for c, q in zip(classes, quota):
            members = np.array(by_class[c])
            val_idx.extend(rng.permutation(members)[:q].tolist())
    else:
        val_idx = rng.permutation(n)[:n_val].tolist()

    val_set = set(val_idx)
    train = [v for i, v in enumerate(vectors) if i not in val_set]
    val = [v for i, v in enumerate(vectors) if i in val_set]
    return train, val
