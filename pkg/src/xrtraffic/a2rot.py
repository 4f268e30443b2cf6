"""Online training loop with segment-size search.

Every iteration re-vectorises a growing pool of segments (``S_i`` per
service) at the current segment size ``N_f``, trains a fresh forest on part
of the pool and measures its validation error.  Two counters drive
stopping: ``z_error`` counts zero-error iterations and ``e_stop`` counts
iterations whose error moved by at most ``e_th``.  A segment budget caps
the pool.  All iteration forests are kept and concatenated at the end.
"""

from __future__ import annotations

import enum
import logging
import time
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientData, SegmentSizeMismatch
from .fia import FiaConfig
from .forest import Forest, ForestParams, combine, train_forest
from .fvr import FEATURE_NAMES, as_matrix, vectorize_segments
from .ingest import LabeledTrace
from .metrics import ConfusionMatrix, confusion, per_class_metrics
from .segmenter import Segment, holdout_split, segment, segment_count, split_train_val

log = logging.getLogger(__name__)

# ΔE comparisons are on ratios of small integers; absorb representation error
_DELTA_SLACK = 1e-12


@dataclass(frozen=True)
class A2RConfig:
    initial_segment_size: int = 500
    segment_size_increment: int = 500
    s_max: int = 200
    t_i: int = 50
    n_trees: Optional[int] = None  # overrides 50 * t_i when set
    initial_segments: int = 8
    segments_increment: int = 1
    v_r: float = 1 / 3
    test_fraction: float = 0.4
    e_th: float = 0.02
    es_th: int = 3
    ze_th: int = 1
    seed: int = 0
    n_jobs: int = 1
    forest_params: ForestParams = field(default_factory=ForestParams)
    fia: FiaConfig = field(default_factory=FiaConfig)

    def __post_init__(self):
        if self.initial_segment_size < 1 or self.segment_size_increment < 1:
            raise ValueError("segment sizes must be >= 1")
        if not 0 < self.v_r < 1:
            raise ValueError("v_r must lie in (0, 1)")
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test_fraction must lie in [0, 1)")
        if self.e_th < 0:
            raise ValueError("e_th must be >= 0")
        if min(self.es_th, self.ze_th, self.s_max, self.t_i, self.initial_segments,
               self.segments_increment) < 1:
            raise ValueError("thresholds and counts must be >= 1")
        if self.n_trees is not None and self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

    @property
    def trees_per_iteration(self) -> int:
        return self.n_trees if self.n_trees is not None else 50 * self.t_i

    @classmethod
    def fast(cls, **overrides) -> "A2RConfig":
        """Desk-scale profile: 200 trees per iteration instead of 2500."""
        overrides.setdefault("n_trees", 200)
        return cls(**overrides)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "A2RConfig":
        d = dict(d)
        if "forest_params" in d:
            d["forest_params"] = ForestParams.from_dict(d["forest_params"])
        if "fia" in d:
            d["fia"] = FiaConfig.from_dict(d["fia"])
        return cls(**d)


class StopDecision(str, enum.Enum):
    CONTINUE = "continue"
    ZERO_ERROR = "zero_error"
    PLATEAU = "plateau"
    BUDGET = "budget"

    @property
    def stops(self) -> bool:
        return self is not StopDecision.CONTINUE


@dataclass(frozen=True)
class StopState:
    z_error: int = 0
    e_stop: int = 0
    segments_used: int = 0
    last_error: Optional[float] = None
    data_exhausted: bool = False


def update_counters(state: StopState, error: float, config: A2RConfig,
                    segments_used: Optional[int] = None) -> tuple[StopState, Optional[float]]:
    """Fold one validation error into the counters; returns (state, ΔE)."""
    z = state.z_error + (1 if error == 0 else 0)
    delta = None
    e = state.e_stop
    if state.last_error is not None:
        delta = state.last_error - error
        if abs(delta) <= config.e_th + _DELTA_SLACK:
            e += 1
    used = state.segments_used if segments_used is None else segments_used
    return replace(state, z_error=z, e_stop=e, last_error=error, segments_used=used), delta


def evaluate_stop(state: StopState, config: A2RConfig) -> StopDecision:
    """Exactly one outcome; zero error outranks plateau, which outranks budget."""
    if state.z_error >= config.ze_th:
        return StopDecision.ZERO_ERROR
    if state.e_stop >= config.es_th:
        return StopDecision.PLATEAU
    if state.segments_used >= config.s_max or state.data_exhausted:
        return StopDecision.BUDGET
    return StopDecision.CONTINUE


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    segment_size: int
    segments_used: int
    pool_size: int
    val_error: float
    delta_error: Optional[float]
    z_error: int
    e_stop: int
    decision: str
    wall_time: float

    def to_dict(self, with_time: bool = False) -> dict:
        d = asdict(self)
        if not with_time:
            d.pop("wall_time")
        return d


@dataclass(frozen=True, eq=False)
class TrainOutcome:
    final_model: Forest
    s_t: int
    s: int
    history: tuple
    stop_reason: StopDecision
    iteration_models: tuple
    class_names: dict
    config: A2RConfig

    @property
    def no_convergence(self) -> bool:
        return self.stop_reason is StopDecision.BUDGET

    @property
    def converged(self) -> bool:
        return not self.no_convergence

    @property
    def best_iteration(self) -> IterationRecord:
        return min(self.history, key=lambda r: (r.val_error, r.iteration))

    @property
    def best_model(self) -> Forest:
        """Forest of the lowest-error iteration (what a budget stop falls back to)."""
        return self.iteration_models[self.best_iteration.iteration]

    @property
    def final_error(self) -> float:
        return self.history[-1].val_error

    def to_model(self) -> "TrainedModel":
        return TrainedModel(self.final_model, self.s, self.config.fia, dict(self.class_names))


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """A forest plus what is needed to vectorise new traffic the same way."""

    forest: Forest
    segment_size: int
    fia_config: FiaConfig
    class_names: dict
    feature_names: tuple = FEATURE_NAMES
    training_digest: Optional[str] = None


def _group_by_class(traces: Sequence[LabeledTrace]) -> dict[int, list[LabeledTrace]]:
    groups = defaultdict(list)
    for t in traces:
        groups[t.service_label].append(t)
    return dict(sorted(groups.items()))


def _class_segments(traces: list[LabeledTrace], size: int, limit: int) -> list[Segment]:
    """First ``limit`` segments of a class, drawn round-robin over its traces."""
    per_trace = [segment(t, size) for t in traces]
    out = []
    for k in range(max(len(p) for p in per_trace)):
        for segs in per_trace:
            if k < len(segs):
                if len(out) == limit:
                    return out
                out.append(segs[k])
    return out


def _available(traces: list[LabeledTrace], size: int) -> int:
    return sum(segment_count(len(t), size) for t in traces)


def _iteration_seed(seed: int, iteration: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, iteration, stream]).generate_state(1, np.uint64)[0] >> 1)


def a2r_ot_train(traces: Sequence[LabeledTrace], config: Optional[A2RConfig] = None) -> TrainOutcome:
    """Run the training loop on ``traces`` (all of them are training data).

    Raises :class:`InsufficientData` when a class cannot fill one segment at
    the initial size.  Running out of data or segment budget is not an
    error: the outcome is returned with ``no_convergence`` set.
    """
    config = config or A2RConfig()
    groups = _group_by_class(traces)
    if len(groups) < 2:
        raise InsufficientData("need traces from at least two classes")
    names = {c: ts[0].service_name for c, ts in groups.items()}
    for c, ts in groups.items():
        if _available(ts, config.initial_segment_size) == 0:
            raise InsufficientData(
                f"class {c} ({names[c]}) has no full segment of {config.initial_segment_size} packets"
            )

    nf = config.initial_segment_size
    s_i = min(config.initial_segments, config.s_max)
    state = StopState()
    models, history = [], []
    iteration = 0
    decision = StopDecision.CONTINUE
    while True:
        avail = {c: _available(ts, nf) for c, ts in groups.items()}
        short = any(a < s_i for a in avail.values())
        if short and iteration > 0:
            # not enough packets for a bigger pool at this size: keep what we have
            state = replace(state, data_exhausted=True)
            decision = StopDecision.BUDGET
            if history:
                history[-1] = replace(history[-1], decision=decision.value)
            log.info("data exhausted at segment size %d with %d segments", nf, s_i)
            break

        t0 = time.perf_counter()
        segments = []
        for c, ts in groups.items():
            segments.extend(_class_segments(ts, nf, s_i))
        pool = vectorize_segments(segments, config.fia)
        train, val = split_train_val(pool, config.v_r, _iteration_seed(config.seed, iteration, 0))
        model = train_forest(train, config.trees_per_iteration, config.forest_params,
                             seed=_iteration_seed(config.seed, iteration, 1), n_jobs=config.n_jobs)
        models.append(model)
        Xv, yv = as_matrix(val)
        error = float(np.mean(model.predict(Xv) != yv))

        state, delta = update_counters(state, error, config, segments_used=s_i)
        if short:
            state = replace(state, data_exhausted=True)
        decision = evaluate_stop(state, config)
        history.append(IterationRecord(
            iteration=iteration, segment_size=nf, segments_used=s_i, pool_size=len(pool),
            val_error=error, delta_error=delta, z_error=state.z_error, e_stop=state.e_stop,
            decision=decision.value, wall_time=time.perf_counter() - t0,
        ))
        log.info("iter %d: N_f=%d S_i=%d error=%.4f z=%d e=%d -> %s", iteration, nf, s_i,
                 error, state.z_error, state.e_stop, decision.value)
        if decision.stops:
            break
        iteration += 1
        nf += config.segment_size_increment
        s_i = min(s_i + config.segments_increment, config.s_max)

    last = history[-1]
    return TrainOutcome(
        final_model=combine(models),
        s_t=last.segments_used,
        s=last.segment_size,
        history=tuple(history),
        stop_reason=decision,
        iteration_models=tuple(models),
        class_names=names,
        config=config,
    )


@dataclass(frozen=True)
class ClassificationResult:
    segment_index: tuple
    labels: tuple
    votes: np.ndarray
    classes: tuple

    @property
    def counts(self) -> dict:
        c = Counter(self.labels)
        return {k: c.get(k, 0) for k in self.classes}

    @property
    def plurality(self) -> int:
        counts = self.counts
        return max(sorted(counts), key=lambda k: counts[k])


def classify(model: TrainedModel, trace: LabeledTrace,
             segment_size: Optional[int] = None) -> ClassificationResult:
    """Label every full segment of ``trace`` at the model's segment size."""
    if segment_size is not None and segment_size != model.segment_size:
        raise SegmentSizeMismatch(model.segment_size, segment_size)
    segs = segment(trace, model.segment_size)
    if not segs:
        raise InsufficientData(
            f"trace of {len(trace)} packets is shorter than one segment ({model.segment_size})"
        )
    vectors = vectorize_segments(segs, model.fia_config)
    X, _ = as_matrix(vectors)
    votes = model.forest.votes(X)
    labels = np.asarray(model.forest.classes)[np.argmax(votes, axis=1)]
    return ClassificationResult(
        tuple(v.segment_index for v in vectors), tuple(int(x) for x in labels),
        votes, model.forest.classes,
    )


@dataclass(frozen=True, eq=False)
class Evaluation:
    matrix: ConfusionMatrix
    per_class: dict
    segments: dict  # class id -> number of test segments

    @property
    def overall_accuracy(self) -> float:
        return self.matrix.overall_accuracy()


def evaluate(model: TrainedModel, traces: Sequence[LabeledTrace]) -> Evaluation:
    """Classify labeled test traces and tabulate per-class metrics."""
    y_true, y_pred = [], []
    for t in traces:
        try:
            res = classify(model, t)
        except InsufficientData:
            log.warning("trace %s too short for segment size %d; skipped",
                        t.service_name, model.segment_size)
            continue
        y_true.extend([t.service_label] * len(res.labels))
        y_pred.extend(res.labels)
    ids = set(model.class_names) | set(model.forest.classes) | set(y_true)
    n_classes = max(ids)
    names = tuple(model.class_names.get(i, str(i)) for i in range(1, n_classes + 1))
    m = confusion(y_true, y_pred, n_classes, names)
    return Evaluation(m, per_class_metrics(m), dict(Counter(y_true)))


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    outcome: TrainOutcome
    evaluation: Optional[Evaluation]
    train_time: float


def run_experiment(train_traces: Sequence[LabeledTrace], config: Optional[A2RConfig] = None,
                   test_traces: Optional[Sequence[LabeledTrace]] = None) -> ExperimentResult:
    """Train on ``train_traces`` and evaluate on held-out data.

    Without explicit test traces, the trailing ``config.test_fraction`` of
    every training trace is held out; with ``test_fraction == 0`` nothing
    is held out and ``evaluation`` is None.
    """
    config = config or A2RConfig()
    if test_traces is None and config.test_fraction > 0:
        pairs = [holdout_split(t, config.test_fraction) for t in train_traces]
        train_traces = [p[0] for p in pairs]
        test_traces = [p[1] for p in pairs]
    t0 = time.perf_counter()
    outcome = a2r_ot_train(train_traces, config)
    train_time = time.perf_counter() - t0
    ev = evaluate(outcome.to_model(), test_traces) if test_traces else None
    return ExperimentResult(outcome, ev, train_time)


def a2r_ot_train_ovr(traces: Sequence[LabeledTrace],
                     config: Optional[A2RConfig] = None) -> dict[int, TrainOutcome]:
    """One loop per service, each separating that service (label kept) from the rest (label 0)."""
    config = config or A2RConfig()
    out = {}
    for c in sorted({t.service_label for t in traces}):
        relabeled = [t if t.service_label == c else
                     LabeledTrace(0, "rest", t.timestamp, t.length, t.downlink, t.iat)
                     for t in traces]
        out[c] = a2r_ot_train(relabeled, config)
    return out


def classify_ovr(models: dict[int, TrainedModel], trace: LabeledTrace) -> tuple[int, dict]:
    """Pick the service whose detector claims the largest share of segments."""
    share = {}
    for c, m in models.items():
        res = classify(m, trace)
        share[c] = res.labels.count(c) / len(res.labels)
    best = max(sorted(share), key=lambda c: share[c])
    return best, share
