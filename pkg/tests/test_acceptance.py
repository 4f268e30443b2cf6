"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line which ``conftest.py`` prints in the
terminal summary.  Criterion 9 needs the external Dataset I and is skipped
unless ``XRTRAFFIC_DATASET1`` points at an experiment config for it.
"""

import json
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from xrtraffic import synth
from xrtraffic.a2rot import (A2RConfig, StopDecision, StopState, a2r_ot_train, evaluate_stop,
                             run_experiment, update_counters)
from xrtraffic.cli import main
from xrtraffic.fia import detect, frame_rate
from xrtraffic.forest import combine, feature_importance, train_forest, warm_start_extend
from xrtraffic.fvr import FRAME_FEATURES, N_FEATURES, FrameVector, vectorize_trace
from xrtraffic.ingest import LabeledTrace
from xrtraffic.metrics import confusion, per_class_metrics
from xrtraffic.persistence import load_model

RESULTS = {}


@contextmanager
def criterion(number, title):
    detail = []
    try:
        yield detail
    except BaseException:
        RESULTS[number] = ("FAIL", title, "; ".join(detail))
        raise
    RESULTS[number] = ("PASS", title, "; ".join(detail))


# 1 -------------------------------------------------------------------------

NON_CHAT = [p for p in synth.preset_suite(duration=10.0) if p.name != "VR Chat"]


def test_c1_fia_frame_rate_recovery():
    with criterion(1, "FIA recovers 60 Hz within 1% on noise-free presets") as d:
        worst_err, worst_time = 0.0, 0.0
        for p in NON_CHAT:
            trace = synth.generate(synth.noise_free(p, 60.0), 1).trace
            t0 = time.perf_counter()
            rate = frame_rate(detect(trace))
            elapsed = time.perf_counter() - t0
            err = abs(rate - 60.0) / 60.0
            d.append(f"{p.name}: {rate:.3f} Hz ({100 * err:.2f}%, {elapsed:.3f}s)")
            worst_err, worst_time = max(worst_err, err), max(worst_time, elapsed)
        assert len(NON_CHAT) == 4
        assert worst_err <= 0.01
        assert worst_time < 1.0


# 2 -------------------------------------------------------------------------

def test_c2_chat_failure_mode():
    with criterion(2, "chat-like preset frame-rate error > 5%") as d:
        chat = synth.preset("VR Chat", duration=10.0)
        rate = frame_rate(detect(synth.generate(chat, 3).trace))
        err = abs(rate - chat.frame_rate) / chat.frame_rate
        d.append(f"{rate:.2f} Hz vs {chat.frame_rate:g} Hz, error {100 * err:.1f}%")
        assert err > 0.05


# 3 -------------------------------------------------------------------------

def _oracle(y_true, y_pred, k):
    tp = sum(1 for t, p in zip(y_true, y_pred) if t == k and p == k)
    fn = sum(1 for t, p in zip(y_true, y_pred) if t == k and p != k)
    fp = sum(1 for t, p in zip(y_true, y_pred) if t != k and p == k)
    tn = len(y_true) - tp - fn - fp
    rec = tp / (tp + fn)
    prec = tp / (tp + fp) if tp + fp else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return {"accuracy": (tp + tn) / len(y_true), "recall": rec, "precision": prec,
            "f1": f1, "fnr": fn / (tp + fn)}


def test_c3_metrics_exactness():
    with criterion(3, "metrics equal brute-force oracle; recall + FNR = 1") as d:
        rng = np.random.default_rng(2024)
        runs, worst = 20, 0.0
        for _ in range(runs):
            n = int(rng.integers(2, 8))
            y_true = rng.integers(1, n + 1, 1000)
            # skewed predictions so precision and recall differ
            y_pred = np.where(rng.random(1000) < 0.7, y_true, rng.integers(1, n + 1, 1000))
            per = per_class_metrics(confusion(y_true, y_pred, n))
            for k in range(1, n + 1):
                assert per[k].support > 0
                ref = _oracle(y_true.tolist(), y_pred.tolist(), k)
                for name, v in ref.items():
                    worst = max(worst, abs(getattr(per[k], name) - v))
                assert abs(per[k].recall + per[k].fnr - 1.0) <= 1e-12
        d.append(f"{runs} runs x 1000 pairs, max |diff| {worst:.1e}")
        assert worst <= 1e-12


# 4 -------------------------------------------------------------------------

def test_c4_end_to_end_suite():
    with criterion(4, "fast profile on 5-preset suite: acc >= 93%, FNR <= 0.10, < 2 min") as d:
        t0 = time.perf_counter()
        traces = [synth.generate(p, k).trace
                  for k, p in enumerate(synth.preset_suite(duration=60.0), start=1)]
        res = run_experiment(traces, A2RConfig.fast())
        elapsed = time.perf_counter() - t0
        per = res.evaluation.per_class
        d.append(f"S={res.outcome.s}, stop={res.outcome.stop_reason.value}, {elapsed:.1f}s")
        d.append("acc " + " ".join(f"{100 * m.accuracy:.1f}" for _, m in sorted(per.items())))
        d.append("fnr " + " ".join(f"{m.fnr:.3f}" for _, m in sorted(per.items())))
        assert sorted(per) == [1, 2, 3, 4, 5]
        assert all(m.support > 0 for m in per.values())
        assert all(m.accuracy >= 0.93 for m in per.values())
        assert all(m.fnr <= 0.10 for m in per.values())
        assert elapsed < 120.0


# 5 -------------------------------------------------------------------------

def _random_vectors(rng, n, classes):
    X = rng.normal(size=(n, N_FEATURES))
    y = rng.choice(classes, n)
    X[:, 0] += y  # some signal so trees have depth
    return [FrameVector(x, int(c), i) for i, (x, c) in enumerate(zip(X, y))]


def test_c5_aggregation_and_retention():
    with criterion(5, "combine votes are member sums; warm start keeps prior trees") as d:
        rng = np.random.default_rng(5)
        members = [train_forest(_random_vectors(rng, 120, cls), 15, seed=s)
                   for s, cls in enumerate([[1, 2, 3], [2, 3], [1, 3, 4]])]
        big = combine(members)
        probe = np.array([v.features for v in _random_vectors(rng, 100, [1, 2, 3, 4])])
        total = np.zeros((100, len(big.classes)), dtype=np.int64)
        for f in members:
            cols = [big.classes.index(c) for c in f.classes]
            total[:, cols] += f.votes(probe)
        assert np.array_equal(big.votes(probe), total)

        base = members[0]
        before = [t.predict(probe) for t in base.trees]
        grown = warm_start_extend(base, _random_vectors(rng, 80, [1, 2, 5]), 10)
        assert len(grown) == len(base) + 10
        assert all(a is b for a, b in zip(grown.trees, base.trees))
        assert all(np.array_equal(t.predict(probe), p) for t, p in zip(grown.trees, before))
        d.append(f"{len(big)} combined trees, 100 probes; {len(base)} retained trees")


# 6 -------------------------------------------------------------------------

def test_c6_loop_semantics():
    with criterion(6, "hand counter trace; budget stop returns best-so-far") as d:
        cfg = A2RConfig(e_th=0.02, es_th=3, ze_th=1, s_max=200)
        errors = [0.40, 0.30, 0.29, 0.35, 0.34, 0.33, 0.325]
        want = [(0, 0, "continue"), (0, 0, "continue"), (0, 1, "continue"),
                (0, 1, "continue"), (0, 2, "continue"), (0, 3, "plateau"), (0, 4, "plateau")]
        state = StopState()
        for e, (z, es, dec) in zip(errors, want):
            state, _ = update_counters(state, e, cfg)
            assert (state.z_error, state.e_stop, evaluate_stop(state, cfg).value) == (z, es, dec)
        state, _ = update_counters(state, 0.0, cfg)
        assert state.z_error == 1 and evaluate_stop(state, cfg) is StopDecision.ZERO_ERROR
        assert evaluate_stop(StopState(segments_used=200), cfg) is StopDecision.BUDGET

        # two draws of one service under different labels never converge
        a = synth.generate(synth.preset("VR Game", duration=60.0, seed=21), 1).trace
        b = synth.generate(synth.preset("VR Game", duration=60.0, seed=22), 2).trace
        out = a2r_ot_train([a, b], A2RConfig(n_trees=20, s_max=12, es_th=1000, test_fraction=0))
        assert out.stop_reason is StopDecision.BUDGET and out.no_convergence
        best = out.best_iteration
        assert best.val_error == min(r.val_error for r in out.history)
        assert out.best_model is out.iteration_models[best.iteration]
        assert len(out.final_model) == sum(len(m) for m in out.iteration_models)
        for r in out.history:
            assert r.segment_size % 500 == 0 and r.segments_used <= 200
        assert out.s % 500 == 0 and out.s_t <= 200
        d.append(f"budget after {len(out.history)} iterations, best error {best.val_error:.2f}")


# 7 -------------------------------------------------------------------------

def _regrouped(trace, size, seed):
    """Shuffle (length, direction) pairs inside each segment-sized block.

    Every raw statistic of a segment is permutation invariant, so only the
    grouping of large packets into frames changes.
    """
    rng = np.random.default_rng(seed)
    length, down = trace.length.copy(), trace.downlink.copy()
    for s in range(0, len(length), size):
        p = s + rng.permutation(min(size, len(length) - s))
        length[s:s + len(p)] = length[p]
        down[s:s + len(p)] = down[p]
    return LabeledTrace.from_arrays(2, trace.service_name + " regrouped", trace.timestamp, length, down)


def test_c7_frame_features_dominate():
    with criterion(7, "frame features carry >= 50% importance when only frames differ") as d:
        size = 1000
        shares = []
        for name in ("VR Video", "VR Game", "AR", "MR"):
            a = synth.generate(synth.preset(name, duration=60.0, seed=11), 1).trace
            b = synth.generate(synth.preset(name, duration=60.0, seed=12), 2).trace
            vecs = vectorize_trace(a, size) + vectorize_trace(_regrouped(b, size, 5), size)
            imp = feature_importance(train_forest(vecs, 200, seed=0))
            share = float(imp[list(FRAME_FEATURES)].sum())
            shares.append(share)
            d.append(f"{name} {100 * share:.1f}%")
        assert min(shares) >= 0.5


# 8 -------------------------------------------------------------------------

def test_c8_determinism(tmp_path):
    with criterion(8, "two identical train runs: identical manifests and predictions") as d:
        suite = tmp_path / "suite"
        assert main(["synth", "--suite", str(suite), "--duration", "20"]) == 0
        runs = []
        for k in (1, 2):
            out = tmp_path / f"run{k}" / "m.dxr.json"
            out.parent.mkdir()
            cfg = suite / "suite.json"
            assert main(["train", "--config", str(cfg), "-o", str(out), "--seed", "3"]) == 0
            runs.append(out)
        man = [p.with_name("m.manifest.json").read_bytes() for p in runs]
        assert man[0] == man[1]
        models = [load_model(p) for p in runs]
        probe = np.concatenate([
            [v.features for v in vectorize_trace(synth.generate(p, 1).trace, models[0].segment_size)]
            for p in synth.preset_suite(duration=20.0, seed=99)])
        assert np.array_equal(models[0].forest.votes(probe), models[1].forest.votes(probe))
        d.append(f"manifest {len(man[0])} bytes, {len(probe)} probe segments")


# 9 -------------------------------------------------------------------------

EXP1_REFERENCE_ACCURACY = {"VR Video": 98.53, "VR Game": 84.27, "VR Chat": 100.0, "AR": 92.41, "MR": 92.11}


@pytest.mark.dataset
@pytest.mark.skipif(not os.environ.get("XRTRAFFIC_DATASET1"),
                    reason="set XRTRAFFIC_DATASET1 to an Experiment 1 config with local data")
def test_c9_dataset1_experiment1(tmp_path):
    with criterion(9, "Dataset I Experiment 1 within 3 points; S = 6000 +- 500") as d:
        out = tmp_path / "exp1.dxr.json"
        code = main(["train", "--config", os.environ["XRTRAFFIC_DATASET1"], "-o", str(out)])
        assert code in (0, 4)
        man = json.loads(out.with_name("exp1.manifest.json").read_text())
        d.append(f"S={man['segment_size']}, stop={man['stop_reason']}")
        for cid, m in sorted(man["final_metrics"]["per_class"].items()):
            name = man["class_map"][cid]
            ref = EXP1_REFERENCE_ACCURACY.get(name)
            d.append(f"{name} {100 * m['accuracy']:.2f}% (ref {ref})")
            if ref is not None:
                assert abs(100 * m["accuracy"] - ref) <= 3.0
        assert abs(man["segment_size"] - 6000) <= 500
