import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xrtraffic import fia
from xrtraffic.errors import EmptySegment, UnimodalDistribution, ZeroDuration
from xrtraffic.fia import FiaConfig, FiaThresholds, FrameSet
from xrtraffic.ingest import LabeledTrace
from xrtraffic.segmenter import Segment, segment
from xrtraffic.synth import generate, noise_free, preset


def trace_of(lengths, iats, downlink=None, label=1):
    iats = np.asarray(iats, dtype=float)
    ts = np.cumsum(iats) - iats[0]
    if downlink is None:
        downlink = np.ones(len(lengths), bool)
    return LabeledTrace.from_arrays(label, "t", ts, lengths, downlink)


def test_length_threshold_quarter_of_max():
    tr = trace_of([1400, 200, 700], [0, 0.1, 0.1])
    assert fia.length_threshold(tr) == 350
    assert fia.length_threshold(trace_of([100] * 4, [0, 1, 1, 1])) == 25
    assert fia.length_threshold(tr, FiaConfig(len_th_abs=1000)) == 1000
    assert fia.length_threshold(trace_of([3], [0])) == 1


def test_length_threshold_separates_populations():
    rng = np.random.default_rng(0)
    lengths = np.where(rng.random(500) < 0.5, 9000, 120)
    th = fia.length_threshold(trace_of(lengths, np.full(500, 1e-3)))
    assert th == 2250
    assert lengths[lengths == 9000].min() >= th > lengths[lengths == 120].max()


def test_length_threshold_empty():
    tr = trace_of([100, 100], [0, 1])
    with pytest.raises(EmptySegment):
        fia.length_threshold(Segment(tr, 0, 0))


def test_histogram_peak_rule():
    # bins: 0 5 1 1 3 3 0 -> peaks at 1 and 4 (flat top reports its first bin)
    assert fia.histogram_peaks([0, 5, 1, 1, 3, 3, 0], 0.05).tolist() == [1, 4]
    assert fia.histogram_peaks([10, 0, 0, 1], 0.2).tolist() == [0]  # small peak below prominence
    assert fia.histogram_peaks([], 0.05).tolist() == []


def test_iat_modes_two_populations(make_burst_trace):
    tr = make_burst_trace(n_frames=120, per_frame=20, intra=1e-4, ctrl_len=120)
    # without the control packet the inter-frame gap sits near 16.6 ms
    dl = tr.slice(0, len(tr))
    keep = dl.downlink
    only = LabeledTrace.from_arrays(1, "dl", dl.timestamp[keep], dl.length[keep], dl.downlink[keep])
    t1, t2 = fia.iat_modes(only, bin_width=1e-4)
    assert abs(t1 - 1e-4) <= 1e-4
    gap = 1 / 60 - 19 * 1e-4
    assert abs(t2 - gap) <= 1e-4


def test_iat_modes_constant_is_unimodal():
    tr = trace_of([100] * 50, [0] + [0.01] * 49)
    with pytest.raises(UnimodalDistribution):
        fia.iat_modes(tr)
    with pytest.raises(UnimodalDistribution):
        fia.iat_modes(trace_of([100], [0]))


def test_compute_thresholds_subtraction_and_fallback():
    # gaps placed on bin centers so no value sits on a bin edge
    iats = [0] + [1.5e-4, 1.5e-4, 0.01665] * 30
    th = fia.compute_thresholds(trace_of([1000] * len(iats), iats))
    assert th.t1 == pytest.approx(1.5e-4)
    assert th.t2 == pytest.approx(0.01665)
    assert th.dur_th == pytest.approx(0.0165)
    flat = trace_of([100] * 50, [0] + [0.01] * 49)
    th = fia.compute_thresholds(flat, FiaConfig(fallback_dur_th=0.005))
    assert th.dur_th == 0.005 and th.from_fallback


def test_thresholds_invariants():
    with pytest.raises(ValueError):
        FiaThresholds(len_th=10, dur_th=0.5, t1=0.1, t2=0.2)
    with pytest.raises(ValueError):
        FiaThresholds(len_th=0, dur_th=0.1)
    with pytest.raises(ValueError):
        FiaThresholds(len_th=10, dur_th=0.1, t1=0.2, t2=0.1)


def test_no_packet_reaches_threshold():
    tr = trace_of([100] * 10, [0] + [1e-4] * 9)
    fs = fia.identify_frames(tr, FiaThresholds(len_th=500, dur_th=0.01))
    assert fs.count == 0 and fs.avg_frame_iat == 0.0 and fs.total_duration == 0.0


def test_sixty_hz_stream_gives_600_frames(make_burst_trace, backend):
    tr = make_burst_trace(n_frames=600, per_frame=20, frame_len=9000, intra=1e-4)
    fs = fia.detect(tr)
    assert fs.count == 600
    assert all(f.packet_count == 20 and f.byte_total == 20 * 9000 for f in fs.frames)
    assert fs.thresholds.len_th == 2250


def test_gap_splits_runs():
    iats = [0, 1e-4, 1e-4, 0.05, 1e-4, 1e-4]
    fs = fia.identify_frames(trace_of([1000] * 6, iats), FiaThresholds(len_th=250, dur_th=0.005))
    assert [(f.start_index, f.end_index) for f in fs.frames] == [(0, 2), (3, 5)]


def test_uplink_and_short_runs_excluded():
    down = [True, True, False, True, True, True, False, True]
    fs = fia.identify_frames(trace_of([1000] * 8, [0] + [1e-4] * 7, down),
                             FiaThresholds(len_th=250, dur_th=0.005))
    assert [(f.start_index, f.end_index) for f in fs.frames] == [(0, 1), (3, 5)]
    fs3 = fia.identify_frames(trace_of([1000] * 8, [0] + [1e-4] * 7, down),
                              FiaThresholds(len_th=250, dur_th=0.005), min_packets_per_frame=3)
    assert [(f.start_index, f.end_index) for f in fs3.frames] == [(3, 5)]


def test_frame_rate_division():
    fs = FrameSet(tuple(), FiaThresholds(1, 0.1), 10.0)
    assert fia.frame_rate(fs) == 0.0
    fs = FrameSet(tuple([None] * 600), FiaThresholds(1, 0.1), 10.0)
    assert fia.frame_rate(fs) == 60.0
    with pytest.raises(ZeroDuration):
        fia.frame_rate(FrameSet((), FiaThresholds(1, 0.1), 0.0))


def rescan_ok(seg, fs):
    th = fs.thresholds
    L, D, I = seg.length, seg.downlink, seg.iat
    ok = D & (L >= th.len_th)
    prev_end = -1
    for f in fs.frames:
        s, e = f.start_index, f.end_index
        assert s > prev_end
        prev_end = e
        assert ok[s:e + 1].all()
        assert (I[s + 1:e + 1] <= th.dur_th).all()
        # maximal: neighbours would break a rule
        if s > 0:
            assert not (ok[s - 1] and I[s] <= th.dur_th)
        if e + 1 < len(seg):
            assert not (ok[e + 1] and I[e + 1] <= th.dur_th)
    assert fs.total_duration <= fs.segment_duration + 1e-12


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 200), st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]))
def test_frames_satisfy_invariants_and_are_maximal(n, seed, min_pk):
    rng = np.random.default_rng(seed)
    tr = trace_of(rng.integers(50, 1500, n), np.concatenate(([0], rng.choice([1e-4, 2e-3, 0.02], n - 1))),
                  rng.random(n) < 0.8)
    seg = Segment.whole(tr)
    cfg = FiaConfig(min_packets_per_frame=min_pk)
    fs = fia.detect(seg, cfg)
    rescan_ok(seg, fs)
    assert all(f.packet_count >= min_pk for f in fs.frames)
    fs2 = fia.detect(seg, cfg)
    assert fs2 == fs


def test_backends_agree_on_frames():
    from xrtraffic import _kernels_py
    try:
        from xrtraffic import _kernels
    except ImportError:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(1, 400))
        L = rng.integers(50, 1500, n)
        D = rng.random(n) < 0.7
        I = rng.choice([0.0, 1e-4, 3e-3, 0.02], n)
        a = _kernels_py.frame_runs(L, D, I, 300, 0.004, 2)
        b = _kernels.frame_runs(L, D, I, 300, 0.004, 2)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


@pytest.mark.parametrize("name", ["VR Video", "VR Game", "AR", "MR"])
def test_noise_free_presets_recover_rate(name):
    gen = generate(noise_free(preset(name, duration=10.0), 60.0), 1)
    t0 = time.perf_counter()
    rate = fia.frame_rate(fia.detect(gen.trace))
    assert time.perf_counter() - t0 < 1.0
    assert abs(rate - 60.0) / 60.0 <= 0.01


def test_trace_scope_thresholds_shared():
    gen = generate(preset("VR Video", duration=5.0), 1)
    th = fia.compute_thresholds(gen.trace)
    for seg in segment(gen.trace, 1000)[:3]:
        assert fia.detect(seg, thresholds=th).thresholds is th
