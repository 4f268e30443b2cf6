import json

import numpy as np
import pytest

from xrtraffic import persistence as P
from xrtraffic.a2rot import A2RConfig, run_experiment
from xrtraffic.errors import CorruptFile, VersionMismatch
from xrtraffic.synth import generate, preset_suite


@pytest.fixture(scope="module")
def result():
    traces = [generate(p, i + 1).trace for i, p in enumerate(preset_suite(duration=20))]
    return run_experiment(traces, A2RConfig(n_trees=40, seed=4))


def test_round_trip_predictions(tmp_path, result):
    path = P.save_model(result.outcome, tmp_path / "m.dxr.json")
    m = P.load_model(path)
    X = np.random.default_rng(0).uniform(0, 5000, size=(1000, 13))
    np.testing.assert_array_equal(m.forest.predict(X), result.outcome.final_model.predict(X))
    np.testing.assert_array_equal(m.forest.votes(X), result.outcome.final_model.votes(X))
    assert m.segment_size == result.outcome.s
    assert m.class_names == result.outcome.class_names
    assert m.fia_config == result.outcome.config.fia


def test_payload_bytes_stable(tmp_path, result):
    text = P.dumps_model(result.outcome)
    again = P.dumps_model(P.loads_model(text))
    assert again == text
    assert P.payload_text(again) == P.payload_text(text)


def test_truncated_file(tmp_path, result):
    text = P.dumps_model(result.outcome)
    for cut in (0, 10, len(text) // 2, len(text) - 3):
        with pytest.raises(CorruptFile):
            P.loads_model(text[:cut])


def test_version_bump(result):
    text = P.dumps_model(result.outcome)
    with pytest.raises(VersionMismatch):
        P.loads_model(text.replace('"format_version":1', '"format_version":2', 1))


def test_single_byte_corruption_detected(result):
    text = P.dumps_model(result.outcome)
    raw = P.payload_text(text)
    start = text.index(raw)
    rng = np.random.default_rng(1)
    for pos in rng.choice(np.arange(start, start + len(raw)), 200, replace=False):
        ch = text[pos]
        repl = "7" if ch != "7" else "3"
        bad = text[:pos] + repl + text[pos + 1:]
        with pytest.raises((CorruptFile, VersionMismatch)):
            P.loads_model(bad)


def test_wrong_format_and_garbage(tmp_path):
    with pytest.raises(CorruptFile):
        P.loads_model('{"format":"other","format_version":1,"payload":{}}')
    p = tmp_path / "bin.dxr.json"
    p.write_bytes(b"\xff\xfe\x00garbage")
    with pytest.raises(CorruptFile):
        P.load_model(p)


def test_training_run_files(tmp_path, result):
    model_path, manifest_path = P.save_training_run(result.outcome, tmp_path / "run.dxr.json",
                                                    evaluation=result.evaluation, total_seconds=1.5)
    assert manifest_path.name == "run.manifest.json"
    assert (tmp_path / "run.timing.json").exists()
    man = P.load_manifest(manifest_path)
    model = P.load_model(model_path)
    assert man["training_digest"] == model.training_digest
    assert man["model_sha256"] == P.sha256_text(P.payload_text(model_path.read_text()))
    assert man["segment_size"] == result.outcome.s
    assert all("wall_time" not in h for h in man["history"])
    assert man["final_metrics"]["per_class"]["1"]["fnr"] == result.evaluation.per_class[1].fnr
    assert man["seed"] == 4


def test_manifest_deterministic(tmp_path, result):
    a = P.dumps_manifest(P.build_manifest(result.outcome, evaluation=result.evaluation))
    b = P.dumps_manifest(P.build_manifest(result.outcome, evaluation=result.evaluation))
    assert a == b
    json.loads(a)


def test_atomic_write_leaves_no_partial(tmp_path):
    target = tmp_path / "x.dxr.json"

    class Boom:
        def __str__(self):
            raise RuntimeError("boom")

    with pytest.raises(TypeError):
        P.atomic_write_text(target, Boom())
    assert list(tmp_path.iterdir()) == []


def test_dataset_fingerprints(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("time,length,direction\n0,1,downlink\n")
    fp = P.dataset_fingerprints([(f, 1, "A")])
    assert fp[0]["sha256"] == P.file_sha256(f) and len(fp[0]["sha256"]) == 64
