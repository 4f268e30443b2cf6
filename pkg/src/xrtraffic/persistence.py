"""Checksummed JSON model files and training manifests.

A model file is a small envelope around a canonical (sorted, compact) JSON
payload::

    {"checksum":"<sha256 of payload bytes>","format":"xrtraffic-model","format_version":1,"payload":{...}}

The checksum covers the payload text exactly as stored, so any byte flip
inside it is caught.  Manifests hold everything needed to replay a
training run except wall-clock times, which go to a ``.timing.json``
sidecar so that two identical runs give byte-identical manifests.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Optional, Sequence, Union

from .a2rot import Evaluation, TrainedModel, TrainOutcome
from .errors import CorruptFile, VersionMismatch
from .fia import FiaConfig
from .forest import Forest
from .fvr import FEATURE_NAMES, FEATURE_SET_VERSION

FORMAT_VERSION = 1
MODEL_FORMAT = "xrtraffic-model"
MANIFEST_FORMAT = "xrtraffic-manifest"
MODEL_SUFFIX = ".dxr.json"
MANIFEST_SUFFIX = ".manifest.json"
TIMING_SUFFIX = ".timing.json"

_PAYLOAD_KEY = '"payload":'


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def sibling(model_path, suffix: str) -> Path:
    """``run.dxr.json`` -> ``run<suffix>`` next to it."""
    p = Path(model_path)
    name = p.name[: -len(MODEL_SUFFIX)] if p.name.endswith(MODEL_SUFFIX) else p.stem
    return p.with_name(name + suffix)


# -- models -------------------------------------------------------------------

def model_payload(model: TrainedModel) -> dict:
    return {
        "feature_set_version": FEATURE_SET_VERSION,
        "feature_names": list(model.feature_names),
        "class_map": {str(k): v for k, v in sorted(model.class_names.items())},
        "segment_size": int(model.segment_size),
        "fia_config": model.fia_config.to_dict(),
        "forest": model.forest.to_dict(),
        "training_digest": model.training_digest,
    }


def dumps_model(model: Union[TrainedModel, TrainOutcome]) -> str:
    if isinstance(model, TrainOutcome):
        model = model.to_model()
    payload = canonical_json(model_payload(model))
    head = canonical_json({"checksum": sha256_text(payload), "format": MODEL_FORMAT,
                           "format_version": FORMAT_VERSION})
    # keys sort as checksum < format < format_version < payload
    return head[:-1] + "," + _PAYLOAD_KEY + payload + "}\n"


def payload_text(text: str) -> Optional[str]:
    """The payload exactly as stored in a model file's text."""
    start = text.find(_PAYLOAD_KEY)
    end = text.rstrip().rfind("}")
    if start < 0 or end <= start:
        return None
    return text[start + len(_PAYLOAD_KEY): end]


def _envelope(text: str, expected_format: str) -> tuple[dict, str]:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != expected_format:
        raise CorruptFile(f"not an {expected_format} file")
    if doc.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(
            f"file format version {doc.get('format_version')!r}, this build reads {FORMAT_VERSION}"
        )
    raw = payload_text(text)
    if raw is None or "checksum" not in doc:
        raise CorruptFile("payload or checksum missing")
    if sha256_text(raw) != doc["checksum"]:
        raise CorruptFile("checksum mismatch")
    return doc["payload"], raw


def loads_model(text: str) -> TrainedModel:
    payload, _ = _envelope(text, MODEL_FORMAT)
    try:
        if tuple(payload["feature_names"]) != FEATURE_NAMES:
            raise VersionMismatch("feature order differs from this build")
        if payload["feature_set_version"] != FEATURE_SET_VERSION:
            raise VersionMismatch("feature set version differs from this build")
        return TrainedModel(
            forest=Forest.from_dict(payload["forest"]),
            segment_size=int(payload["segment_size"]),
            fia_config=FiaConfig.from_dict(payload["fia_config"]),
            class_names={int(k): v for k, v in payload["class_map"].items()},
            feature_names=tuple(payload["feature_names"]),
            training_digest=payload.get("training_digest"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"malformed payload: {exc}") from None


def save_model(model: Union[TrainedModel, TrainOutcome], path) -> Path:
    path = Path(path)
    atomic_write_text(path, dumps_model(model))
    return path


def load_model(path) -> TrainedModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise CorruptFile(f"{path}: not UTF-8 text") from None
    return loads_model(text)


# -- manifests ----------------------------------------------------------------

def dataset_fingerprints(inputs: Sequence[tuple]) -> list[dict]:
    """``inputs`` are ``(path, label, name)`` tuples; order is preserved."""
    out = []
    for path, label, name in inputs:
        out.append({"path": str(path), "label": int(label), "name": name,
                    "sha256": file_sha256(path)})
    return out


def evaluation_summary(ev: Evaluation) -> dict:
    return {
        "overall_accuracy": ev.overall_accuracy,
        "confusion": ev.matrix.counts.tolist(),
        "per_class": {
            str(c): {"support": m.support, "accuracy": m.accuracy, "recall": m.recall,
                     "precision": m.precision, "f1": m.f1, "fnr": m.fnr}
            for c, m in sorted(ev.per_class.items())
        },
    }


def training_digest(outcome: TrainOutcome, datasets: Sequence[dict] = ()) -> str:
    return sha256_text(canonical_json({
        "config": outcome.config.to_dict(),
        "history": [r.to_dict() for r in outcome.history],
        "datasets": list(datasets),
    }))


def build_manifest(outcome: TrainOutcome, datasets: Sequence[dict] = (),
                   evaluation: Optional[Evaluation] = None, model_text: Optional[str] = None) -> dict:
    return {
        "format": MANIFEST_FORMAT,
        "format_version": FORMAT_VERSION,
        "config": outcome.config.to_dict(),
        "seed": outcome.config.seed,
        "datasets": list(datasets),
        "history": [r.to_dict() for r in outcome.history],
        "stop_reason": outcome.stop_reason.value,
        "no_convergence": outcome.no_convergence,
        "segment_size": outcome.s,
        "segments_used": outcome.s_t,
        "n_trees": len(outcome.final_model),
        "class_map": {str(k): v for k, v in sorted(outcome.class_names.items())},
        "training_digest": training_digest(outcome, datasets),
        "model_sha256": sha256_text(model_text) if model_text is not None else None,  # payload hash
        "final_metrics": evaluation_summary(evaluation) if evaluation is not None else None,
    }


def dumps_manifest(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_manifest(manifest: dict, path) -> Path:
    path = Path(path)
    atomic_write_text(path, dumps_manifest(manifest))
    return path


def load_manifest(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"manifest is not valid JSON: {exc}") from None
    if doc.get("format") != MANIFEST_FORMAT:
        raise CorruptFile("not a training manifest")
    if doc.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"manifest version {doc.get('format_version')!r}")
    return doc


def write_timing(outcome: TrainOutcome, path, total_seconds: Optional[float] = None) -> Path:
    doc = {"iterations": [r.wall_time for r in outcome.history], "total": total_seconds}
    path = Path(path)
    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")
    return path


def save_training_run(outcome: TrainOutcome, model_path, datasets: Sequence[dict] = (),
                      evaluation: Optional[Evaluation] = None,
                      total_seconds: Optional[float] = None) -> tuple[Path, Path]:
    """Write model, manifest and timing sidecar; returns (model, manifest) paths."""
    digest = training_digest(outcome, datasets)
    model = outcome.to_model()
    model = TrainedModel(model.forest, model.segment_size, model.fia_config,
                         model.class_names, model.feature_names, digest)
    text = dumps_model(model)
    manifest = build_manifest(outcome, datasets, evaluation, payload_text(text))
    model_path = Path(model_path)
    manifest_path = sibling(model_path, MANIFEST_SUFFIX)
    atomic_write_text(model_path, text)
    write_manifest(manifest, manifest_path)
    write_timing(outcome, sibling(model_path, TIMING_SUFFIX), total_seconds)
    return model_path, manifest_path
