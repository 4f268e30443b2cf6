import sys
import importlib

import numpy as np
import pytest

from xrtraffic import _kernels_py
from xrtraffic.ingest import LabeledTrace


def burst_trace(n_frames=60, rate=60.0, per_frame=20, frame_len=9000, intra=1e-4,
                ctrl_len=120, label=1, name="burst"):
    """Noise-free frames of ``per_frame`` packets plus one uplink control packet mid-gap."""
    ts, ln, dl = [], [], []
    period = 1.0 / rate
    for k in range(n_frames):
        t0 = k * period
        for j in range(per_frame):
            ts.append(t0 + j * intra)
            ln.append(frame_len)
            dl.append(True)
        ts.append(t0 + period / 2)
        ln.append(ctrl_len)
        dl.append(False)
    order = np.argsort(ts, kind="stable")
    return LabeledTrace.from_arrays(label, name, np.asarray(ts)[order],
                                    np.asarray(ln)[order], np.asarray(dl)[order])


@pytest.fixture
def make_burst_trace():
    return burst_trace


def _compiled():
    try:
        return importlib.import_module("xrtraffic._kernels")
    except ImportError:
        return None


BACKENDS = [pytest.param(_kernels_py, id="python")]
if _compiled() is not None:
    BACKENDS.append(pytest.param(_compiled(), id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test with each available kernel backend patched in."""
    from xrtraffic import fia, forest
    monkeypatch.setattr(forest, "kernels", request.param)
    monkeypatch.setattr(fia, "kernels", request.param)
    return request.param


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in range(1, 10):
        status, title, detail = mod.RESULTS.get(num, ("SKIP", "not run", "optional; needs XRTRAFFIC_DATASET1"))
        tr.write_line(f"[{status}] criterion {num}: {title}" + (f" | {detail}" if detail else ""))
