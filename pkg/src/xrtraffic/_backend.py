"""Select the kernel implementation at import time.

The compiled extension is used when it imports; otherwise (or when
``XRTRAFFIC_PURE_PYTHON=1`` is set) the numpy reference kernels are used.
"""

import os

from . import _kernels_py

kernels = _kernels_py
if os.environ.get("XRTRAFFIC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as kernels  # noqa: F811
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.BACKEND


def compiled_available() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
