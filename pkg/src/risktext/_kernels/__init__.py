"""Hot kernels with a compiled backend and a numpy fallback.

The compiled module is used when it imports; set ``RISKTEXT_KERNELS=python``
to force the fallback (the test-suite runs both).
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("RISKTEXT_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

fit_tree = _impl.fit_tree
predict_tree = _impl.predict_tree
svm_dual_cd = _impl.svm_dual_cd


def available_backends():
    """Map backend name to kernel module for every backend that imports."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
