"""Frequency-space kernels with a compiled core and a numpy fallback.

The compiled extension (``_core``, built from ``_core.pyx``) is preferred;
if it is unavailable, or ``SUPERLIOUVILLE_NO_EXT=1`` is set, the pure-numpy
implementation is used.  Both expose the same functions with identical
semantics; ``benchmarks/bench_kernels.py`` compares their throughput.
"""

import os

from . import _numpy

if os.environ.get("SUPERLIOUVILLE_NO_EXT", "0") == "1":
    _impl = _numpy
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _numpy

dirac_hat = _impl.dirac_hat
pm_project_hat = _impl.pm_project_hat
mode_scale = _impl.mode_scale
polarization_coef = _impl.polarization_coef
coef_from_polarization = _impl.coef_from_polarization


def backend_name() -> str:
    return _impl.BACKEND


def implementations():
    """All available backends, for equivalence tests and benchmarks."""
    impls = {"numpy": _numpy}
    try:
        from . import _core

        impls["cython"] = _core
    except ImportError:
        pass
    return impls
