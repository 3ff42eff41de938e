"""Backend selection for the hot copula kernels.

The environment variable ``STVINE_NUMBA`` picks the implementation:

* ``"1"``   -- require the numba backend (ImportError if numba is missing)
* ``"0"``   -- force the pure numpy/scipy fallback
* unset / ``"auto"`` -- use numba when importable, else fall back silently

Both backends expose the same functions (``logpdf``, ``hfunc``, ``hinv``,
``kendall_tau``) and the same integer family codes; ``benchmarks/``
contains a script comparing their throughput.
"""

import os

from . import _numpy as _numpy_backend

_flag = os.environ.get("STVINE_NUMBA", "auto").lower()

if _flag == "0":
    _impl = _numpy_backend
elif _flag in ("1", "auto", ""):
    try:
        from . import _numba as _numba_backend
        _impl = _numba_backend
    except ImportError:
        if _flag == "1":
            raise
        _impl = _numpy_backend
else:
    raise ValueError(f"STVINE_NUMBA must be '0', '1' or 'auto', got {_flag!r}")

BACKEND = _impl.BACKEND

INDEP = _numpy_backend.INDEP
GAUSSIAN = _numpy_backend.GAUSSIAN
STUDENT_T = _numpy_backend.STUDENT_T
CLAYTON = _numpy_backend.CLAYTON
FRANK = _numpy_backend.FRANK
GUMBEL = _numpy_backend.GUMBEL
JOE = _numpy_backend.JOE

logpdf = _impl.logpdf
hfunc = _impl.hfunc
hinv = _impl.hinv
kendall_tau = _impl.kendall_tau
