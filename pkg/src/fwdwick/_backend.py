"""Select the compiled kernels when available, the numpy ones otherwise.

Set ``FWDWICK_PURE=1`` to force the numpy implementation.
"""

import os

from . import _kernels_py

if os.environ.get("FWDWICK_PURE", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

power_avg = _impl.power_avg
power_incr_avg = _impl.power_incr_avg
hermite_table = _impl.hermite_table
