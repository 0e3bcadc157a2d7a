"""Backend selection for the LSTM hot loops.

The compiled extension is used when it imports; otherwise the numpy
implementation is used.  Set ``DINENDT_PURE_PYTHON=1`` to force numpy.
"""

import os

from . import _kernels_py

BACKEND = "python"
_ext = None

if os.environ.get("DINENDT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _lstm_ext as _ext  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # extension not built
        _ext = None

lstm_cell_forward = _kernels_py.lstm_cell_forward
lstm_cell_backward = _kernels_py.lstm_cell_backward

if _ext is not None:
    lstm_seq_forward = _ext.lstm_seq_forward
    lstm_seq_backward = _ext.lstm_seq_backward
else:
    lstm_seq_forward = _kernels_py.lstm_seq_forward
    lstm_seq_backward = _kernels_py.lstm_seq_backward


def available_backends():
    """Return ``{name: (forward, backward)}`` for every importable sequence backend."""
    out = {"python": (_kernels_py.lstm_seq_forward, _kernels_py.lstm_seq_backward)}
    try:
        from . import _lstm_ext
        out["cython"] = (_lstm_ext.lstm_seq_forward, _lstm_ext.lstm_seq_backward)
    except ImportError:
        pass
    return out
