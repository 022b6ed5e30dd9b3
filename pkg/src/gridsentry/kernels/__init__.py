"""Hot-kernel dispatch: compiled extension when built, pure Python otherwise.

``BACKEND`` reports which implementation was selected at import time.
"""

from . import pure

try:
    from . import _ckernels as _impl

    BACKEND = "compiled"
except ImportError:  # extension not built for this interpreter
    _impl = pure
    BACKEND = "pure"

dos_window_flags = _impl.dos_window_flags
cyclic_successor_pairs = _impl.cyclic_successor_pairs
count_cyclic_successors = _impl.count_cyclic_successors

__all__ = [
    "BACKEND",
    "pure",
    "dos_window_flags",
    "cyclic_successor_pairs",
    "count_cyclic_successors",
]
