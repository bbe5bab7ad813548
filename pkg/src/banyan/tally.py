"""Vote-tally kernel selection: compiled extension when available, pure fallback.

The two implementations are observationally identical (a parity test drives
both through full simulations and compares trace digests).  The compiled
lane only supports n <= 64; larger networks silently use the pure twin.
Set BANYAN_PURE_TALLY=1 to force the pure implementation.
"""

from __future__ import annotations

import os

from . import _tally_py

NOTAR = _tally_py.NOTAR
FAST = _tally_py.FAST
FINAL = _tally_py.FINAL

_ext = None
if os.environ.get("BANYAN_PURE_TALLY") != "1":
    try:
        from . import _tally_ext as _ext
    except ImportError:
        _ext = None

HAVE_EXT = _ext is not None


def backend_name(n: int | None = None) -> str:
    if _ext is not None and (n is None or n <= 64):
        return "ext"
    return "py"


def new_tally(n: int):
    """Fresh per-round tally for a network of n replicas."""
    if _ext is not None and n <= 64:
        return _ext.RoundTally(n)
    return _tally_py.RoundTally(n)


def implementations():
    """Available (name, factory) pairs; used by parity tests and benchmarks."""
    out = [("py", _tally_py.RoundTally)]
    if _ext is not None:
        out.append(("ext", _ext.RoundTally))
    return out
