"""Counters for numerical safety events (eigenvalue clamps, density floors).

Library code calls :func:`record`; drivers wrap a run in :func:`collect` to
obtain the counts for the run manifest.  Counting is scoped with a
``ContextVar`` so concurrent runs do not mix their tallies.
"""

from collections import Counter
from contextlib import contextmanager
from contextvars import ContextVar
import logging

logger = logging.getLogger("qrevdiff")

_active: ContextVar = ContextVar("qrevdiff_event_counter", default=None)


def record(kind: str, count: int = 1) -> None:
    if count <= 0:
        return
    logger.debug("%s: %d", kind, count)
    counter = _active.get()
    if counter is not None:
        counter[kind] += int(count)


@contextmanager
def collect():
    """Yield a ``Counter`` that accumulates events recorded inside the block."""
    counter = Counter()
    parent = _active.get()
    token = _active.set(counter)
    try:
        yield counter
    finally:
        _active.reset(token)
        if parent is not None:
            parent.update(counter)
