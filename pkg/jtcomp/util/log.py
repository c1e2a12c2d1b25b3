import logging
import time
from contextlib import contextmanager

from tabulate import tabulate

logger = logging.getLogger(__name__)


class BraceMessage(object):
    """Deferred `str.format` message, only rendered if the record is actually emitted.

    Usually imported as `__`, e.g. `logger.debug(__("Round {} gap {:.3f}", nr, gap))`.
    """

    def __init__(self, fmt, *args, **kwargs):
        self.fmt = fmt
        self.args = args
        self.kwargs = kwargs

    def __str__(self):
        return self.fmt.format(*self.args, **self.kwargs)


class _LazyTable(object):
    def __init__(self, rows, headers, floatfmt):
        self.rows = rows
        self.headers = headers
        self.floatfmt = floatfmt

    def __str__(self):
        return tabulate(self.rows, headers=self.headers, floatfmt=self.floatfmt)


def log_table(log, level, title, rows, headers, floatfmt=".4f"):
    """Log `rows` as a plain-text table below `title`; the table is only rendered if `level` is enabled."""
    if log.isEnabledFor(level):
        log.log(level, BraceMessage("{}\n{}", title, _LazyTable(list(rows), headers, floatfmt)))


@contextmanager
def stopwatch(label, log=logger, level=logging.DEBUG):
    """Measure the wall time of the enclosed block.

    Yields a dict whose "seconds" entry is filled in when the block is left.
    """
    timing = {"seconds": 0.0}
    start = time.perf_counter()
    try:
        yield timing
    finally:
        timing["seconds"] = time.perf_counter() - start
        log.log(level, BraceMessage("{} took {:.2f}s", label, timing["seconds"]))
