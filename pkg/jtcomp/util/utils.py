import logging
from time import perf_counter

from jtcomp.util.log import BraceMessage as __


def _prepare_message(**kwargs):
    verb = kwargs.pop('verb', "Processed")
    objects = kwargs.pop('objects', "entries")
    msg = kwargs.pop('msg', "{verb} {countf} {objects} after {timef}s ({ratef}/{avgratef} {objects} per second)")
    msg = msg.format(countf='{count:,}', timef='{time:.2f}', ratef='{rate:,.2f}', avgratef='{avgrate:,.2f}',
                     objects=objects, verb=verb)
    return msg


def progress(iterable, delay=5, logger=logging, level=logging.INFO, **kwargs):
    """
    Log a short status message about the number of consumed items to `logger` every `delay` seconds as items are
    consumed from the given iterable, and once more when it is exhausted.
    :return: a wrapped version of the given iterable
    """
    msg = _prepare_message(**kwargs)
    last_print = start = perf_counter()
    last_count = count = 0

    def report():
        nonlocal last_print, last_count
        now = perf_counter()
        logger.log(level, __(msg, count=count, time=now - start,
                             rate=(count - last_count) / max(now - last_print, 1e-9),
                             avgrate=count / max(now - start, 1e-9)))
        last_print, last_count = now, count

    for val in iterable:
        yield val
        count += 1
        if perf_counter() - last_print > delay:
            report()
    report()
