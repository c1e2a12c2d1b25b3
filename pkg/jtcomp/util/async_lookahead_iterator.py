import collections
import logging
from time import perf_counter

my_logger = logging.getLogger(__name__)


class AsyncLookaheadIterator(object):
    """Map `func` over `iterable` on an executor, keeping up to `parallelism` items in flight.

    Results are yielded strictly in input order, so the merged output does not depend on which
    worker finishes first. Passing `executor=None` evaluates inline.
    """

    def __init__(self, executor, func, iterable, logger=my_logger, parallelism=4):
        self._log = logger
        self._exec = executor
        self._func = func
        self._it = iter(iterable)
        self._pending = collections.deque()
        self._parallelism = max(1, parallelism)
        self._submit_count = 0
        self._exhausted = False

    def __iter__(self):
        return self

    def __fill_queue(self):
        while not self._exhausted and len(self._pending) < self._parallelism:
            try:
                item = next(self._it)
            except StopIteration:
                self._exhausted = True
                break
            if self._exec is None:
                self._pending.append(_Done(self._func(item)))
            else:
                self._pending.append(self._exec.submit(self._func, item))
            self._submit_count += 1

    def __next__(self):
        self.__fill_queue()
        if not self._pending:
            raise StopIteration

        before = perf_counter()
        self._log.debug("[  wait before")
        result = self._pending.popleft().result()
        self._log.debug("]  wait after, waited for {:.3f}s ({} submitted)".format(
            perf_counter() - before, self._submit_count))
        self.__fill_queue()
        return result


class _Done(object):
    def __init__(self, value):
        self._value = value

    def result(self):
        return self._value
