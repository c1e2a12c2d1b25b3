import concurrent.futures
import logging

from jtcomp.util import AsyncLookaheadIterator, BraceMessage, log_table, progress, stopwatch


class TestAsyncLookaheadIterator:
    def test_inline(self):
        assert list(AsyncLookaheadIterator(None, lambda x: x * x, range(5))) == [0, 1, 4, 9, 16]

    def test_keeps_input_order(self):
        with concurrent.futures.ThreadPoolExecutor(4) as executor:
            results = AsyncLookaheadIterator(executor, lambda x: -x, range(20), parallelism=4)
            assert list(results) == [-x for x in range(20)]

    def test_empty(self):
        assert list(AsyncLookaheadIterator(None, str, [])) == []


class TestLogging:
    def test_brace_message(self):
        assert str(BraceMessage("{} of {total}", 2, total=3)) == "2 of 3"

    def test_progress_reports_at_the_end(self, caplog):
        with caplog.at_level(logging.INFO):
            assert list(progress(range(3), delay=100, logger=logging.getLogger("test"), objects="drops")) == [0, 1, 2]
        assert "3 drops" in caplog.records[-1].getMessage()

    def test_stopwatch(self):
        with stopwatch("block") as timing:
            pass
        assert timing["seconds"] >= 0

    def test_table_only_rendered_when_enabled(self, caplog):
        log = logging.getLogger("test.table")
        with caplog.at_level(logging.INFO, logger="test.table"):
            log_table(log, logging.DEBUG, "hidden", [[1, 2.0]], headers=["a", "b"])
            log_table(log, logging.INFO, "shown", [[1, 2.0]], headers=["a", "b"])
        assert len(caplog.records) == 1
        assert "2.0000" in caplog.records[0].getMessage()
