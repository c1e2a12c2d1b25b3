from jtcomp.util.async_lookahead_iterator import AsyncLookaheadIterator
from jtcomp.util.log import BraceMessage, log_table, stopwatch
from jtcomp.util.utils import *
