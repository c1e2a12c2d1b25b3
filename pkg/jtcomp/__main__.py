import sys

from jtcomp.harness.cli import main

sys.exit(main())
