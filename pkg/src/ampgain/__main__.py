import sys

from ampgain.cli import main

sys.exit(main())
