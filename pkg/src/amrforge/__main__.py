import sys

from amrforge.cli import main

sys.exit(main())
