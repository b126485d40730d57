import sys

from lbflats.cli import main

sys.exit(main())
