"""Run the selbayes command line."""

import sys

from .cli import main

sys.exit(main())
