"""Allow ``python -m rydsim``."""
import sys

from .cli import main

sys.exit(main())
