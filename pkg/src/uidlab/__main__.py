"""Allow ``python -m uidlab`` as an alias for the ``uidlab`` script."""

import sys

from .report_cli import main

if __name__ == "__main__":
    sys.exit(main())
