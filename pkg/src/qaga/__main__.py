import sys

from qaga.cli import main

sys.exit(main())
