import sys

from fimcheck.cli import main

sys.exit(main())
