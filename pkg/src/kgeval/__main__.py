import sys

from kgeval.cli import main

sys.exit(main())
