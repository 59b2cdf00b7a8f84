import sys

from cloudecode.cli import main

sys.exit(main())
