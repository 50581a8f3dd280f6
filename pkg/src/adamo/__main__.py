import sys

from adamo.cli import main

sys.exit(main())
