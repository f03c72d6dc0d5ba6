import sys

from aiosod.cli import main

sys.exit(main())
