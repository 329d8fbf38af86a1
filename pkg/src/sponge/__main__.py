import sys

from sponge.cli import main

sys.exit(main())
