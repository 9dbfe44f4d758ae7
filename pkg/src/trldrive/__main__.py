import sys

from trldrive.cli import main

sys.exit(main())
