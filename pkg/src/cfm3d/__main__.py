import sys

from cfm3d.cli import main

sys.exit(main())
