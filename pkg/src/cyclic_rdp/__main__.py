import sys

from cyclic_rdp.cli import main

sys.exit(main())
