import sys

from spair.cli import main

sys.exit(main())
