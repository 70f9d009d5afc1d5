import sys

from fidtrust.cli import main

sys.exit(main())
