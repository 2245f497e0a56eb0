import sys

from ksip.cli import main

sys.exit(main())
