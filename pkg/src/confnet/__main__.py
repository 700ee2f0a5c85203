import sys

from confnet.cli import main

sys.exit(main())
