import sys

from translot.cli import main

sys.exit(main())
