import sys

from tfseg.cli import main

sys.exit(main())
