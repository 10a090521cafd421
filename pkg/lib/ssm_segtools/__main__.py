import sys

from ssm_segtools.cli import main

sys.exit(main())
