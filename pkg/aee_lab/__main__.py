import sys

from aee_lab.main import main

sys.exit(main())
