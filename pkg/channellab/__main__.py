import sys

from channellab.cli import main

sys.exit(main())
