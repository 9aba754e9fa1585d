#!/usr/bin/env python3
"""Start the chat service. Same flags as `python -m tandem.service`."""
import sys

from tandem.service import main

if __name__ == "__main__":
    sys.exit(main())
