#!/usr/bin/env python3
"""Run a harness scenario. Same CLI as `python -m tandem.harness`."""
import sys

from tandem.harness import main

if __name__ == "__main__":
    sys.exit(main())
