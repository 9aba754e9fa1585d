#!/usr/bin/env python3
"""Terminal chat REPL. Same flags as `python -m tandem.repl`."""
import sys

from tandem.repl import main

if __name__ == "__main__":
    sys.exit(main())
