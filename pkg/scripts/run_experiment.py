#!/usr/bin/env python3
"""Run one JSON-configured experiment; same flags as `python3 -m twofactor`."""
import sys

from twofactor.cli import main

if __name__ == "__main__":
    sys.exit(main())
