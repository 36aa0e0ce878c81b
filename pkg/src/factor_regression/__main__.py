"""Allows `python -m factor_regression`."""
import sys

from factor_regression.cli import main

if __name__ == "__main__":
    sys.exit(main())
