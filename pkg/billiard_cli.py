#!/usr/bin/env python3
"""
Command line entry point for the billiard lab

Usage: python billiard_cli.py <experiment> [--table NAME|FILE] [--config FILE]
       [--output DIR] [--seed N] [experiment flags]
"""

import sys
from pathlib import Path

# Add the project root to the path
sys.path.insert(0, str(Path(__file__).parent))

from billiards.cli import main

if __name__ == '__main__':
    sys.exit(main())
