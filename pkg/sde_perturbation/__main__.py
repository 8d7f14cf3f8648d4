#!/usr/bin/env python3
"""
Allow running SDE Perturbation Lab as a module: python -m sde_perturbation
"""

import sys

from .main import main

if __name__ == "__main__":
    sys.exit(main())
