#!/usr/bin/env python3
"""
SDE Perturbation Lab - Launcher

Simple entry point script that runs one experiment from a checkout.

Usage:
    python run.py vdp-rate --config configs/vdp-rate.ini
    python -m sde_perturbation vdp-rate --config configs/vdp-rate.ini

Author: Anach
License: See LICENSE file
"""

import sys

from sde_perturbation import main

if __name__ == "__main__":
    sys.exit(main())
