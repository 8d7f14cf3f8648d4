"""SDE Perturbation Lab - numerical experiments on perturbation identities for SDEs."""

__version__ = "1.0.0"
__author__ = "Anach"

from .main import main, run

__all__ = ['main', 'run', '__version__', '__author__']
