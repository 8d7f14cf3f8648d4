"""Version handling and run metadata for SDE Perturbation Lab."""

import logging
import os
import platform
import subprocess
import sys
from datetime import datetime, timezone
from typing import Any, Dict, Optional

import numpy as np
import scipy
from packaging import version

from ..config.defaults import SUPPORTED_FORMAT_VERSION

logger = logging.getLogger(__name__)


def get_current_version() -> str:
    """Get current package version.

    Returns:
        Current version string
    """
    try:
        from sde_perturbation import __version__
        return __version__
    except ImportError:
        return "0.0.0"


def is_supported_format(format_version: str, supported: str = SUPPORTED_FORMAT_VERSION) -> bool:
    """True when a configuration document of ``format_version`` can be read.

    Documents written for a newer major version are rejected; minor
    additions are accepted.
    """
    try:
        requested = version.Version(str(format_version))
    except version.InvalidVersion:
        return False
    return requested.major <= version.Version(supported).major


def git_commit(path: Optional[str] = None) -> Optional[str]:
    """Commit hash of the checkout containing ``path``, or None outside git."""
    cwd = path or os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(['git', 'rev-parse', 'HEAD'], cwd=cwd, capture_output=True,
                             text=True, timeout=5, check=False)
    except (OSError, subprocess.SubprocessError):
        return None
    commit = out.stdout.strip()
    return commit if out.returncode == 0 and commit else None


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


def run_metadata() -> Dict[str, Any]:
    """Environment description stored in every report."""
    current = get_current_version()
    try:
        release = str(version.Version(current))
    except version.InvalidVersion:
        logger.warning("Package version %r is not PEP 440 compliant", current)
        release = current
    return {
        'package_version': release,
        'git_commit': git_commit(),
        'python_version': sys.version.split()[0],
        'numpy_version': np.__version__,
        'scipy_version': scipy.__version__,
        'platform': platform.platform(),
    }
