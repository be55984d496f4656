"""Desk-scale EISNet bindings.

The heavy lifting happens in the C++ extension; this package re-exports it.
"""

from ._eisnet import *  # noqa: F401,F403
from ._eisnet import __doc__  # noqa: F401

__version__ = "0.1.0"
