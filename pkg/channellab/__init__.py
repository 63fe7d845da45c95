"""Numerical laboratory for channels of energy of the linearized energy-critical radial wave equation."""

import logging

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.3.0"
