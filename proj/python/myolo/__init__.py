"""Attention-augmented feature fusion, polygon encoding and saliency metrics.

Arrays are numpy float64 in (n, c, h, w) order; masks are 2-D boolean arrays.
"""

from ._myolo import *  # noqa: F401,F403
from ._myolo import __doc__  # noqa: F401
