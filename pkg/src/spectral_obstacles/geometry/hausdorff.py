"""Hausdorff distance between finite planar point sets."""

import numpy as np
from scipy.spatial import cKDTree

from ..errors import ParameterError


def _as_points(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        raise ParameterError(f"{name} is empty")
    return a


def directed_hausdorff(a, b):
    """``sup_{p in a} dist(p, b)``; exact over the samples."""
    a, b = _as_points(a, "A"), _as_points(b, "B")
    d, _ = cKDTree(b).query(a)
    return float(d.max())


def hausdorff_distance(a, b):
    return max(directed_hausdorff(a, b), directed_hausdorff(b, a))
