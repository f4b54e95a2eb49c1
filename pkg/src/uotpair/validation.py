"""Input checks shared by the estimators."""

import numpy as np
from sklearn.exceptions import NotFittedError

from .exceptions import DimensionMismatch, EmptySample
from .measures import check_in_cube


def check_points(points, dim=None, allow_empty=False):
    """Coerce to a float ``(n, d)`` array inside the unit cube.

    A 1D input is read as ``n`` scalar points when ``dim`` is 1 or unknown.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts[:, None] if dim in (None, 1) else pts.reshape(1, -1)
    if pts.ndim != 2:
        raise ValueError(f"expected a 2D array of points, got shape {pts.shape}")
    if dim is not None and pts.shape[1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {pts.shape[1]}")
    if pts.shape[0] == 0 and not allow_empty:
        raise EmptySample("no points given")
    check_in_cube(pts)
    return pts


def check_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call 'fit' first")
