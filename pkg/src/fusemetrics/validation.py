"""Input validation helpers.

All public entry points funnel image arguments through :func:`check_image`
so the whole package shares one convention: a grayscale image is a 2-D
float64 array with every value finite and inside [0, 1].
"""

import numpy as np

from .errors import DimensionMismatchError, RangeError, TooSmallError

__all__ = ["check_image", "check_same_shape", "check_min_size"]


def check_image(img, name="image"):
    """Coerce ``img`` to a float64 2-D array and validate the [0, 1] contract.

    Returns the validated array (a view when the input already is float64).
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError(
            f"{name}: expected a 2-D grayscale array, got ndim={arr.ndim}")
    if arr.size == 0:
        raise TooSmallError(f"{name}: empty array")
    if not np.isfinite(arr).all():
        raise RangeError(f"{name}: contains non-finite values")
    lo, hi = float(arr.min()), float(arr.max())
    if lo < 0.0 or hi > 1.0:
        raise RangeError(
            f"{name}: values must lie in [0, 1], found [{lo:.6g}, {hi:.6g}]")
    return arr


def check_same_shape(a, b, name_a="first image", name_b="second image"):
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"{name_a} has shape {a.shape} but {name_b} has shape {b.shape}")


def check_min_size(img, min_h, min_w, op=""):
    h, w = img.shape
    if h < min_h or w < min_w:
        raise TooSmallError(
            f"{op or 'operation'} needs at least {min_h}x{min_w} pixels, "
            f"got {h}x{w}")
