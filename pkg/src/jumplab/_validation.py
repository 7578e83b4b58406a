"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from .exceptions import ConfigurationError, DomainError


def check_scalar(value, name, *, lower=None, upper=None, include_lower=True,
                 include_upper=True, error=DomainError):
    """Validate a real scalar against optional bounds and return it as float."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise error(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise error(f"{name} must be finite, got {value}")
    if lower is not None:
        if value < lower or (value == lower and not include_lower):
            op = ">=" if include_lower else ">"
            raise error(f"{name} must be {op} {lower}, got {value}")
    if upper is not None:
        if value > upper or (value == upper and not include_upper):
            op = "<=" if include_upper else "<"
            raise error(f"{name} must be {op} {upper}, got {value}")
    return value


def check_int(value, name, *, lower=None, error=ConfigurationError):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise error(f"{name} must be an integer, got {value!r}")
    if lower is not None and value < lower:
        raise error(f"{name} must be >= {lower}, got {value}")
    return int(value)


def check_points(x, dimension, name="x"):
    """Return ``x`` as a float array of shape (..., dimension).

    Scalars and 1-D arrays are accepted in dimension 1.
    """
    arr = np.asarray(x, dtype=float)
    if dimension == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., np.newaxis]
    if arr.shape[-1] != dimension:
        raise DomainError(
            f"{name} has trailing dimension {arr.shape[-1]}, expected {dimension}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite coordinates")
    return arr


def check_point(x, dimension, name="x"):
    """Validate a single point and return it with shape (dimension,)."""
    arr = check_points(x, dimension, name)
    if arr.shape != (dimension,):
        raise DomainError(f"{name} must be a single point, got shape {arr.shape}")
    return arr


def check_site_function(f, n_sites, name="f"):
    """Return ``f`` as a float vector (or matrix of column vectors) over the sites."""
    if callable(f):
        raise DomainError(f"{name} must be an array of site values, not a callable")
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n_sites, float(arr))
    if arr.shape[0] != n_sites or arr.ndim > 2:
        raise DomainError(
            f"{name} must have {n_sites} site values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite values")
    return arr


def check_box(box, dimension):
    """Normalise a box spec to ``(lo, hi)`` arrays of length ``dimension``.

    Accepts ``(lo, hi)`` scalars for a cube or a sequence of per-axis pairs.
    """
    arr = np.asarray(box, dtype=float)
    if arr.shape == (2,):
        lo = np.full(dimension, arr[0])
        hi = np.full(dimension, arr[1])
    elif arr.shape == (dimension, 2):
        lo, hi = arr[:, 0].copy(), arr[:, 1].copy()
    else:
        raise ConfigurationError(f"box must be (lo, hi) or {dimension} such pairs")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ConfigurationError("box bounds must be finite")
    if np.any(hi <= lo):
        raise ConfigurationError(f"box is empty: lo={lo}, hi={hi}")
    return lo, hi
