"""Input validation helpers shared by the public functions and the estimator."""

import numbers

import numpy as np
from sklearn.utils import check_array


def check_points(X, dim=None, name="X"):
    """Validate a batch of states; returns a float array of shape ``(m, n)``.

    A single 1-D state is promoted to a batch of one.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=float, ensure_2d=True, ensure_all_finite=True,
                    input_name=name, ensure_min_samples=1)
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{name} has {X.shape[1]} features but the system has dimension {dim}")
    return X


def check_point(x, dim=None, name="x"):
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")
    if dim is not None and x.shape != (dim,):
        raise ValueError(f"{name} must have length {dim}")
    return x


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number")
    if value < 0 or (strict and value == 0):
        raise ValueError(f"{name} must be {'positive' if strict else 'non-negative'}")
    return float(value)


def check_index(i, dim):
    if not isinstance(i, numbers.Integral) or not 0 <= i < dim:
        raise IndexError(f"eigenvalue index {i} out of range for dimension {dim}")
    return int(i)
