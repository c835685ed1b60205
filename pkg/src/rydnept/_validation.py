"""Input coercion shared by the analysis functions and estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def as_1d(a, name: str = "array") -> np.ndarray:
    arr = check_array(np.asarray(a, dtype=float).reshape(-1, 1), ensure_all_finite=True,
                      input_name=name, ensure_min_samples=1)
    return arr[:, 0]


def check_xy(x, y):
    x = as_1d(x, "x")
    y = as_1d(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"x and y lengths differ: {len(x)} != {len(y)}")
    d = np.diff(x)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("x must be strictly monotone")
    return x, y


def sorted_xy(trace):
    """(x, y) with x ascending from a Trace or an ``(x, y)`` pair."""
    if hasattr(trace, "x") and hasattr(trace, "y"):
        x, y = trace.x, trace.y
    else:
        x, y = trace
    x, y = check_xy(x, y)
    if len(x) > 1 and x[0] > x[-1]:
        return x[::-1].copy(), y[::-1].copy()
    return x, y
