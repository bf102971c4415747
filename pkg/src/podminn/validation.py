"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.utils import check_array


def check_samples(X, n_features=None, name="X"):
    """Validate a 2D float64 sample array (rows are samples)."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                    input_name=name)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} features, expected {n_features}")
    return X


def check_vector(v, length=None, name="vector"):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if length is not None and v.shape[0] != length:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {length}")
    return v


def check_norm_order(p):
    if p in (2, "2"):
        return 2
    if p in (np.inf, "inf", "∞"):
        return np.inf
    raise ValueError(f"norm order must be 2 or inf, got {p!r}")


def check_same_length(*arrays, names=None):
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        names = names or [f"array{i}" for i in range(len(arrays))]
        detail = ", ".join(f"{n}={len(a)}" for n, a in zip(names, arrays))
        raise ValueError(f"inconsistent sample counts: {detail}")
