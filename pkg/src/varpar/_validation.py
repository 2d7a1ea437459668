"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import InvalidArgumentError


def check_int(value, name: str, *, min_value: int | None = None, max_value: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if min_value is not None and value < min_value:
        raise InvalidArgumentError(f"{name} must be >= {min_value}, got {value}")
    if max_value is not None and value > max_value:
        raise InvalidArgumentError(f"{name} must be <= {max_value}, got {value}")
    return value


def check_k(k, num_classes: int) -> int:
    return check_int(k, "k", min_value=1, max_value=num_classes)


def check_scores(X, *, ndim: int | tuple[int, ...] = (1, 2, 3), name: str = "X", allow_nan: bool = False) -> np.ndarray:
    """Convert to a float array of the allowed rank and reject non-finite entries."""
    X = np.asarray(X)
    if X.dtype.kind not in "fiu":
        raise InvalidArgumentError(f"{name} must be numeric, got dtype {X.dtype}")
    allowed = (ndim,) if isinstance(ndim, int) else ndim
    if X.ndim not in allowed:
        raise InvalidArgumentError(f"{name} must have ndim in {allowed}, got shape {X.shape}")
    if X.shape[-1] < 2:
        raise InvalidArgumentError(f"{name} needs at least 2 classes on its last axis")
    bad = np.isinf(X) if allow_nan else ~np.isfinite(X)
    if X.dtype.kind == "f" and bad.any():
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return X


def check_is_fitted(estimator, attribute: str) -> None:
    from sklearn.exceptions import NotFittedError

    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; call 'fit' first."
        )
