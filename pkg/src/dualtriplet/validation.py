"""Input validation helpers shared by the estimator facade."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError


def check_feature_matrix(x, name: str = "X") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise ValueError(f"{name} must be a nonempty 2-D feature matrix")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_labels(y, n_samples: int, name: str = "y") -> list[str]:
    labels = [str(v) for v in np.asarray(y).ravel()]
    if len(labels) != n_samples:
        raise ValueError(f"{name} length {len(labels)} != number of rows {n_samples}")
    return labels


def check_is_fitted(estimator, attribute: str) -> None:
    if getattr(estimator, attribute, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
