"""Heat-kernel coefficients and kernel Euclidean distances.

The kernel Euclidean distance between a sample ``x`` and a center ``a`` of
one view is ``1 - exp(-sum_j delta_j (x_j - a_j)^2)``, always in ``[0, 1)``.
The coefficients ``delta`` are per-sample, per-feature weights estimated
once from the data of a view.
"""

import numpy as np

ESTIMATORS = ("minmax", "meandev")


def hkc_minmax(view, epsilon=1e-12):
    """Column-wise min-max coefficients ``(x - min) / (max - min + eps)``."""
    x = np.asarray(view, dtype=float)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    return (x - lo) / (hi - lo + epsilon)


def hkc_meandev(view):
    """Absolute deviation of each entry from its column mean."""
    x = np.asarray(view, dtype=float)
    return np.abs(x - x.mean(axis=0))


def heat_kernel_coefficients(views, estimator="minmax", epsilon=1e-12):
    """Coefficient matrix for every view, same shapes as the views."""
    if estimator == "minmax":
        return [hkc_minmax(x, epsilon) for x in views]
    if estimator == "meandev":
        return [hkc_meandev(x) for x in views]
    raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")


def ked(x, a, delta):
    """Kernel Euclidean distance between two vectors."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if not x.shape == a.shape == delta.shape:
        raise ValueError(f"length mismatch: {x.shape}, {a.shape}, {delta.shape}")
    return float(-np.expm1(-np.sum(delta * (x - a) ** 2)))


def weighted_sq_distances(view, centers, delta):
    """``phi[i, k] = sum_j delta[i, j] (x[i, j] - a[k, j])^2``."""
    diff = view[:, None, :] - centers[None, :, :]
    return np.einsum("ikj,ij->ik", diff * diff, delta)


def fked_matrix(view, centers, delta):
    """Per-view distance of every sample to every center, shape ``(n, c)``."""
    return -np.expm1(-weighted_sq_distances(view, centers, delta))


def fked_per_view(views, centers, coefficients, i, k, h):
    """Distance of sample ``i`` to center ``k`` restricted to view ``h``."""
    return ked(views[h][i], centers[h][k], coefficients[h][i])
