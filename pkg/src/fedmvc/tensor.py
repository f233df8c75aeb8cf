"""Dense tensor algebra: unfoldings, n-mode products, Tucker reconstruction.

Tensors are plain ``numpy.ndarray`` objects. Modes are 1-based, as in the
usual ``A x_n L`` notation. Unfoldings and vectorization follow the Kolda
index convention: among the remaining indices the *first* varies fastest,
so column ``j`` of the mode-``n`` unfolding holds the multi-index with

    j = 1 + sum_{l != n} (g_l - 1) * prod_{m < l, m != n} G_m
"""

from dataclasses import dataclass
import warnings

import numpy as np


class TensorShapeError(ValueError):
    """Raised on incompatible tensor shapes, modes or ranks."""


def _check_mode(t, mode):
    if not 1 <= mode <= t.ndim:
        raise TensorShapeError(f"mode {mode} out of range for order-{t.ndim} tensor")


def matricize(t, mode):
    """Mode-``mode`` unfolding of ``t`` into a ``G_mode x prod(others)`` matrix."""
    t = np.asarray(t, dtype=float)
    _check_mode(t, mode)
    return np.moveaxis(t, mode - 1, 0).reshape(t.shape[mode - 1], -1, order="F")


def fold(mat, mode, shape):
    """Inverse of :func:`matricize`."""
    shape = tuple(shape)
    if not 1 <= mode <= len(shape):
        raise TensorShapeError(f"mode {mode} out of range for shape {shape}")
    moved = (shape[mode - 1],) + shape[: mode - 1] + shape[mode:]
    mat = np.asarray(mat, dtype=float)
    if mat.size != int(np.prod(shape)):
        raise TensorShapeError(f"cannot fold {mat.shape} into {shape}")
    return np.moveaxis(mat.reshape(moved, order="F"), 0, mode - 1)


def vectorize(t):
    """Flatten ``t`` with the first index varying fastest."""
    return np.asarray(t, dtype=float).reshape(-1, order="F")


def unvectorize(vec, shape):
    """Inverse of :func:`vectorize`."""
    return np.asarray(vec, dtype=float).reshape(tuple(shape), order="F")


def mode_n_product(t, mat, mode):
    """n-mode product ``t x_mode mat``; ``mat`` is ``J x G_mode``.

    The result replaces extent ``G_mode`` by ``J``.
    """
    t = np.asarray(t, dtype=float)
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    _check_mode(t, mode)
    if mat.shape[1] != t.shape[mode - 1]:
        raise TensorShapeError(
            f"matrix has {mat.shape[1]} columns, mode {mode} has extent {t.shape[mode - 1]}")
    out = np.tensordot(mat, t, axes=([1], [mode - 1]))
    return np.moveaxis(out, 0, mode - 1)


def outer(*vectors):
    """Outer product ``a1 o a2 o ... o aN`` of 1-D vectors."""
    out = np.ones(())
    for vec in vectors:
        out = np.multiply.outer(out, np.asarray(vec, dtype=float))
    return out


def scalar_product(a, b):
    """Sum of elementwise products of two equally shaped tensors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise TensorShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def frobenius_norm(t):
    t = np.asarray(t, dtype=float)
    return float(np.sqrt(scalar_product(t, t)))


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor plus one factor matrix per mode.

    ``reconstruct()`` returns ``core x_1 factors[0] x_2 factors[1] ...``;
    factor ``n`` must have as many columns as ``core.shape[n]``.
    """

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        core = np.asarray(self.core, dtype=float)
        factors = tuple(np.asarray(f, dtype=float) for f in self.factors)
        if len(factors) != core.ndim:
            raise TensorShapeError(
                f"{len(factors)} factors given for an order-{core.ndim} core")
        for n, f in enumerate(factors):
            if f.ndim != 2 or f.shape[1] != core.shape[n]:
                raise TensorShapeError(
                    f"factor {n + 1} has shape {f.shape}, core extent is {core.shape[n]}")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def ranks(self):
        return self.core.shape

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def size(self):
        """Number of stored values (core plus all factors)."""
        return self.core.size + sum(f.size for f in self.factors)

    def reconstruct(self):
        return tucker_reconstruct(self)


def tucker_reconstruct(tucker):
    out = tucker.core
    for n, f in enumerate(tucker.factors, start=1):
        out = mode_n_product(out, f, n)
    return out


def _fix_signs(vecs):
    # largest-magnitude entry of every column made positive
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def hosvd_init(t, ranks):
    """Truncated higher-order SVD of ``t`` at the given multilinear ranks.

    Each factor holds the leading left singular vectors of the matching
    unfolding, with a deterministic sign convention. The core is
    ``t x_1 P^T x_2 Q^T x_3 R^T``.
    """
    t = np.asarray(t, dtype=float)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != t.ndim:
        raise TensorShapeError(f"{len(ranks)} ranks given for an order-{t.ndim} tensor")
    factors = []
    for n, r in enumerate(ranks, start=1):
        if not 1 <= r <= t.shape[n - 1]:
            raise TensorShapeError(
                f"rank {r} invalid for mode {n} with extent {t.shape[n - 1]}")
        u, _, _ = np.linalg.svd(matricize(t, n), full_matrices=False)
        if u.shape[1] < r:
            # fewer columns than rows in the unfolding; complete the basis
            q, _ = np.linalg.qr(np.hstack([u, np.eye(u.shape[0])]))
            u = q
        factors.append(_fix_signs(u[:, :r]))
    core = t
    for n, f in enumerate(factors, start=1):
        core = mode_n_product(core, f.T, n)
    return TuckerFactors(core, tuple(factors))


def _grid_kernel(extent, theta):
    g = np.arange(extent, dtype=float)
    return np.exp(-np.subtract.outer(g, g) ** 2 / (2.0 * theta))


def tensor_distance(x, a, theta=1.0):
    """Heat-kernel tensor distance ``sqrt((x - a)^T P (x - a))``.

    ``P[l, m] = exp(-|q_l - q_m|^2 / (2 theta)) / (2 pi theta)`` where
    ``q_l`` is the grid position of element ``l``. The Gaussian on a grid
    factorizes over modes, so the quadratic form is evaluated as a chain
    of n-mode products and ``P`` is never built.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if x.shape != a.shape:
        raise TensorShapeError(f"shape mismatch {x.shape} vs {a.shape}")
    if theta <= 0:
        raise ValueError("theta must be positive")
    diff = x - a
    smoothed = diff
    for n, extent in enumerate(diff.shape, start=1):
        smoothed = mode_n_product(smoothed, _grid_kernel(extent, theta), n)
    quad = scalar_product(diff, smoothed) / (2.0 * np.pi * theta)
    if quad < 0:
        if quad < -1e-10 * max(1.0, scalar_product(diff, diff)):
            warnings.warn(f"negative quadratic form {quad:.3e} clamped to 0",
                          RuntimeWarning, stacklevel=2)
        quad = 0.0
    return float(np.sqrt(quad))
