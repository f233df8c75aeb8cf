"""Tensorized multi-view fuzzy clustering with Tucker-decomposed centers.

Views are zero-padded into an ``n x D x s`` tensor. The ``c x D x s``
center tensor is kept as ``G x_1 P x_2 Q x_3 R`` with ``P`` square
(``c x c``). Memberships and view weights use the kernel distance on the
unpadded part of each view; core and factors are refit by alternating
least squares on the weighted squared-error majorizer of that distance.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from .heat_kernel import heat_kernel_coefficients
from .local import (SolverConfig, check_views, init_centers, objective_from_distances,
                    relative_change, update_memberships, update_view_weights, view_costs)
from .tensor import TuckerFactors, hosvd_init, matricize, mode_n_product, tucker_reconstruct

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TensorizedView:
    """Zero-padded ``n x D x s`` data tensor.

    ``mask[i, j, h]`` is true for real feature slots (``j < dims[h]``).
    """

    tensor: np.ndarray
    mask: np.ndarray
    dims: tuple

    @property
    def shape(self):
        return self.tensor.shape

    def view(self, h):
        """Unpadded matrix of view ``h``."""
        return self.tensor[:, : self.dims[h], h]

    def views(self):
        return [self.view(h) for h in range(len(self.dims))]


def tensorize_views(views):
    views = check_views(views)
    n = views[0].shape[0]
    dims = tuple(x.shape[1] for x in views)
    big_d = max(dims)
    tensor = np.zeros((n, big_d, len(views)))
    mask = np.zeros(tensor.shape, dtype=bool)
    for h, x in enumerate(views):
        tensor[:, : dims[h], h] = x
        mask[:, : dims[h], h] = True
    return TensorizedView(tensor, mask, dims)


def pad_views(mats, big_d):
    """Stack per-view ``r x d_h`` matrices into an ``r x D x s`` tensor."""
    out = np.zeros((mats[0].shape[0], big_d, len(mats)))
    for h, a in enumerate(mats):
        out[:, : a.shape[1], h] = a
    return out


def unpad_views(tensor, dims):
    return [tensor[:, :d, h].copy() for h, d in enumerate(dims)]


def tensor_coefficients(tv, estimator="minmax", epsilon=1e-12):
    """Heat-kernel coefficients per view, zero on padded slots."""
    return pad_views(heat_kernel_coefficients(tv.views(), estimator, epsilon), tv.shape[1])


def _phi(tv, centers, coefficients):
    # phi[h, i, k]; padded slots carry zero coefficients and drop out
    diff = tv.tensor[:, None, :, :] - centers[None, :, :, :]
    return np.einsum("ikjh,ijh->hik", diff * diff, coefficients * tv.mask)


def tked_all(tv, centers, coefficients):
    """Distances of every sample to every center per view, ``(s, n, c)``."""
    return -np.expm1(-_phi(tv, centers, coefficients))


def tked(tv, centers, coefficients, i, k, h):
    n, _, s = tv.shape
    c = centers.shape[0]
    if not (0 <= i < n and 0 <= k < c and 0 <= h < s):
        raise IndexError(f"index (i={i}, k={k}, h={h}) out of range")
    d = tv.dims[h]
    diff = tv.tensor[i, :d, h] - centers[k, :d, h]
    return float(-np.expm1(-np.sum(coefficients[i, :d, h] * diff * diff)))


def tensor_objective(tv, memberships, centers, view_weights, coefficients, m, alpha):
    dist = tked_all(tv, centers, coefficients)
    return objective_from_distances(dist, memberships, view_weights, m, alpha)


@dataclass(frozen=True)
class Surrogate:
    """Weighted least-squares majorizer ``sum weights * (A - target)^2``.

    Both arrays have the center shape ``c x D x s``. Where the weight is
    zero the target is irrelevant and holds the expansion point.
    """

    weights: np.ndarray
    target: np.ndarray

    def value(self, centers):
        return float(np.sum(self.weights * (centers - self.target) ** 2))


def ls_surrogate(tv, memberships, view_weights, centers, coefficients, m, alpha):
    """Majorizer of the kernel objective around ``centers``.

    Per-sample weights ``u_ik^m v_h^alpha delta_ijh exp(-phi_ikh)`` are
    frozen at ``centers`` and pooled over samples.
    """
    decay = np.exp(-_phi(tv, centers, coefficients))          # (s, n, c)
    um = np.asarray(memberships) ** m
    vw = np.asarray(view_weights) ** alpha
    w = np.einsum("h,ik,hik->ikh", vw, um, decay)              # (n, c, s)
    delta = coefficients * tv.mask
    omega = np.einsum("ikh,ijh->kjh", w, delta)
    num = np.einsum("ikh,ijh->kjh", w, delta * tv.tensor)
    ok = omega > 0
    target = np.where(ok, num / np.where(ok, omega, 1.0), centers)
    return Surrogate(omega, target)


def _weighted_lstsq(design, rhs, weights, current):
    """Minimize ``sum weights * (design @ x - rhs)^2`` starting from ``current``.

    The step is the minimum-norm least-squares correction, so directions
    the data does not constrain keep their current value.
    """
    sw = np.sqrt(weights)
    step, _, rank, _ = np.linalg.lstsq(design * sw[:, None], sw * (rhs - design @ current),
                                       rcond=None)
    if rank < design.shape[1]:
        log.debug("rank-deficient least squares (%d < %d); free directions kept",
                  rank, design.shape[1])
    return current + step


def update_core(surrogate, tucker):
    """Core minimizing the surrogate with all factors fixed."""
    p, q, r = tucker.factors
    design = np.kron(np.kron(p, q), r)
    core = _weighted_lstsq(design, surrogate.target.ravel(), surrogate.weights.ravel(),
                           tucker.core.ravel())
    return core.reshape(tucker.core.shape)


def update_factor(surrogate, tucker, mode):
    """Factor ``mode`` (1, 2 or 3) minimizing the surrogate, others fixed.

    The mode unfolding of the centers is ``factor @ basis``; rows of the
    factor decouple into independent weighted least-squares problems.
    """
    basis = tucker.core
    for n, f in enumerate(tucker.factors, start=1):
        if n != mode:
            basis = mode_n_product(basis, f, n)
    basis = matricize(basis, mode)
    weights = matricize(surrogate.weights, mode)
    target = matricize(surrogate.target, mode)
    old = tucker.factors[mode - 1]
    new = np.empty_like(old)
    for row in range(old.shape[0]):
        new[row] = _weighted_lstsq(basis.T, target[row], weights[row], old[row])
    return new


def _replace_factor(tucker, mode, factor):
    factors = list(tucker.factors)
    factors[mode - 1] = factor
    return TuckerFactors(tucker.core, tuple(factors))


def als_sweep(surrogate, tucker, monitor=None):
    """Core, then P, Q, R; each step does not increase the surrogate."""
    tucker = TuckerFactors(update_core(surrogate, tucker), tucker.factors)
    if monitor is not None:
        monitor("G", tucker)
    for mode, name in zip((1, 2, 3), "PQR"):
        tucker = _replace_factor(tucker, mode, update_factor(surrogate, tucker, mode))
        if monitor is not None:
            monitor(name, tucker)
    return tucker


@dataclass
class TensorizedModel:
    memberships: np.ndarray
    tucker: TuckerFactors
    view_weights: np.ndarray
    objective_trace: list = field(default_factory=list)
    surrogate_trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def centers(self):
        return tucker_reconstruct(self.tucker)

    def view_centers(self, dims):
        return unpad_views(self.centers, dims)

    def labels(self):
        return np.argmax(self.memberships, axis=1)


def tucker_storage(c, big_d, s, r2, r3):
    """Stored values of a ``(c, r2, r3)`` core with ``P, Q, R``."""
    return c * r2 * r3 + c * c + big_d * r2 + s * r3


def initial_tucker(tv, c, ranks, seed, initial_centers=None):
    """Tucker factors of the padded initial centers, with ``P`` the identity.

    ``initial_centers`` are per-view ``c x d_h`` matrices; seeded k-means
    centers are used when omitted.
    """
    r2, r3 = ranks
    if initial_centers is None:
        initial_centers = init_centers(tv.views(), c, seed)
    dense = pad_views(initial_centers, tv.shape[1])
    hs = hosvd_init(dense, (c, r2, r3))
    p = hs.factors[0]
    return TuckerFactors(mode_n_product(hs.core, p, 1), (np.eye(c),) + hs.factors[1:])


def _check_ranks(tv, c, ranks):
    _, big_d, s = tv.shape
    r2, r3 = ranks
    if not (1 <= r2 <= big_d and 1 <= r3 <= s):
        raise ValueError(f"ranks (r2={r2}, r3={r3}) must satisfy 1 <= r2 <= D={big_d} "
                         f"and 1 <= r3 <= s={s}")


def fit_tensorized(tv, config, ranks=None, initial=None, initial_weights=None,
                   coefficients=None, monitor=None):
    """Alternate memberships, ALS on the Tucker centers, and view weights.

    Args:
        tv: :class:`TensorizedView` (or a list of view matrices).
        config: :class:`~fedmvc.local.SolverConfig`.
        ranks: ``(r2, r3)``; taken from ``initial`` when given.
        initial: starting :class:`TuckerFactors`; built from seeded
            k-means centers by truncated HOSVD when omitted.
        initial_weights: starting view weights, uniform by default.
        coefficients: padded heat-kernel coefficients, ``n x D x s``.
        monitor: optional ``monitor(stage, objective)``; stages ``U``,
            ``G``, ``P``, ``Q``, ``R`` and ``V``. For the ALS stages the
            value passed is the surrogate, not the kernel objective.
    """
    if not isinstance(tv, TensorizedView):
        tv = tensorize_views(tv)
    c, m, alpha = config.c, config.m, config.alpha
    _, _, s = tv.shape
    if initial is None:
        if ranks is None:
            raise ValueError("ranks are required without initial factors")
        _check_ranks(tv, c, ranks)
        tucker = initial_tucker(tv, c, ranks, config.seed)
    else:
        tucker = initial
        if tucker.shape != (c,) + tv.shape[1:]:
            raise ValueError(f"initial factors reconstruct to {tucker.shape}, "
                             f"expected {(c,) + tv.shape[1:]}")
        _check_ranks(tv, c, tucker.ranks[1:])
    if coefficients is None:
        coefficients = tensor_coefficients(tv, config.estimator, config.epsilon)
    v = np.full(s, 1.0 / s) if initial_weights is None else np.array(initial_weights, dtype=float)

    model = TensorizedModel(np.full((tv.shape[0], c), 1.0 / c), tucker, v)
    for _ in range(config.max_iters):
        centers = tucker_reconstruct(tucker)
        dist = tked_all(tv, centers, coefficients)
        u = update_memberships(dist, v, m, alpha)
        if monitor is not None:
            monitor("U", objective_from_distances(dist, u, v, m, alpha))
        sur = ls_surrogate(tv, u, v, centers, coefficients, m, alpha)
        hook = None if monitor is None else (
            lambda stage, tk: monitor(stage, sur.value(tucker_reconstruct(tk))))
        tucker = als_sweep(sur, tucker, hook)
        centers = tucker_reconstruct(tucker)
        dist = tked_all(tv, centers, coefficients)
        v = update_view_weights(view_costs(dist, u, m), alpha)
        obj = objective_from_distances(dist, u, v, m, alpha)
        if monitor is not None:
            monitor("V", obj)
        model = TensorizedModel(u, tucker, v, model.objective_trace + [obj],
                                model.surrogate_trace + [sur.value(centers)])
        trace = model.objective_trace
        if len(trace) > 1 and relative_change(trace[-2], trace[-1]) < config.tol:
            model.converged = True
            break
    return model


__all__ = [
    "SolverConfig", "TensorizedView", "TensorizedModel", "Surrogate", "tensorize_views",
    "tensor_coefficients", "tked", "tked_all", "tensor_objective", "ls_surrogate",
    "update_core", "update_factor", "als_sweep", "fit_tensorized", "initial_tucker",
    "tucker_storage", "pad_views", "unpad_views",
]
