"""Heat-kernel multi-view fuzzy c-means for a single client.

The objective is

    J = sum_h v_h^alpha sum_i sum_k u_ik^m (1 - exp(-phi_ikh)),
    phi_ikh = sum_j delta_ijh (x_ijh - a_kjh)^2,

minimized by alternating closed-form membership and view-weight updates
with a fixed-point (majorize-minimize) sweep for the centers.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np
from sklearn.cluster import KMeans, kmeans_plusplus

from .heat_kernel import ESTIMATORS, fked_matrix, heat_kernel_coefficients, weighted_sq_distances


class DegenerateClusterWarning(RuntimeWarning):
    """A center received zero total weight and was left unchanged."""


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the local solver.

    Attributes:
        c: number of clusters.
        m: fuzzifier, > 1.
        alpha: view-weight exponent, > 1.
        max_iters: cap on outer iterations.
        tol: stop when the relative objective change drops below this.
        seed: seed for center initialization.
        estimator: heat-kernel coefficient estimator, ``minmax`` or ``meandev``.
        epsilon: stabilizer of the ``minmax`` estimator.
        center_sweeps: fixed-point center sweeps per outer iteration.
    """

    c: int = 2
    m: float = 2.0
    alpha: float = 2.0
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0
    estimator: str = "minmax"
    epsilon: float = 1e-12
    center_sweeps: int = 1

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self):
        out = []
        if not (isinstance(self.c, (int, np.integer)) and self.c >= 1):
            out.append("c must be an integer >= 1")
        if not self.m > 1:
            out.append("m must be > 1")
        if not self.alpha > 1:
            out.append("alpha must be > 1")
        if not (isinstance(self.max_iters, (int, np.integer)) and self.max_iters >= 1):
            out.append("max_iters must be a positive integer")
        if not self.tol > 0:
            out.append("tol must be > 0")
        if not (isinstance(self.seed, (int, np.integer)) and self.seed >= 0):
            out.append("seed must be a non-negative integer")
        if self.estimator not in ESTIMATORS:
            out.append(f"estimator must be one of {ESTIMATORS}")
        if not self.epsilon > 0:
            out.append("epsilon must be > 0")
        if not (isinstance(self.center_sweeps, (int, np.integer)) and self.center_sweeps >= 1):
            out.append("center_sweeps must be a positive integer")
        return out


@dataclass
class LocalModel:
    memberships: np.ndarray
    centers: list
    view_weights: np.ndarray
    objective_trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def n_clusters(self):
        return self.memberships.shape[1]

    def labels(self):
        """Hard labels by argmax; ties go to the lowest cluster index."""
        return np.argmax(self.memberships, axis=1)


def check_views(views):
    """Validate and convert a sequence of ``n x d_h`` view matrices."""
    views = [np.asarray(x, dtype=float) for x in views]
    if not views:
        raise ValueError("at least one view is required")
    n = views[0].shape[0] if views[0].ndim == 2 else -1
    for h, x in enumerate(views):
        if x.ndim != 2 or x.shape[0] != n or x.shape[1] < 1:
            raise ValueError(f"view {h} has shape {x.shape}; expected ({n}, d) with d >= 1")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"view {h} contains NaN or infinite values")
    if n < 1:
        raise ValueError("data is empty")
    return views


def view_distances(views, centers, coefficients):
    """Per-view distance matrices, shape ``(s, n, c)``."""
    return np.stack([fked_matrix(x, a, d) for x, a, d in zip(views, centers, coefficients)])


def local_objective(views, memberships, centers, view_weights, coefficients, m, alpha):
    dist = view_distances(views, centers, coefficients)
    return objective_from_distances(dist, memberships, view_weights, m, alpha)


def objective_from_distances(dist, memberships, view_weights, m, alpha):
    um = np.asarray(memberships) ** m
    vw = np.asarray(view_weights) ** alpha
    return float(np.einsum("h,ik,hik->", vw, um, dist))


def _simplex_from_costs(costs, power):
    """Rows of ``costs^(-power)`` normalized to 1, computed in log space.

    Rows containing zero costs put equal mass on their zero entries.
    """
    costs = np.atleast_2d(np.asarray(costs, dtype=float))
    out = np.empty_like(costs)
    zero = costs <= 0
    hard = zero.any(axis=1)
    if hard.any():
        z = zero[hard].astype(float)
        out[hard] = z / z.sum(axis=1, keepdims=True)
    soft = ~hard
    if soft.any():
        logw = -power * np.log(costs[soft])
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        out[soft] = w / w.sum(axis=1, keepdims=True)
    return out


def update_memberships(dist, view_weights, m, alpha):
    """Closed-form memberships from per-view distances ``dist[h, i, k]``."""
    costs = np.einsum("h,hik->ik", np.asarray(view_weights) ** alpha, dist)
    if not np.all(np.isfinite(costs)):
        raise ValueError("non-finite aggregated costs")
    return _simplex_from_costs(costs, 1.0 / (m - 1.0))


def view_costs(dist, memberships, m):
    """``E_h = sum_i sum_k u_ik^m dist[h, i, k]``."""
    return np.einsum("ik,hik->h", np.asarray(memberships) ** m, dist)


def update_view_weights(costs, alpha):
    """Closed-form view weights from per-view costs ``E_h``."""
    costs = np.asarray(costs, dtype=float)
    if not np.all(np.isfinite(costs)):
        raise ValueError("non-finite view costs")
    return _simplex_from_costs(costs[None, :], 1.0 / (alpha - 1.0))[0]


def center_weights(view, center, delta, memberships_m):
    """Fixed-point weights ``u_ik^m delta_ij exp(-phi_ik)``, shape ``(n, c, d)``.

    ``exp(-phi)`` is rescaled per cluster by its largest value over samples;
    that factor cancels in the weighted mean. ``v_h^alpha`` cancels too and
    is left out.
    """
    phi = weighted_sq_distances(view, center, delta)
    decay = np.exp(-(phi - phi.min(axis=0, keepdims=True)))
    return (memberships_m * decay)[:, :, None] * delta[:, None, :]


def update_centers(views, memberships, coefficients, centers, m, sweeps=1):
    """One or more fixed-point sweeps of the center update.

    Each sweep sets ``a_kj = sum_i w_ikj x_ij / sum_i w_ikj`` with weights
    evaluated at the current centers; this minimizes the tangent majorizer
    of the concave map ``phi -> 1 - exp(-phi)``, so the objective never
    increases. Coordinates with zero total weight keep their old value, and
    a center whose own cost term would rise by rounding is not moved.
    """
    um = np.asarray(memberships) ** m
    new = []
    for h, (x, a, d) in enumerate(zip(views, centers, coefficients)):
        a = np.array(a, dtype=float)
        for _ in range(sweeps):
            w = center_weights(x, a, d, um)
            num = np.einsum("ikj,ij->kj", w, x)
            den = w.sum(axis=0)
            ok = den > 0
            if not ok.all():
                bad = sorted({int(k) for k in np.nonzero(~ok)[0]})
                warnings.warn(f"view {h}: zero weight for clusters {bad}; centers kept",
                              DegenerateClusterWarning, stacklevel=2)
            cand = np.where(ok, num / np.where(ok, den, 1.0), a)
            before = np.einsum("ik,ik->k", um, fked_matrix(x, a, d))
            after = np.einsum("ik,ik->k", um, fked_matrix(x, cand, d))
            a = np.where((after <= before)[:, None], cand, a)
        new.append(a)
    return new


def init_centers(views, c, seed, refine=True):
    """Initial centers from the concatenated views, split back per view.

    k-means++ seeds, refined by Lloyd iterations (best of a few seeded
    restarts) unless ``refine`` is false. Kernel distances saturate far
    from a center, so two seeds in one group would never separate.
    """
    stacked = np.hstack(views)
    if c > stacked.shape[0]:
        raise ValueError(f"c={c} exceeds the number of samples {stacked.shape[0]}")
    if not refine:
        _, idx = kmeans_plusplus(stacked, c, random_state=seed)
        return [x[idx].copy() for x in views]
    km = KMeans(n_clusters=c, init="k-means++", n_init=4, random_state=seed).fit(stacked)
    bounds = np.cumsum([0] + [x.shape[1] for x in views])
    return [km.cluster_centers_[:, lo:hi].copy() for lo, hi in zip(bounds[:-1], bounds[1:])]


def relative_change(prev, cur):
    return abs(prev - cur) / max(abs(prev), np.finfo(float).tiny)


def fit_local(views, config, initial_centers=None, initial_weights=None,
              coefficients=None, monitor=None):
    """Alternate memberships, centers and view weights until convergence.

    Args:
        views: sequence of ``n x d_h`` arrays sharing the sample axis.
        config: :class:`SolverConfig`.
        initial_centers: per-view ``c x d_h`` arrays; k-means++ when omitted.
        initial_weights: initial view weights; uniform when omitted.
        coefficients: precomputed heat-kernel coefficients; estimated from
            ``views`` when omitted.
        monitor: optional callable ``monitor(stage, objective, state)``
            invoked after every update with stage ``"U"``, ``"A"`` or
            ``"V"``; ``state`` is a LocalModel of the current iterates.

    Returns:
        LocalModel
    """
    views = check_views(views)
    c, m, alpha = config.c, config.m, config.alpha
    if coefficients is None:
        coefficients = heat_kernel_coefficients(views, config.estimator, config.epsilon)
    if initial_centers is None:
        centers = init_centers(views, c, config.seed)
    else:
        centers = [np.array(a, dtype=float) for a in initial_centers]
        for h, (x, a) in enumerate(zip(views, centers)):
            if a.shape != (c, x.shape[1]):
                raise ValueError(f"initial centers of view {h} have shape {a.shape}, "
                                 f"expected {(c, x.shape[1])}")
        if len(centers) != len(views):
            raise ValueError("one center matrix per view is required")
    s = len(views)
    v = np.full(s, 1.0 / s) if initial_weights is None else np.array(initial_weights, dtype=float)

    model = LocalModel(np.full((views[0].shape[0], c), 1.0 / c), centers, v)
    for _ in range(config.max_iters):
        dist = view_distances(views, centers, coefficients)
        u = update_memberships(dist, v, m, alpha)
        if monitor is not None:
            monitor("U", objective_from_distances(dist, u, v, m, alpha),
                    LocalModel(u, centers, v))
        centers = update_centers(views, u, coefficients, centers, m, config.center_sweeps)
        dist = view_distances(views, centers, coefficients)
        if monitor is not None:
            monitor("A", objective_from_distances(dist, u, v, m, alpha),
                    LocalModel(u, centers, v))
        v = update_view_weights(view_costs(dist, u, m), alpha)
        obj = objective_from_distances(dist, u, v, m, alpha)
        if monitor is not None:
            monitor("V", obj, LocalModel(u, centers, v))
        model = LocalModel(u, centers, v, model.objective_trace + [obj])
        trace = model.objective_trace
        if len(trace) > 1 and relative_change(trace[-2], trace[-1]) < config.tol:
            model.converged = True
            break
    return model


def predict_memberships(views, centers, view_weights, coefficients, m, alpha):
    """Memberships implied by fixed centers and view weights."""
    dist = view_distances(views, centers, coefficients)
    return update_memberships(dist, view_weights, m, alpha)
