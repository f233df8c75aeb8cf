"""Round-based personalized federation of the local and tensorized solvers.

Each round every client fits locally for a few epochs, shares clipped and
optionally noised sufficient statistics, and the server combines them with
softmax client weights. Clients then blend their own model with the
global one (``lambda * local + (1 - lambda) * global``) and may adapt the
blend weights by a finite-difference gradient step on their objective.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import clustering_metrics, hard_labels
from .heat_kernel import heat_kernel_coefficients
from .local import (LocalModel, SolverConfig, check_views, fit_local, local_objective,
                    predict_memberships, update_memberships, update_view_weights, view_costs,
                    view_distances)
from .tensor import TuckerFactors, mode_n_product, tucker_reconstruct
from .tucker import (TensorizedModel, fit_tensorized, initial_tucker, tensor_coefficients,
                     tensor_objective, tensorize_views, tked_all)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DENSE_COMPONENTS = ("centers",)
TUCKER_COMPONENTS = ("core", "P", "Q", "R")


class ClientFailure(RuntimeError):
    """A client failed during a round; the round is not aggregated."""


# -- privacy ---------------------------------------------------------------

@dataclass(frozen=True)
class PrivacyParams:
    """Gaussian mechanism settings; ``clip_norm`` bounds each sample's share."""

    enabled: bool = False
    epsilon: float = 1.0
    delta: float = 1e-5
    clip_norm: float = 1.0
    seed: int = 0

    def violations(self):
        out = []
        if not self.epsilon > 0:
            out.append("epsilon must be > 0")
        if not 0 < self.delta < 1:
            out.append("delta must lie in (0, 1)")
        if not self.clip_norm > 0:
            out.append("clip_norm must be > 0")
        return out


def gaussian_sigma(privacy):
    """Noise scale ``sqrt(2 C^2 ln(1.25 / delta)) / epsilon``."""
    problems = privacy.violations()
    if problems:
        raise ValueError("; ".join(problems))
    return math.sqrt(2.0 * privacy.clip_norm ** 2 * math.log(1.25 / privacy.delta)) / privacy.epsilon


# -- statistics ------------------------------------------------------------

@dataclass(frozen=True)
class ClientStatistics:
    """What a client sends to the server in one round.

    Dense mode fills ``center_sums`` (per view, ``c x d_h``) and ``masses``
    (``c``); tensorized mode fills ``core`` and ``factors``, each scaled by
    the sample count. Both modes share ``view_costs``, the objective value
    ``quality`` and the sample count ``n``.
    """

    n: int
    quality: float
    view_costs: np.ndarray
    center_sums: list = None
    masses: np.ndarray = None
    core: np.ndarray = None
    factors: tuple = None

    @property
    def mode(self):
        return "dense" if self.center_sums is not None else "tensorized"

    def payload_size(self):
        """Number of values sent, counting ``quality`` and ``n``."""
        if self.mode == "dense":
            body = sum(a.size for a in self.center_sums) + self.masses.size
        else:
            body = self.core.size + sum(f.size for f in self.factors)
        return int(body + self.view_costs.size + 2)


def dense_payload_size(c, dims):
    return sum(c * d for d in dims) + c + len(dims) + 2


def tucker_payload_size(c, big_d, s, r2, r3):
    return c * r2 * r3 + c * c + big_d * r2 + s * r3 + s + 2


def _clip_scales(per_sample, clip_norm):
    norms = np.linalg.norm(per_sample, axis=1)
    return np.minimum(1.0, clip_norm / np.maximum(norms, 1e-300))


def compute_statistics(model, views, coefficients, config, privacy=None, rng=None):
    """Sufficient statistics of a fitted dense or tensorized model.

    With privacy enabled, each sample's full contribution vector is scaled
    to norm at most ``clip_norm`` before summation and every shared sum
    receives independent ``N(0, sigma^2)`` noise. Masses and view costs
    are clamped at zero afterwards; ``n`` is shared exactly.
    """
    m, alpha = config.m, config.alpha
    u = model.memberships
    um = u ** m
    v = model.view_weights
    tensorized = isinstance(model, TensorizedModel)
    if tensorized:
        tv = views
        dist = tked_all(tv, model.centers, coefficients)
        n = tv.shape[0]
    else:
        views = check_views(views)
        dist = view_distances(views, model.centers, coefficients)
        n = views[0].shape[0]
    # per-sample shares of the view costs and of the objective
    view_part = np.einsum("ik,hik->ih", um, dist)
    quality_part = view_part @ (v ** alpha)

    if tensorized:
        comps = [model.tucker.core] + list(model.tucker.factors)
        fixed = np.concatenate([a.ravel() for a in comps])
        per_sample = np.hstack([np.broadcast_to(fixed, (n, fixed.size)), view_part,
                                quality_part[:, None]])
    else:
        center_part = [np.einsum("ik,ij->ikj", um, x).reshape(n, -1) for x in views]
        per_sample = np.hstack(center_part + [um, view_part, quality_part[:, None]])

    use_dp = privacy is not None and privacy.enabled
    scale = _clip_scales(per_sample, privacy.clip_norm) if use_dp else np.ones(n)
    total = scale @ per_sample
    if use_dp:
        rng = np.random.default_rng(privacy.seed) if rng is None else rng
        total = total + rng.normal(0.0, gaussian_sigma(privacy), size=total.shape)

    s = v.size
    quality = float(total[-1])
    costs = np.maximum(total[-1 - s:-1], 0.0)
    if tensorized:
        parts, pos = [], 0
        for a in comps:
            parts.append(total[pos:pos + a.size].reshape(a.shape))
            pos += a.size
        return ClientStatistics(n, quality, costs, core=parts[0], factors=tuple(parts[1:]))
    sums, pos = [], 0
    c = u.shape[1]
    for x in views:
        size = c * x.shape[1]
        sums.append(total[pos:pos + size].reshape(c, x.shape[1]))
        pos += size
    masses = np.maximum(total[pos:pos + c], 0.0)
    return ClientStatistics(n, quality, costs, center_sums=sums, masses=masses)


# -- server ----------------------------------------------------------------

def client_weights(losses, tau=1.0):
    """Softmax of ``-tau * loss`` over clients."""
    z = -tau * np.asarray(losses, dtype=float)
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


@dataclass
class GlobalModel:
    view_weights: np.ndarray
    client_weights: np.ndarray
    round: int = 0
    centers: list = None
    tucker: TuckerFactors = None

    @property
    def mode(self):
        return "dense" if self.tucker is None else "tensorized"

    def center_tensor(self):
        return tucker_reconstruct(self.tucker)


def _match(means, reference):
    """Permutation ``perm`` with ``means[perm[k]]`` matched to ``reference[k]``."""
    with np.errstate(invalid="ignore", over="ignore"):
        cost = ((reference[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    # rows without a defined mean (zero mass) are matched last
    bad = ~np.isfinite(cost)
    if bad.any():
        finite = cost[~bad]
        cost[bad] = (finite.max() + 1.0) * 2 if finite.size else 1.0
    _, cols = linear_sum_assignment(cost)
    return cols


def procrustes(factor, reference):
    """Orthogonal ``O`` minimizing ``|factor @ O - reference|_F``."""
    a, _, bt = np.linalg.svd(factor.T @ reference)
    return a @ bt


def orthonormalize(tucker):
    """Equivalent factors with orthonormal columns (QR per mode, R into the core)."""
    core, factors = tucker.core, []
    for n, f in enumerate(tucker.factors, start=1):
        q, r = np.linalg.qr(f)
        sign = np.where(np.diag(r) < 0, -1.0, 1.0)
        factors.append(q * sign)
        core = mode_n_product(core, r * sign[:, None], n)
    return TuckerFactors(core, tuple(factors))


def align_tucker(tucker, reference):
    """Relabel clusters and rotate factors of ``tucker`` towards ``reference``.

    The factors are first made orthonormal, which leaves only an orthogonal
    ambiguity per mode. Clusters are matched on reconstructed centers; each
    factor is then rotated by an orthogonal Procrustes map, with the inverse
    rotation applied to the core, so the reconstruction is only permuted.
    """
    perm = _match(tucker.reconstruct().reshape(tucker.shape[0], -1),
                  reference.reconstruct().reshape(reference.shape[0], -1))
    tucker = orthonormalize(TuckerFactors(tucker.core, (tucker.factors[0][perm],)
                                          + tuple(tucker.factors[1:])))
    factors = list(tucker.factors)
    core = tucker.core
    for n, (f, ref) in enumerate(zip(factors, reference.factors), start=1):
        rot = procrustes(f, ref)
        factors[n - 1] = f @ rot
        core = mode_n_product(core, rot.T, n)
    return TuckerFactors(core, tuple(factors)), perm


def aggregate_dense(stats, omega, alpha, previous=None):
    """Weighted global centers and view weights from dense statistics.

    Returns ``(centers, view_weights)``. Clusters with no total mass keep
    the ``previous`` global center. When clients disagree on ``c`` or view
    dimensions only the view weights are aggregated.
    """
    omega = np.asarray(omega, dtype=float)
    ns = np.array([st.n for st in stats], dtype=float)
    vs = np.array([update_view_weights(st.view_costs, alpha) for st in stats])
    v_g = (omega * ns) @ vs / (omega * ns).sum()

    shapes = {tuple(a.shape for a in st.center_sums) for st in stats}
    if len(shapes) > 1:
        log.warning("heterogeneous cluster counts or view dims; centers not aggregated")
        return previous, v_g
    mass = omega @ np.array([st.masses for st in stats])
    centers = []
    for h in range(len(stats[0].center_sums)):
        num = sum(w * st.center_sums[h] for w, st in zip(omega, stats))
        ok = mass > 0
        if not ok.all():
            log.warning("clusters %s have no mass; previous centers kept",
                        np.nonzero(~ok)[0].tolist())
        fallback = previous[h] if previous is not None else np.zeros_like(num)
        centers.append(np.where(ok[:, None], num / np.where(ok, mass, 1.0)[:, None], fallback))
    return centers, v_g


def align_dense_statistics(stats, reference):
    """Permute cluster rows of each client's statistics to match ``reference``."""
    ref = np.hstack(reference)
    out = []
    for st in stats:
        with np.errstate(invalid="ignore", divide="ignore"):
            means = np.hstack([s / st.masses[:, None] for s in st.center_sums])
        perm = _match(means, ref)
        out.append(replace(st, center_sums=[s[perm] for s in st.center_sums],
                           masses=st.masses[perm]))
    return out


def aggregate_tucker(stats, omega, alpha, reference=None):
    """Weighted global Tucker factors and view weights.

    Every client's count-scaled components are first aligned to
    ``reference`` (default: the client with the largest weight).
    """
    omega = np.asarray(omega, dtype=float)
    ranks = {st.core.shape for st in stats}
    if len(ranks) > 1:
        raise ValueError(f"clients disagree on Tucker ranks: {sorted(ranks)}")
    ns = np.array([st.n for st in stats], dtype=float)
    vs = np.array([update_view_weights(st.view_costs, alpha) for st in stats])
    denom = (omega * ns).sum()
    v_g = (omega * ns) @ vs / denom

    per_client = [TuckerFactors(st.core / st.n, tuple(f / st.n for f in st.factors))
                  for st in stats]
    if reference is None:
        reference = orthonormalize(per_client[int(np.argmax(omega))])
    aligned = [align_tucker(t, reference)[0] for t in per_client]
    core = sum(w * n * t.core for w, n, t in zip(omega, ns, aligned)) / denom
    factors = tuple(sum(w * n * t.factors[i] for w, n, t in zip(omega, ns, aligned)) / denom
                    for i in range(3))
    return TuckerFactors(core, factors), v_g


# -- personalization -------------------------------------------------------

@dataclass
class PersonalizationState:
    """Blend weights of one client; ``lambdas`` maps component name to weight."""

    lambdas: dict
    rho: float
    beta: float = 0.1

    def copy(self):
        return PersonalizationState(dict(self.lambdas), self.rho, self.beta)


def _blend(local, glob, weight):
    return weight * local + (1.0 - weight) * glob


def blend_components(model, global_model, lambdas, rho):
    """Blended ``(centers or tucker, view_weights)``; no copy of memberships."""
    v = _blend(model.view_weights, global_model.view_weights, rho)
    if isinstance(model, TensorizedModel):
        loc, glo = model.tucker, global_model.tucker
        core = _blend(loc.core, glo.core, lambdas["core"])
        factors = tuple(_blend(a, b, lambdas[name])
                        for a, b, name in zip(loc.factors, glo.factors, "PQR"))
        return TuckerFactors(core, factors), v
    lam = lambdas["centers"]
    return [_blend(a, b, lam) for a, b in zip(model.centers, global_model.centers)], v


def personalize(model, global_model, state):
    """Componentwise ``lambda * local + (1 - lambda) * global`` blend."""
    comp, v = blend_components(model, global_model, state.lambdas, state.rho)
    if isinstance(model, TensorizedModel):
        return replace(model, tucker=comp, view_weights=v)
    return replace(model, centers=comp, view_weights=v)


def finite_difference(fn, x, step=1e-4, lo=0.0, hi=1.0):
    """Central difference of ``fn`` at ``x`` with the stencil kept in ``[lo, hi]``."""
    a, b = max(lo, x - step), min(hi, x + step)
    if b <= a:
        return 0.0
    return (fn(b) - fn(a)) / (b - a)


def adapt_lambda(model, global_model, state, objective, step=1e-4):
    """One projected gradient step on every blend weight.

    ``objective(model)`` evaluates the client's loss; the derivative with
    respect to each weight is taken through the blend with the other
    weights held at their current values.
    """
    new = state.copy()
    for name in state.lambdas:
        def at(x, name=name):
            lams = dict(state.lambdas, **{name: x})
            return objective(personalize(model, global_model, replace(state, lambdas=lams)))
        g = finite_difference(at, state.lambdas[name], step)
        new.lambdas[name] = float(np.clip(state.lambdas[name] - state.beta * g, 0.0, 1.0))

    def at_rho(x):
        return objective(personalize(model, global_model, replace(state, rho=x)))
    g = finite_difference(at_rho, state.rho, step)
    new.rho = float(np.clip(state.rho - state.beta * g, 0.0, 1.0))
    return new


def _components(model):
    if isinstance(model, TensorizedModel) or getattr(model, "tucker", None) is not None:
        t = model.tucker
        out = {"core": t.core, "P": t.factors[0], "Q": t.factors[1], "R": t.factors[2]}
    else:
        out = {"centers": np.hstack(model.centers)}
    out["views"] = model.view_weights
    return out


def blend_gaps(before, after, global_model):
    """Per component ``[|before - global|_F, |after - global|_F]``."""
    glo = _components(global_model)
    pre, post = _components(before), _components(after)
    return {k: [float(np.linalg.norm(pre[k] - glo[k])), float(np.linalg.norm(post[k] - glo[k]))]
            for k in glo}


def personalization_penalty(model, global_model):
    """Squared Frobenius gap to the global centers or Tucker components."""
    if isinstance(model, TensorizedModel):
        loc, glo = model.tucker, global_model.tucker
        gap = np.sum((loc.core - glo.core) ** 2)
        return float(gap + sum(np.sum((a - b) ** 2) for a, b in zip(loc.factors, glo.factors)))
    return float(sum(np.sum((a - b) ** 2) for a, b in zip(model.centers, global_model.centers)))


# -- protocol --------------------------------------------------------------

@dataclass(frozen=True)
class FederationConfig:
    """Settings of a federated run.

    ``lam`` and ``rho`` are the initial blend weights (1 keeps the local
    model, 0 adopts the global one). ``ranks`` is ``(r2, r3)`` and only
    used in tensorized mode.
    """

    solver: SolverConfig = field(default_factory=SolverConfig)
    mode: str = "dense"
    ranks: tuple = None
    rounds: int = 20
    local_epochs: int = 5
    tau: float = 1.0
    gamma: float = 0.1
    eta: float = 0.1
    beta: float = 0.1
    lam: float = 0.5
    rho: float = 0.5
    adaptive: bool = True
    privacy: PrivacyParams = field(default_factory=PrivacyParams)
    workers: int = 1

    def violations(self):
        out = []
        if self.mode not in ("dense", "tensorized"):
            out.append("mode must be 'dense' or 'tensorized'")
        if self.mode == "tensorized" and (self.ranks is None or len(self.ranks) != 2):
            out.append("tensorized mode needs ranks (r2, r3)")
        for name in ("rounds", "local_epochs", "workers"):
            if not (isinstance(getattr(self, name), (int, np.integer)) and getattr(self, name) >= 1):
                out.append(f"{name} must be a positive integer")
        for name in ("tau", "gamma", "eta"):
            if not getattr(self, name) >= 0:
                out.append(f"{name} must be >= 0")
        if not self.beta > 0:
            out.append("beta must be > 0")
        for name in ("lam", "rho"):
            if not 0 <= getattr(self, name) <= 1:
                out.append(f"{name} must lie in [0, 1]")
        if self.privacy.enabled:
            out.extend("privacy." + p for p in self.privacy.violations())
        return out


@dataclass
class _Client:
    index: int
    data: object            # list of views or a TensorizedView
    coefficients: object
    labels: np.ndarray
    config: SolverConfig
    model: object = None
    state: PersonalizationState = None


@dataclass
class FederationResult:
    global_model: GlobalModel
    client_models: list
    rounds: list
    states: list
    local_models: list = None
    traces: list = None


def _objective(client, model, solver):
    if isinstance(model, TensorizedModel):
        return tensor_objective(client.data, model.memberships, model.centers,
                                model.view_weights, client.coefficients, solver.m, solver.alpha)
    return local_objective(client.data, model.memberships, model.centers, model.view_weights,
                           client.coefficients, solver.m, solver.alpha)


def _memberships(client, model, solver):
    if isinstance(model, TensorizedModel):
        dist = tked_all(client.data, model.centers, client.coefficients)
        return update_memberships(dist, model.view_weights, solver.m, solver.alpha)
    return predict_memberships(client.data, model.centers, model.view_weights,
                               client.coefficients, solver.m, solver.alpha)


def evaluate(model, views, solver):
    """Memberships implied by a model's centers and view weights, and the
    objective at those memberships; returns ``(memberships, J)``."""
    views = check_views(views)
    if isinstance(model, TensorizedModel):
        data = tensorize_views(views)
        coeffs = tensor_coefficients(data, solver.estimator, solver.epsilon)
    else:
        data = views
        coeffs = heat_kernel_coefficients(views, solver.estimator, solver.epsilon)
    client = _Client(0, data, coeffs, None, solver)
    u = _memberships(client, model, solver)
    return u, _objective(client, replace(model, memberships=u), solver)


def _fit_client(client, fed):
    cfg = client.config
    try:
        if fed.mode == "tensorized":
            if client.model is None:
                init = initial_tucker(client.data, cfg.c, fed.ranks, cfg.seed)
                return fit_tensorized(client.data, cfg, initial=init,
                                      coefficients=client.coefficients)
            return fit_tensorized(client.data, cfg, initial=client.model.tucker,
                                  initial_weights=client.model.view_weights,
                                  coefficients=client.coefficients)
        if client.model is None:
            return fit_local(client.data, cfg, coefficients=client.coefficients)
        return fit_local(client.data, cfg, initial_centers=client.model.centers,
                         initial_weights=client.model.view_weights,
                         coefficients=client.coefficients)
    except Exception as exc:  # any client error aborts the round
        raise ClientFailure(f"client {client.index}: {exc}") from exc


def _align_model(model, global_model):
    if isinstance(model, TensorizedModel):
        tucker, perm = align_tucker(model.tucker, global_model.tucker)
        return replace(model, tucker=tucker, memberships=model.memberships[:, perm])
    perm = _match(np.hstack(model.centers), np.hstack(global_model.centers))
    return replace(model, centers=[a[perm] for a in model.centers],
                   memberships=model.memberships[:, perm])


def _make_clients(datasets, fed):
    clients = []
    comps = TUCKER_COMPONENTS if fed.mode == "tensorized" else DENSE_COMPONENTS
    for i, ds in enumerate(datasets):
        views = check_views(ds.views if hasattr(ds, "views") else ds)
        labels = getattr(ds, "labels", None)
        cfg = replace(fed.solver, max_iters=fed.local_epochs, seed=fed.solver.seed + i)
        if fed.mode == "tensorized":
            tv = tensorize_views(views)
            coeffs = tensor_coefficients(tv, cfg.estimator, cfg.epsilon)
            data = tv
        else:
            coeffs = heat_kernel_coefficients(views, cfg.estimator, cfg.epsilon)
            data = views
        state = PersonalizationState({k: float(fed.lam) for k in comps}, float(fed.rho), fed.beta)
        clients.append(_Client(i, data, coeffs, labels, cfg, state=state))
    return clients


def run_federation(datasets, fed, on_round=None):
    """Run ``fed.rounds`` synchronous rounds over all clients.

    Args:
        datasets: one :class:`~fedmvc.data.MultiViewDataset` (or list of
            view matrices) per client.
        fed: :class:`FederationConfig`.
        on_round: optional callable receiving each round's metrics dict.

    Returns:
        FederationResult with the final global model, the personalized
        client models, per-round metrics and personalization states.
    """
    problems = fed.violations()
    if problems:
        raise ValueError("; ".join(problems))
    if not datasets:
        raise ValueError("at least one client is required")
    clients = _make_clients(datasets, fed)
    solver = fed.solver
    sigma = gaussian_sigma(fed.privacy) if fed.privacy.enabled else 0.0
    global_model = None
    rounds = []
    local_models = None
    traces = [[] for _ in clients]
    pool = ThreadPoolExecutor(max_workers=fed.workers) if fed.workers > 1 else None
    try:
        for t in range(fed.rounds):
            if pool is None:
                local_models = [_fit_client(cl, fed) for cl in clients]
            else:
                local_models = list(pool.map(lambda cl: _fit_client(cl, fed), clients))

            for trace, model in zip(traces, local_models):
                trace.extend((t + 1, it + 1, j) for it, j in enumerate(model.objective_trace))

            stats = []
            for cl, model in zip(clients, local_models):
                rng = np.random.default_rng([fed.privacy.seed, t, cl.index])
                stats.append(compute_statistics(model, cl.data, cl.coefficients, cl.config,
                                                fed.privacy, rng))
            omega = client_weights([st.quality for st in stats], fed.tau)

            if fed.mode == "tensorized":
                reference = None if global_model is None else global_model.tucker
                tucker, v_g = aggregate_tucker(stats, omega, solver.alpha, reference)
                global_model = GlobalModel(v_g, omega, t + 1, tucker=tucker)
            else:
                previous = None if global_model is None else global_model.centers
                if previous is None:
                    best = stats[int(np.argmax(omega))]
                    with np.errstate(invalid="ignore", divide="ignore"):
                        ref = [s / best.masses[:, None] for s in best.center_sums]
                else:
                    ref = previous
                aligned = align_dense_statistics(stats, ref)
                centers, v_g = aggregate_dense(aligned, omega, solver.alpha, previous)
                global_model = GlobalModel(v_g, omega, t + 1, centers=centers)

            row_lam, row_rho, ari, nmi, penalty, gaps = [], [], [], [], [], []
            global_j = 0.0
            has_centers = global_model.centers is not None or global_model.tucker is not None
            for cl, model, w, st in zip(clients, local_models, omega, stats):
                state = cl.state
                if has_centers:
                    if min(list(state.lambdas.values()) + [state.rho]) < 1.0:
                        model = _align_model(model, global_model)
                    personal = personalize(model, global_model, state)
                    gaps.append(blend_gaps(model, personal, global_model))
                    if fed.adaptive:
                        cl.state = adapt_lambda(model, global_model, state,
                                                lambda mdl, cl=cl: _objective(cl, mdl, solver))
                    gap = personalization_penalty(personal, global_model)
                else:
                    personal = model
                    gap = 0.0
                cl.model = personal
                vgap = float(np.sum((personal.view_weights - global_model.view_weights) ** 2))
                global_j += w * st.quality + fed.gamma * gap + fed.eta * vgap
                penalty.append(gap)
                row_lam.append(dict(state.lambdas))
                row_rho.append(state.rho)
                if cl.labels is not None:
                    pred = hard_labels(_memberships(cl, personal, solver))
                    scores = clustering_metrics(pred, cl.labels)
                    ari.append(scores["ARI"])
                    nmi.append(scores["NMI"])

            payload = [st.payload_size() for st in stats]
            row = {
                "schema_version": SCHEMA_VERSION,
                "round": t + 1,
                "client_J": [float(st.quality) for st in stats],
                "global_J": float(global_j),
                "omega": [float(w) for w in omega],
                "payload_elements": payload,
                "payload_bytes_total": int(8 * sum(payload)),
                "lambda": row_lam,
                "rho": row_rho,
                "personalization_gap": penalty,
                "blend_gaps": gaps,
                "noise_sigma": sigma,
            }
            if ari:
                row["client_ARI"] = ari
                row["client_NMI"] = nmi
            rounds.append(row)
            if on_round is not None:
                on_round(row)
    finally:
        if pool is not None:
            pool.shutdown()
    return FederationResult(global_model, [cl.model for cl in clients], rounds,
                            [cl.state for cl in clients], local_models, traces)
