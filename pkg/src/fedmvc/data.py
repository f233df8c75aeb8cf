"""Multi-view datasets: synthetic blobs, CSV manifests, client splits, metrics."""

from dataclasses import dataclass, field
import json
from pathlib import Path

import numpy as np
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score


class MalformedDatasetError(ValueError):
    pass


class DatasetParseError(ValueError):
    pass


@dataclass
class MultiViewDataset:
    views: list
    labels: np.ndarray = None
    name: str = "dataset"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.views = [np.asarray(x, dtype=float) for x in self.views]
        if not self.views:
            raise MalformedDatasetError("a dataset needs at least one view")
        n = self.views[0].shape[0]
        for h, x in enumerate(self.views):
            if x.ndim != 2 or x.shape[0] != n:
                raise MalformedDatasetError(f"view {h} has shape {x.shape}, expected ({n}, d)")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != (n,):
                raise MalformedDatasetError(f"labels have shape {self.labels.shape}, expected ({n},)")
            if self.labels.size and self.labels.min() < 0:
                raise MalformedDatasetError("labels must be non-negative")

    @property
    def n_samples(self):
        return self.views[0].shape[0]

    @property
    def dims(self):
        return tuple(x.shape[1] for x in self.views)

    def subset(self, idx, name=None):
        idx = np.asarray(idx)
        labels = None if self.labels is None else self.labels[idx]
        return MultiViewDataset([x[idx] for x in self.views], labels,
                                name or self.name, dict(self.provenance))


def generate_synthetic(n, c_true, view_dims, separation=8.0, seed=0, scale=1.0):
    """Gaussian blobs sharing one cluster assignment across views.

    In every view the cluster means lie on a random line, consecutive
    means ``separation * scale`` apart; each view shuffles the order of
    the means. Labels are balanced (cluster sizes differ by at most one).
    """
    view_dims = [int(d) for d in view_dims]
    if not (n >= c_true >= 1) or not view_dims or min(view_dims) < 1:
        raise ValueError("need n >= c_true >= 1 and at least one view of dim >= 1")
    if separation <= 0 or scale <= 0:
        raise ValueError("separation and scale must be positive")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % c_true)
    views = []
    for d in view_dims:
        direction = rng.normal(size=d)
        direction /= np.linalg.norm(direction)
        order = rng.permutation(c_true)
        means = np.outer(order * separation * scale, direction)
        views.append(means[labels] + scale * rng.normal(size=(n, d)))
    prov = {"generator": "gaussian_blobs", "n": n, "c_true": c_true, "view_dims": view_dims,
            "separation": separation, "scale": scale, "seed": seed}
    return MultiViewDataset(views, labels, f"synthetic-{seed}", prov)


@dataclass(frozen=True)
class PartitionPlan:
    strategy: str = "iid"
    concentration: float = 0.5
    seed: int = 0
    max_retries: int = 100


def partition_clients(dataset, n_clients, plan=PartitionPlan()):
    """Disjoint split of the samples over ``n_clients`` clients.

    ``iid`` deals a random permutation into near-equal chunks. ``dirichlet``
    draws per-label client proportions from ``Dir(concentration)``; draws
    that leave a client empty are repeated.
    """
    n = dataset.n_samples
    if not 1 <= n_clients <= n:
        raise ValueError(f"need 1 <= clients <= n={n}, got {n_clients}")
    rng = np.random.default_rng(plan.seed)
    if plan.strategy == "iid":
        parts = np.array_split(rng.permutation(n), n_clients)
    elif plan.strategy == "dirichlet":
        if plan.concentration <= 0:
            raise ValueError("concentration must be positive")
        if dataset.labels is None:
            raise ValueError("dirichlet partitioning needs labels")
        for _ in range(plan.max_retries):
            buckets = [[] for _ in range(n_clients)]
            for label in np.unique(dataset.labels):
                idx = rng.permutation(np.nonzero(dataset.labels == label)[0])
                props = rng.dirichlet(np.full(n_clients, plan.concentration))
                cuts = (np.cumsum(props)[:-1] * len(idx)).astype(int)
                for b, chunk in zip(buckets, np.split(idx, cuts)):
                    b.extend(chunk.tolist())
            if all(buckets):
                break
        else:
            raise ValueError(f"dirichlet split left a client empty after {plan.max_retries} draws")
        parts = [np.sort(np.array(b)) for b in buckets]
    else:
        raise ValueError(f"unknown partition strategy {plan.strategy!r}")
    return [dataset.subset(np.sort(p), f"{dataset.name}-client{i}") for i, p in enumerate(parts)]


def _read_csv(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for r, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = []
            for col, cell in enumerate(line.strip().split(","), start=1):
                try:
                    row.append(float(cell))
                except ValueError:
                    raise DatasetParseError(
                        f"{path}: non-numeric cell {cell!r} at row {r}, column {col}") from None
            rows.append(row)
    if len({len(r) for r in rows}) > 1:
        raise MalformedDatasetError(f"{path}: rows have differing lengths")
    return np.array(rows, dtype=float).reshape(len(rows), -1)


def load_dataset(manifest_path):
    """Read a JSON manifest ``{name, views: [{path, dim}], labels_path?}``.

    Paths are resolved relative to the manifest. Each view is a headerless
    numeric CSV with one sample per row.
    """
    manifest_path = Path(manifest_path)
    spec = json.loads(manifest_path.read_text(encoding="utf-8"))
    base = manifest_path.parent
    views, paths = [], []
    for entry in spec["views"]:
        path = base / entry["path"]
        x = _read_csv(path)
        if "dim" in entry and x.shape[1] != int(entry["dim"]):
            raise MalformedDatasetError(f"{path}: {x.shape[1]} columns, manifest says {entry['dim']}")
        views.append(x)
        paths.append(str(path))
    for path, x in zip(paths[1:], views[1:]):
        if x.shape[0] != views[0].shape[0]:
            raise MalformedDatasetError(
                f"row count mismatch: {paths[0]} has {views[0].shape[0]} rows, "
                f"{path} has {x.shape[0]}")
    labels = None
    if spec.get("labels_path"):
        lab = _read_csv(base / spec["labels_path"]).ravel()
        if lab.shape[0] != views[0].shape[0]:
            raise MalformedDatasetError("labels row count does not match the views")
        labels = lab.astype(int)
    return MultiViewDataset(views, labels, spec.get("name", manifest_path.stem),
                            {"manifest": str(manifest_path)})


def save_dataset(dataset, directory):
    """Write one CSV per view plus ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for h, x in enumerate(dataset.views):
        name = f"view{h}.csv"
        np.savetxt(directory / name, x, delimiter=",", fmt="%.17g")
        entries.append({"path": name, "dim": int(x.shape[1])})
    manifest = {"name": dataset.name, "views": entries}
    if dataset.labels is not None:
        np.savetxt(directory / "labels.csv", dataset.labels, fmt="%d")
        manifest["labels_path"] = "labels.csv"
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def hard_labels(memberships):
    """Argmax of each membership row; ties go to the lowest index."""
    return np.argmax(np.asarray(memberships), axis=1)


def clustering_metrics(predicted, truth):
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError(f"length mismatch {predicted.shape} vs {truth.shape}")
    return {"ARI": float(adjusted_rand_score(truth, predicted)),
            "NMI": float(normalized_mutual_info_score(truth, predicted))}
