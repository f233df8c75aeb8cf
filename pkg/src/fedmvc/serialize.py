"""Flat model files: one JSON header line, then raw float64 values.

The header lists every array's name and shape in storage order; the body
holds each array's values in little-endian float64, row-major, back to back.
"""

import json
from pathlib import Path

import numpy as np

from .federation import GlobalModel
from .local import LocalModel
from .tensor import TuckerFactors
from .tucker import TensorizedModel

FORMAT = "fedmvc-model"
VERSION = 1


def write_arrays(path, arrays, meta=None):
    """Write named arrays (ordered mapping) and a metadata dict."""
    entries = [{"name": k, "shape": list(np.shape(a))} for k, a in arrays.items()]
    header = {"format": FORMAT, "version": VERSION, "arrays": entries, "meta": meta or {}}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return Path(path)


def read_arrays(path):
    """Inverse of :func:`write_arrays`; returns ``(arrays, meta)``."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != FORMAT:
            raise ValueError(f"{path}: not a {FORMAT} file")
        body = fh.read()
    arrays, pos = {}, 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape, dtype=int))
        chunk = body[pos:pos + 8 * size]
        if len(chunk) != 8 * size:
            raise ValueError(f"{path}: truncated data for {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        pos += 8 * size
    if pos != len(body):
        raise ValueError(f"{path}: {len(body) - pos} trailing bytes")
    return arrays, header["meta"]


def _tucker_arrays(tucker):
    return {"core": tucker.core, "P": tucker.factors[0], "Q": tucker.factors[1],
            "R": tucker.factors[2]}


def save_model(path, model):
    """Save a LocalModel, TensorizedModel or GlobalModel."""
    arrays = {}
    if isinstance(model, GlobalModel):
        meta = {"kind": "global", "mode": model.mode, "round": model.round}
        if model.tucker is not None:
            arrays.update(_tucker_arrays(model.tucker))
        elif model.centers is not None:
            arrays.update({f"centers{h}": a for h, a in enumerate(model.centers)})
        arrays["view_weights"] = model.view_weights
        arrays["client_weights"] = model.client_weights
    elif isinstance(model, TensorizedModel):
        meta = {"kind": "tensorized", "converged": model.converged}
        arrays["memberships"] = model.memberships
        arrays.update(_tucker_arrays(model.tucker))
        arrays["view_weights"] = model.view_weights
        arrays["objective_trace"] = np.asarray(model.objective_trace, dtype=float)
    elif isinstance(model, LocalModel):
        meta = {"kind": "dense", "converged": model.converged}
        arrays["memberships"] = model.memberships
        arrays.update({f"centers{h}": a for h, a in enumerate(model.centers)})
        arrays["view_weights"] = model.view_weights
        arrays["objective_trace"] = np.asarray(model.objective_trace, dtype=float)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return write_arrays(path, arrays, meta)


def load_model(path):
    arrays, meta = read_arrays(path)
    centers = [arrays[f"centers{h}"] for h in range(len(arrays))
               if f"centers{h}" in arrays]
    tucker = None
    if "core" in arrays:
        tucker = TuckerFactors(arrays["core"], (arrays["P"], arrays["Q"], arrays["R"]))
    kind = meta.get("kind")
    if kind == "global":
        return GlobalModel(arrays["view_weights"], arrays["client_weights"], meta["round"],
                           centers=centers or None, tucker=tucker)
    trace = arrays["objective_trace"].tolist()
    if kind == "tensorized":
        return TensorizedModel(arrays["memberships"], tucker, arrays["view_weights"], trace,
                               converged=meta["converged"])
    if kind == "dense":
        return LocalModel(arrays["memberships"], centers, arrays["view_weights"], trace,
                          meta["converged"])
    raise ValueError(f"{path}: unknown model kind {kind!r}")
