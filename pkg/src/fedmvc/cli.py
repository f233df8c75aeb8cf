"""Command-line runner: ``run``, ``validate`` and ``generate``.

Exit codes: 0 success, 1 runtime failure, 2 invalid config or unreadable input.
"""

import argparse
import csv
import json
import logging
from pathlib import Path
import sys

import numpy as np

from . import federation as fl
from .config import ConfigError, parse_section, load_config
from .data import (clustering_metrics, generate_synthetic, hard_labels, load_dataset,
                   partition_clients, save_dataset)
from .local import check_views, fit_local
from .serialize import save_model
from .tensor import tensor_distance
from .tucker import fit_tensorized, pad_views, tensorize_views

log = logging.getLogger("fedmvc")


def _dataset(cfg):
    if "synthetic" in cfg.dataset:
        syn = cfg.dataset["synthetic"]
        return generate_synthetic(syn["n"], syn["c_true"], syn["view_dims"], syn["separation"],
                                  cfg.seed, syn["scale"])
    return load_dataset(cfg.manifest_path())


def _center_tensor(model, dims):
    if getattr(model, "tucker", None) is not None:
        return model.tucker.reconstruct()
    return pad_views(model.centers, max(dims))


def _single_fit(cfg, ds):
    solver = cfg.solver_config()
    if cfg.mode == "tensorized":
        model = fit_tensorized(tensorize_views(ds.views), solver, ranks=cfg.ranks)
    else:
        model = fit_local(ds.views, solver)
    j = model.objective_trace[-1]
    row = {"schema_version": fl.SCHEMA_VERSION, "round": 1, "client_J": [j], "global_J": j,
           "omega": [1.0], "payload_elements": [0], "payload_bytes_total": 0}
    trace = [(1, it + 1, v) for it, v in enumerate(model.objective_trace)]
    return model, [row], [trace]


def run(cfg, out_dir):
    out_dir = Path(out_dir)
    ds = _dataset(cfg)
    check_views(ds.views)
    clients = cfg.partition["clients"]
    if cfg.federation["enabled"]:
        parts = partition_clients(ds, clients, cfg.partition_plan())
        result = fl.run_federation(parts, cfg.federation_config(),
                                   on_round=lambda r: log.info("round %d: global J %.6g",
                                                               r["round"], r["global_J"]))
        models, global_model = result.client_models, result.global_model
        rounds, traces = result.rounds, result.traces
    else:
        parts, global_model = [ds], None
        model, rounds, traces = _single_fit(cfg, ds)
        models = [model]

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "rounds.jsonl", "w", encoding="utf-8") as fh:
        for row in rounds:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    for i, trace in enumerate(traces):
        with open(out_dir / f"client{i}_objective_trace.csv", "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", "iteration", "objective"])
            writer.writerows((r, it, repr(j)) for r, it, j in trace)
    for i, model in enumerate(models):
        save_model(out_dir / f"client{i}_model.bin", model)
    if global_model is not None:
        save_model(out_dir / "global_model.bin", global_model)

    solver = cfg.solver_config()
    per_client = []
    for part, model in zip(parts, models):
        u, j = fl.evaluate(model, part.views, solver)
        entry = {"n": part.n_samples, "J": j}
        if part.labels is not None:
            entry.update(clustering_metrics(hard_labels(u), part.labels))
        if global_model is not None:
            entry["tensor_distance_to_global"] = tensor_distance(
                _center_tensor(model, ds.dims), _center_tensor(global_model, ds.dims),
                cfg.tensor["theta"])
        per_client.append(entry)

    summary = {
        "schema_version": fl.SCHEMA_VERSION,
        "mode": cfg.mode,
        "clients": len(models),
        "rounds": len(rounds),
        "per_client": per_client,
        "payload_elements_total": int(sum(sum(r["payload_elements"]) for r in rounds)),
        "payload_bytes_total": int(sum(r["payload_bytes_total"] for r in rounds)),
        "final_global_J": rounds[-1]["global_J"],
    }
    for key in ("ARI", "NMI", "J"):
        vals = [e[key] for e in per_client if key in e]
        if vals:
            summary[f"mean_{key}"] = float(np.mean(vals))
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _cmd_run(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    out_dir = args.output_dir or cfg.output_dir
    try:
        summary = run(cfg, out_dir)
    except Exception as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    msg = f"wrote {out_dir}: {summary['rounds']} round(s), {summary['clients']} client(s)"
    if "mean_ARI" in summary:
        msg += f", mean ARI {summary['mean_ARI']:.4f}"
    print(msg)
    return 0


def _cmd_validate(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"violation: {p}")
        return 2
    print(f"ok: {cfg.mode} mode, {cfg.partition['clients']} client(s)")
    return 0


def _cmd_generate(args):
    try:
        raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ConfigError(["<root>: synthetic spec must be a JSON object"])
        seed = raw.pop("seed", 0)
        problems = []
        syn = parse_section(raw, "synthetic", "synthetic", problems)
        if not (isinstance(seed, int) and seed >= 0):
            problems.append("synthetic.seed: must be a non-negative integer")
        if syn["c_true"] > syn["n"]:
            problems.append("synthetic.c_true: must not exceed n")
        if problems:
            raise ConfigError(problems)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read {args.spec}: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        for p in exc.problems:
            print(f"violation: {p}", file=sys.stderr)
        return 2
    ds = generate_synthetic(syn["n"], syn["c_true"], syn["view_dims"], syn["separation"],
                            seed, syn["scale"])
    path = save_dataset(ds, args.output_dir or "dataset")
    print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="fedmvc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("--output-dir", help="override the config's output_dir")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    p = sub.add_parser("generate", help="write a synthetic dataset as CSV + manifest")
    p.add_argument("spec", help="JSON with n, c_true, view_dims, separation, scale, seed")
    p.add_argument("--output-dir", help="target directory (default ./dataset)")
    p.set_defaults(func=_cmd_generate)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

