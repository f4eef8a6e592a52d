"""``gwtpp`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import gw, pipeline, tpp
from .artifacts import RunManifest, fmt, manifest_path, read_square, write_matrix
from .cluster_eval import EigensolverError, report, spectral_cluster
from .core import DataError, load_dataset, save_dataset
from .seqdist import distance_matrix, kernel_from_distances, median_bandwidth
from .simulate import SimulationError, default_plan, load_plan, make_synthetic
from .train import TrainConfig, TrainingError, evaluate_model, train, write_run

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("gwtpp")


class ConfigError(ValueError):
    pass


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _dataset(args):
    return load_dataset(args.data, getattr(args, "num_types", None), getattr(args, "horizon", None))


def _check_model(params: tpp.TppParams, dataset) -> None:
    if params.num_types != dataset.num_types:
        raise DataError(f"model has {params.num_types} event types, dataset has {dataset.num_types}")


def cmd_simulate(args) -> dict:
    if args.plan:
        plan = load_plan(args.plan)
        if args.seed is not None:
            plan = type(plan)(plan.cluster_specs, plan.sequences_per_cluster, plan.num_types, plan.horizon, args.seed)
    else:
        plan = default_plan(tuple(args.kinds), args.per_cluster, seed=args.seed or 0)
    m = RunManifest.begin(manifest_path(args.out), "simulate", plan.to_dict(), plan.seed, [args.plan])
    ds = make_synthetic(plan)
    save_dataset(ds, args.out)
    m.finish()
    return {"sequences": len(ds), "events": ds.total_events}


def cmd_kernel(args) -> dict:
    ds = _dataset(args)
    cfg = {"mode": args.mode, "sigma": args.sigma, "squared": args.squared}
    m = RunManifest.begin(manifest_path(args.out), "kernel", cfg, args.seed, [args.data])
    D = distance_matrix(ds.sequences, args.mode, ds.num_types, ds.horizon, threads=args.threads)
    sigma = median_bandwidth(D) if args.sigma == "auto" else float(args.sigma)
    K = kernel_from_distances(D, sigma, squared=args.squared)
    write_matrix(args.out, K, [s.id for s in ds.sequences])
    m.finish()
    return {"n": len(ds), "sigma": sigma}


def cmd_gw(args) -> dict:
    k1, _ = read_square(args.k1)
    k2, _ = read_square(args.k2)
    cfg = gw.GwConfig(**_read_json(args.config)) if args.config else gw.GwConfig()
    m = RunManifest.begin(manifest_path(args.out), "gw", cfg.__dict__, args.seed, [args.k1, args.k2])
    res = gw.solve(k1, k2, config=cfg)
    write_matrix(args.out, res.plan.matrix, [str(j) for j in range(k2.shape[0])],
                 meta={"mu": res.plan.mu, "nu": res.plan.nu, "gw_squared": res.gw_squared})
    m.finish()
    return {"gw_squared": res.gw_squared, "outer_iterations": len(res.objective_trace) - 1}


def cmd_train(args) -> dict:
    ds = _dataset(args)
    obj = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        obj["seed"] = args.seed
    try:
        cfg = TrainConfig.from_dict(obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    m = RunManifest.begin(out / "manifest.json", "train", cfg.to_dict(), cfg.seed, [args.data, args.config])
    try:
        params, rep = train(ds, cfg, out_dir=out)
    except TrainingError:
        m.finish("failed")
        raise
    write_run(out, params, rep, cfg)
    m.finish()
    return {"final_nll": rep.nll[-1], "final_gw_squared": rep.gw_squared[-1], "seconds": rep.seconds}


def cmd_evaluate(args) -> dict:
    ds = _dataset(args)
    params = tpp.load_checkpoint(args.model)
    _check_model(params, ds)
    m = RunManifest.begin(manifest_path(args.out), "evaluate", {}, args.seed, [args.model, args.data])
    ell, acc = evaluate_model(params, ds)
    Path(args.out).write_text(json.dumps({"ell": ell, "acc": acc}, indent=2))
    m.finish()
    return {"ell": ell, "acc": acc}


def cmd_cluster(args) -> dict:
    K, ids = read_square(args.kernel)
    seed = args.seed or 0
    m = RunManifest.begin(manifest_path(args.out), "cluster", {"k": args.k}, seed, [args.kernel, args.labels])
    if args.labels:
        ds = load_dataset(args.labels, args.num_types, args.horizon)
        by_id = {s.id: s.label for s in ds.sequences}
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise DataError(f"kernel ids not in {args.labels}: {missing[:5]}")
        truth = [by_id[i] for i in ids]
        if any(t is None for t in truth):
            raise DataError(f"{args.labels}: some sequences are unlabeled")
        out = report(K, args.k, np.array(truth), seed).to_dict()
    else:
        labels = spectral_cluster(K, args.k, seed)
        out = {"predicted_labels": [int(x) for x in labels], "nmi": None, "rand_index": None, "k": args.k}
    out["ids"] = ids
    Path(args.out).write_text(json.dumps(out, indent=2))
    m.finish()
    return {key: out[key] for key in ("nmi", "rand_index")}


def cmd_embed(args) -> dict:
    ds = _dataset(args)
    params = tpp.load_checkpoint(args.model)
    _check_model(params, ds)
    m = RunManifest.begin(manifest_path(args.out), "embed", {}, args.seed, [args.model, args.data])
    H = tpp.encode_all(params, ds.sequences)
    labeled = ds.labels is not None
    header = ["id"] + (["label"] if labeled else []) + [f"h_{j + 1}" for j in range(H.shape[1])]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write(",".join(header) + "\n")
        for s, h in zip(ds.sequences, H):
            lead = [s.id] + ([str(s.label)] if labeled else [])
            fh.write(",".join(lead + [fmt(v) for v in h]) + "\n")
    m.finish()
    return {"rows": len(ds), "dim": H.shape[1]}


def cmd_pipeline(args) -> dict:
    cfg = pipeline.ACCEPTANCE_CONFIG if args.config is None else _read_json(args.config)
    cfg = dict(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    summary = pipeline.run(cfg, args.out, threads=args.threads, log=log.info)
    return summary["mean_by_tau"] | {"dis_sc": summary["dis_sc"]}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (commands that draw randomness)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads; 1 guarantees bitwise determinism (default: all cores)")
    common.add_argument("--out", required=True, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    header = argparse.ArgumentParser(add_help=False)
    header.add_argument("--num-types", type=int, default=None, help="if no header sidecar")
    header.add_argument("--horizon", type=float, default=None, help="if no header sidecar")

    p = argparse.ArgumentParser(prog="gwtpp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="sample a synthetic labeled dataset")
    s.add_argument("--plan", help="SyntheticPlan JSON; default is the built-in two-family plan")
    s.add_argument("--kinds", nargs="+", default=["Hawkes", "InhomPoisson"])
    s.add_argument("--per-cluster", type=int, default=100)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("kernel", parents=[common, header], help="nonparametric sequence kernel as CSV")
    s.add_argument("--data", required=True)
    s.add_argument("--mode", choices=["singleton", "full"], default="singleton")
    s.add_argument("--sigma", default="auto", help="'auto' (median heuristic) or a positive number")
    s.add_argument("--squared", action="store_true", help="use squared distances in the exponent")
    s.set_defaults(func=cmd_kernel)

    s = sub.add_parser("gw", parents=[common], help="transport plan between two kernel CSVs")
    s.add_argument("--k1", required=True)
    s.add_argument("--k2", required=True)
    s.add_argument("--config", help="GwConfig JSON")
    s.set_defaults(func=cmd_gw)

    s = sub.add_parser("train", parents=[common, header], help="fit the model; --out is a run directory")
    s.add_argument("--data", required=True)
    s.add_argument("--config", help="TrainConfig JSON")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common, header], help="ELL and next-type accuracy")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("cluster", parents=[common, header], help="spectral clustering of a kernel CSV")
    s.add_argument("--kernel", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--labels", help="dataset whose labels score the partition")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("embed", parents=[common, header], help="export sequence embeddings as CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("pipeline", parents=[common], help="simulate, train, evaluate, cluster")
    s.add_argument("--config", help="pipeline JSON; default is the acceptance configuration")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose or args.command == "pipeline" else logging.WARNING,
                        format="%(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, EigensolverError, SimulationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(result, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
