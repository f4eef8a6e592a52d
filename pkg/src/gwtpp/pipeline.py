"""simulate -> train -> evaluate -> cluster, under one run directory.

A pipeline config has one block per stage::

    {"seed": 0,
     "simulate": {"kinds": ["Hawkes", "InhomPoisson"], "sequences_per_cluster": 100},
     "train":    {"taus": [0.0, 1.0], "seeds": [0, 1, 2], "config": {...TrainConfig fields...}},
     "evaluate": {},
     "cluster":  {"k": 2, "baseline_mode": "singleton"}}

``simulate`` may instead carry a full ``"plan"`` (the SyntheticPlan JSON).
Each trained model is scored by ELL/ACC and by spectral clustering of its
embedding kernel; ``summary.json`` collects those and the DIS+SC baseline.
"""

from __future__ import annotations

import copy
import json
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import tpp
from .artifacts import RunManifest, fmt, write_matrix
from .cluster_eval import dis_sc_baseline, report
from .core import Dataset, save_dataset
from .simulate import SyntheticPlan, default_plan, make_synthetic
from .train import TrainConfig, embedding_bandwidth, evaluate_model, train, write_run

STAGES = ("simulate", "train", "evaluate", "cluster")

ACCEPTANCE_CONFIG = {
    "seed": 0,
    "simulate": {"kinds": ["Hawkes", "InhomPoisson"], "sequences_per_cluster": 100},
    "train": {"taus": [0.0, 1.0], "seeds": [0, 1, 2],
              "config": {"batch_size": 64, "reference_L": 64, "epochs": 10, "learning_rate": 0.01,
                         "subset_mode": "singleton", "squared_distance": True}},
    "evaluate": {},
    "cluster": {"k": 2, "baseline_mode": "singleton"},
}


class PipelineConfigError(ValueError):
    pass


def validate(config: dict) -> dict:
    config = copy.deepcopy(config)
    for stage in STAGES:
        if stage not in config:
            raise PipelineConfigError(f"pipeline config is missing the '{stage}' stage block")
        if not isinstance(config[stage], dict):
            raise PipelineConfigError(f"stage block '{stage}' must be an object")
    extra = set(config) - set(STAGES) - {"seed"}
    if extra:
        raise PipelineConfigError(f"unknown pipeline keys: {sorted(extra)}")
    tr = config["train"]
    tr.setdefault("taus", [0.0, 1.0])
    tr.setdefault("seeds", [config.get("seed", 0)])
    tr.setdefault("config", {})
    for key in ("tau", "seed"):
        if key in tr["config"]:
            raise PipelineConfigError(f"train.config.{key} is set per run through train.{key}s")
    TrainConfig.from_dict(tr["config"])  # surfaces unknown keys before any work
    if "k" not in config["cluster"]:
        raise PipelineConfigError("cluster stage needs 'k'")
    return config


def _plan(block: dict, seed: int) -> SyntheticPlan:
    if "plan" in block:
        return SyntheticPlan.from_dict({"seed": seed, **block["plan"]})
    return default_plan(tuple(block.get("kinds", ("Hawkes", "InhomPoisson"))),
                        int(block.get("sequences_per_cluster", 100)), seed=int(block.get("seed", seed)))


def embedding_clustering(params: tpp.TppParams, dataset: Dataset, k: int, seed: int):
    H = tpp.encode_all(params, dataset.sequences)
    K = tpp.embedding_kernel(H, embedding_bandwidth(H))
    return report(K, k, dataset.labels, seed), H


@contextmanager
def _stage(path, command, cfg, seed, inputs=()):
    m = RunManifest.begin(path, command, cfg, seed, inputs)
    try:
        yield m
    except BaseException:
        m.finish("failed")
        raise
    m.finish()


def run(config: dict, out_dir, threads: int = 1, log=print) -> dict:
    """Execute all stages; returns the summary dict (also written to ``summary.json``).

    A failing stage raises after marking its manifest ``failed``; outputs of
    the stages before it stay on disk.
    """
    config = validate(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(config.get("seed", 0))
    with _stage(out / "manifest.json", "pipeline", config, seed):
        return _run(config, out, seed, threads, log)


def _run(config, out, seed, threads, log):
    sim_dir = out / "simulate"
    data_path = sim_dir / "data.jsonl"
    with _stage(sim_dir / "manifest.json", "simulate", config["simulate"], seed):
        plan = _plan(config["simulate"], seed)
        dataset = make_synthetic(plan)
        save_dataset(dataset, data_path)
        (sim_dir / "plan.json").write_text(json.dumps(plan.to_dict(), indent=2))
    log(f"simulate: {len(dataset)} sequences, {dataset.total_events} events")

    k = int(config["cluster"]["k"])
    runs = {}
    for tau in config["train"]["taus"]:
        for s in config["train"]["seeds"]:
            s = int(s)
            name = f"tau={fmt(tau)}_seed={s}"
            cfg = TrainConfig.from_dict({**config["train"]["config"], "tau": float(tau), "seed": s})
            run_dir = out / "train" / name
            ckpt = run_dir / "checkpoint.json"
            with _stage(run_dir / "manifest.json", "train", cfg.to_dict(), s, [data_path]):
                params, rep = train(dataset, cfg, out_dir=run_dir)
                write_run(run_dir, params, rep, cfg)

            ev_dir = out / "evaluate" / name
            with _stage(ev_dir / "manifest.json", "evaluate", {"model": str(ckpt)}, s, [data_path, ckpt]):
                ell, acc = evaluate_model(params, dataset)
                (ev_dir / "metrics.json").write_text(json.dumps({"ell": ell, "acc": acc}, indent=2))

            cl_dir = out / "cluster" / name
            with _stage(cl_dir / "manifest.json", "cluster", {"k": k, "kernel": "embedding"}, s,
                        [data_path, ckpt]):
                rpt, H = embedding_clustering(params, dataset, k, s)
                (cl_dir / "report.json").write_text(json.dumps(rpt.to_dict(), indent=2))
                write_matrix(cl_dir / "embeddings.csv", H, [f"h_{j + 1}" for j in range(H.shape[1])])
            runs[name] = {"tau": float(tau), "seed": s, "ell": ell, "acc": acc,
                          "nmi": rpt.nmi, "rand_index": rpt.rand_index}
            log(f"{name}: ELL {ell:.4f} ACC {acc:.4f} NMI {rpt.nmi:.4f} RI {rpt.rand_index:.4f}")

    base_dir = out / "cluster" / "dis_sc"
    mode = config["cluster"].get("baseline_mode", "singleton")
    with _stage(base_dir / "manifest.json", "cluster", {"k": k, "kernel": "nonparametric", "mode": mode},
                seed, [data_path]):
        base = dis_sc_baseline(dataset, k, mode=mode, seed=seed, threads=threads)
        (base_dir / "report.json").write_text(json.dumps(base.to_dict(), indent=2))
    log(f"DIS+SC: NMI {base.nmi:.4f} RI {base.rand_index:.4f}")

    by_tau = {}
    for tau in config["train"]["taus"]:
        rows = [r for r in runs.values() if r["tau"] == float(tau)]
        by_tau[f"tau={fmt(tau)}"] = {key: float(np.mean([r[key] for r in rows]))
                                     for key in ("ell", "acc", "nmi", "rand_index")}
    summary = {"runs": runs, "mean_by_tau": by_tau,
               "dis_sc": {"ell": None, "acc": None, "nmi": base.nmi, "rand_index": base.rand_index}}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
