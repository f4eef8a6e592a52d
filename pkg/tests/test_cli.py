import json

import numpy as np
import pytest

from gwtpp import pipeline
from gwtpp.artifacts import read_matrix, read_square
from gwtpp.cli import main
from gwtpp.core import Dataset, EventSequence, load_dataset, save_dataset


@pytest.fixture()
def data(tmp_path):
    path = tmp_path / "data.jsonl"
    assert main(["simulate", "--per-cluster", "5", "--seed", "2", "--out", str(path)]) == 0
    return path


def test_simulate_writes_dataset_and_manifest(data):
    ds = load_dataset(data)
    assert len(ds) == 10 and sorted(set(ds.labels)) == [0, 1]
    man = json.loads(data.with_name("data.manifest.json").read_text())
    assert man["command"] == "simulate" and man["status"] == "ok" and man["seed"] == 2


def test_kernel_cluster_gw(tmp_path, data):
    k = tmp_path / "k.csv"
    assert main(["kernel", "--data", str(data), "--sigma", "auto", "--out", str(k), "--threads", "1"]) == 0
    K, ids = read_square(k)
    assert ids == [s.id for s in load_dataset(data).sequences]
    np.testing.assert_array_equal(K, K.T)
    assert main(["kernel", "--data", str(data), "--sigma", "3.5", "--squared", "--out", str(tmp_path / "k2.csv")]) == 0

    rep = tmp_path / "rep.json"
    assert main(["cluster", "--kernel", str(k), "--k", "2", "--labels", str(data), "--out", str(rep)]) == 0
    out = json.loads(rep.read_text())
    assert len(out["predicted_labels"]) == 10 and 0 <= out["nmi"] <= 1

    plan = tmp_path / "plan.csv"
    assert main(["gw", "--k1", str(k), "--k2", str(k), "--out", str(plan)]) == 0
    P, _, meta = read_matrix(plan)
    np.testing.assert_allclose(P.sum(axis=1), meta["mu"], atol=1e-8)
    np.testing.assert_allclose(P.sum(axis=0), meta["nu"], atol=1e-8)
    assert meta["gw_squared"][0] < 1e-3


def test_train_evaluate_embed(tmp_path, data):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"epochs": 2, "reference_L": 6, "batch_size": 5}))
    run = tmp_path / "run"
    assert main(["train", "--data", str(data), "--config", str(cfg), "--seed", "1", "--out", str(run)]) == 0
    for name in ("checkpoint.json", "report.json", "metrics.csv", "manifest.json"):
        assert (run / name).exists()
    ev = tmp_path / "ev.json"
    assert main(["evaluate", "--model", str(run / "checkpoint.json"), "--data", str(data), "--out", str(ev)]) == 0
    assert set(json.loads(ev.read_text())) == {"ell", "acc"}

    emb = tmp_path / "emb.csv"
    args = ["embed", "--model", str(run / "checkpoint.json"), "--data", str(data), "--out", str(emb)]
    assert main(args) == 0
    first = emb.read_bytes()
    rows = first.decode().splitlines()
    assert rows[0].split(",")[:3] == ["id", "label", "h_1"] and len(rows) == 11
    assert all(len(r.split(",")) == 2 + 8 for r in rows)
    assert main(args) == 0 and emb.read_bytes() == first

    ds = load_dataset(data)
    unlabeled = tmp_path / "u.jsonl"
    save_dataset(Dataset(tuple(EventSequence(s.id, s.events, s.horizon) for s in ds.sequences), 5, 50.0), unlabeled)
    assert main(["embed", "--model", str(run / "checkpoint.json"), "--data", str(unlabeled),
                 "--out", str(tmp_path / "u.csv")]) == 0
    assert (tmp_path / "u.csv").read_text().splitlines()[0].split(",")[:2] == ["id", "h_1"]


def test_exit_codes(tmp_path, data):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nope": 1}))
    assert main(["train", "--data", str(data), "--config", str(bad), "--out", str(tmp_path / "r")]) == 2
    assert main(["train", "--data", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "r")]) == 3

    ck = tmp_path / "r3"
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps({"epochs": 1, "reference_L": 4, "batch_size": 5}))
    assert main(["train", "--data", str(data), "--config", str(cfg), "--out", str(ck)]) == 0
    other = tmp_path / "c3.jsonl"
    save_dataset(Dataset((EventSequence.from_arrays("a", [1.0], [0], 5.0), EventSequence.from_arrays("b", [2.0], [1], 5.0)),
                         3, 5.0), other)
    assert main(["embed", "--model", str(ck / "checkpoint.json"), "--data", str(other),
                 "--out", str(tmp_path / "e.csv")]) == 3


def test_numerical_failure_exit_code(tmp_path, data, monkeypatch):
    from gwtpp import cli
    from gwtpp.train import TrainingError

    def boom(*a, **k):
        raise TrainingError("non-finite objective")
    monkeypatch.setattr(cli, "train", boom)
    assert main(["train", "--data", str(data), "--out", str(tmp_path / "r")]) == 4
    assert json.loads((tmp_path / "r" / "manifest.json").read_text())["status"] == "failed"


def small_pipeline_config():
    return {"seed": 3,
            "simulate": {"kinds": ["Hawkes", "InhomPoisson"], "sequences_per_cluster": 6},
            "train": {"taus": [0.0, 1.0], "seeds": [0],
                      "config": {"epochs": 2, "reference_L": 6, "batch_size": 6}},
            "evaluate": {},
            "cluster": {"k": 2}}


def test_pipeline_summary_and_determinism(tmp_path):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps(small_pipeline_config()))
    for name in ("a", "b"):
        assert main(["pipeline", "--config", str(cfg), "--threads", "1", "--out", str(tmp_path / name)]) == 0
    sa, sb = (tmp_path / "a" / "summary.json").read_bytes(), (tmp_path / "b" / "summary.json").read_bytes()
    assert sa == sb
    summary = json.loads(sa)
    for key in ("tau=0", "tau=1"):
        assert set(summary["mean_by_tau"][key]) == {"ell", "acc", "nmi", "rand_index"}
    assert summary["dis_sc"]["nmi"] is not None
    for stage in ("simulate", "train/tau=0_seed=0", "evaluate/tau=1_seed=0", "cluster/dis_sc"):
        assert json.loads((tmp_path / "a" / stage / "manifest.json").read_text())["status"] == "ok"


def test_pipeline_missing_stage(tmp_path):
    cfg = small_pipeline_config()
    del cfg["evaluate"]
    with pytest.raises(pipeline.PipelineConfigError, match="evaluate"):
        pipeline.run(cfg, tmp_path)
    p = tmp_path / "p.json"
    p.write_text(json.dumps(cfg))
    assert main(["pipeline", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
