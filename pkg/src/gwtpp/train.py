"""Maximum-likelihood training with a Gromov-Wasserstein kernel regularizer.

Per mini-batch the loop alternates two steps: solve the transport plan
between the batch embedding kernel and the fixed reference kernel, then
take one optimizer step on the model parameters with that plan frozen.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import gw, tpp
from .core import Dataset, EventSequence
from .seqdist import median_bandwidth, parse_mode, sample_reference_kernel

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    tau: float = 1.0
    reference_L: int = 64
    subset_mode: str = "singleton"
    batch_size: int = 32
    epochs: int = 10
    learning_rate: float = 0.01
    optimizer: str = "adam"
    seed: int = 0
    embed_dim: int = 4
    hidden_dim: int = 8
    resample_reference: bool = False
    squared_distance: bool = True
    gw: gw.GwConfig = field(default_factory=gw.GwConfig)

    def __post_init__(self):
        if isinstance(self.gw, dict):
            self.gw = gw.GwConfig(**self.gw)
        self.subset_mode = parse_mode(self.subset_mode)
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.reference_L < 2:
            raise ValueError("reference_L must be >= 2")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (a kernel needs two embeddings)")
        if self.epochs < 1 or not self.learning_rate > 0:
            raise ValueError("epochs must be >= 1 and learning_rate positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        if "gw" in obj:
            gw_known = {f.name for f in fields(gw.GwConfig)}
            bad = set(obj["gw"]) - gw_known
            if bad:
                raise ValueError(f"unknown gw config keys: {sorted(bad)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    nll: list = field(default_factory=list)
    gw_squared: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    checkpoint: Optional[str] = None
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, params: tpp.TppParams, grad: tpp.TppParams) -> tpp.TppParams:
        g = grad.flat()
        if self.m is None:
            self.m, self.v = np.zeros_like(g), np.zeros_like(g)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return params.with_flat(params.flat() - self.lr * mhat / (np.sqrt(vhat) + self.eps)).clamp_()


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: tpp.TppParams, grad: tpp.TppParams) -> tpp.TppParams:
        return params.with_flat(params.flat() - self.lr * grad.flat()).clamp_()


def embedding_bandwidth(H: np.ndarray) -> float:
    """Median pairwise Euclidean distance between embeddings (held constant in gradients)."""
    return median_bandwidth(np.sqrt(tpp.pairwise_sq_dists(H)))


def objective(params: tpp.TppParams, batch: Sequence[EventSequence], reference: np.ndarray, tau: float,
              gw_config: Optional[gw.GwConfig] = None, warm_start: Optional[gw.TransportPlan] = None,
              fixed_plan: Optional[gw.TransportPlan] = None, sigma: Optional[float] = None):
    """Mean NLL of the batch plus ``tau`` times the squared GW discrepancy to ``reference``.

    Returns ``(value, gradient, gw_result)``. The plan is solved at the
    current parameters unless ``fixed_plan`` is given; the gradient treats
    the plan and the kernel bandwidth as constants.
    """
    B = len(batch)
    if B < 2:
        raise ValueError("objective needs a batch of at least 2 sequences")
    tape = tpp.forward(params, batch)
    nll = float(-tape.log_likelihood.mean())
    d_ll = np.full(B, -1.0 / B)

    H = tape.embeddings
    sigma = embedding_bandwidth(H) if sigma is None else sigma
    K = tpp.embedding_kernel(H, sigma)
    if fixed_plan is not None:
        result = gw.GwResult(fixed_plan, gw.gw_objective(K, reference, fixed_plan))
    else:
        result = gw.solve(K, reference, gw.uniform(B), gw.uniform(reference.shape[0]), gw_config,
                          warm_start=warm_start)
    if tau == 0:
        return nll, tpp.backward(params, tape, d_ll), result
    value = nll + tau * result.gw_squared
    dK = gw.grad_wrt_k1(K, reference, result.plan)
    dH = tpp.embedding_kernel_backward(H, K, sigma, dK)
    grad = tpp.backward(params, tape, d_ll, tau * dH)
    return value, grad, result


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    out = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(out) > 1 and len(out[-1]) < 2:
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def train(dataset: Dataset, config: TrainConfig, out_dir=None):
    """Fit the model; returns ``(params, report)``.

    With ``out_dir`` the final parameters go to ``checkpoint.json`` there,
    and a failing run leaves the last finite parameters in
    ``checkpoint_last_good.json``.
    """
    start = time.perf_counter()
    M = len(dataset)
    if config.reference_L > M:
        raise ValueError(f"reference_L={config.reference_L} exceeds dataset size {M}")
    rng = np.random.default_rng(config.seed)
    params = tpp.init_params(dataset.num_types, config.embed_dim, config.hidden_dim, config.seed, dataset)
    opt = Adam(config.learning_rate) if config.optimizer == "adam" else SGD(config.learning_rate)
    reference, _ = sample_reference_kernel(dataset, config.reference_L, config.subset_mode, config.seed,
                                           squared=config.squared_distance)
    report = TrainReport()
    out_dir = Path(out_dir) if out_dir is not None else None
    prev_idx, prev_plan = None, None

    for epoch in range(config.epochs):
        if config.resample_reference and epoch > 0:
            reference, _ = sample_reference_kernel(dataset, config.reference_L, config.subset_mode,
                                                   config.seed + epoch, squared=config.squared_distance)
            prev_plan = None
        order = rng.permutation(M)
        nll_sum = gw_sum = obj_sum = 0.0
        for idx in _batches(order, config.batch_size):
            batch = [dataset.sequences[i] for i in idx]
            same = prev_idx is not None and np.array_equal(np.sort(idx), np.sort(prev_idx))
            if same and not np.array_equal(idx, prev_idx):
                # reorder the batch to the previous composition so the warm start lines up
                idx = prev_idx
                batch = [dataset.sequences[i] for i in idx]
            value, grad, result = objective(params, batch, reference, config.tau, config.gw,
                                            warm_start=prev_plan if same else None)
            if not (math.isfinite(value) and np.all(np.isfinite(grad.flat()))):
                ids = [dataset.sequences[i].id for i in idx]
                msg = f"non-finite objective in epoch {epoch} on batch {ids}"
                if out_dir is not None:
                    out_dir.mkdir(parents=True, exist_ok=True)
                    path = out_dir / "checkpoint_last_good.json"
                    tpp.save_checkpoint(params, path)
                    msg += f"; last good parameters in {path}"
                raise TrainingError(msg)
            gw_sq = result.gw_squared
            nll = value - config.tau * gw_sq if config.tau else value
            nll_sum += nll * len(idx)
            gw_sum += gw_sq * len(idx)
            obj_sum += value * len(idx)
            params = opt.step(params, grad)
            prev_idx, prev_plan = idx, result.plan
        report.nll.append(nll_sum / M)
        report.gw_squared.append(gw_sum / M)
        report.objective.append(obj_sum / M)
        log.info("epoch %d: nll %.4f gw2 %.5f objective %.4f", epoch, report.nll[-1],
                 report.gw_squared[-1], report.objective[-1])

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "checkpoint.json"
        tpp.save_checkpoint(params, path)
        report.checkpoint = str(path)
    report.seconds = time.perf_counter() - start
    return params, report


def evaluate_model(params: tpp.TppParams, dataset: Dataset) -> tuple[float, float]:
    """Log-likelihood per event and next-type accuracy.

    Accuracy scores every event after the first: the predicted type is the
    argmax of the intensities at the true event time given the preceding
    history, ties going to the lowest type index.
    """
    total_ll = 0.0
    hits = scored = 0
    seqs = dataset.sequences
    for i in range(0, len(seqs), 64):
        chunk = seqs[i:i + 64]
        tape, hidden = tpp.forward(params, chunk, keep_hidden=True)
        total_ll += float(tape.log_likelihood.sum())
        for b, s in enumerate(chunk):
            n = len(s)
            if n < 2:
                continue
            h = hidden[b, :n - 1]
            gaps = np.diff(s.times)
            a = h @ params.w_out.T + params.alpha[None, :] * gaps[:, None] + params.b_out[None, :]
            hits += int(np.sum(np.argmax(a, axis=1) == s.types[1:]))
            scored += n - 1
    ell = total_ll / dataset.total_events
    acc = hits / scored if scored else 0.0
    return ell, acc


def write_run(out_dir, params: tpp.TppParams, report: TrainReport, config: TrainConfig) -> None:
    """Write ``checkpoint.json``, ``report.json`` and ``metrics.csv`` to ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "checkpoint.json"
    tpp.save_checkpoint(params, path, extra={"train_config": config.to_dict()})
    report.checkpoint = str(path)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "nll", "gw_squared", "objective"])
        for e, row in enumerate(zip(report.nll, report.gw_squared, report.objective)):
            w.writerow([e] + [repr(float(x)) for x in row])
