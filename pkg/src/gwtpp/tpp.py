"""Recurrent marked TPP with exponential-drift intensities.

A GRU cell consumes ``[type_embedding[c_n], log(1 + dt_n)]`` per event.
Between events the intensity of type ``c`` is

    lambda_c(t) = exp(w_c . h_n + alpha_c (t - t_n) + b_c),

where ``h_n`` is the state after the last event before ``t``. Its integral
over each interval has a closed form, so the log-likelihood and its
gradient are exact. Gradients are computed by an explicit reverse pass over
a padded batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Dataset, EventSequence

CHECKPOINT_FORMAT_VERSION = 1
ALPHA_LIMIT = 10.0
SERIES_THRESHOLD = 1e-4


@dataclass
class TppParams:
    """Model parameters; also used, shape for shape, to hold gradients."""
    type_embedding: np.ndarray   # (C, E)
    W: np.ndarray                # (3, D, E+1) input maps for update/reset/candidate
    U: np.ndarray                # (3, D, D) state maps
    b: np.ndarray                # (3, D)
    w_out: np.ndarray            # (C, D)
    alpha: np.ndarray            # (C,)
    b_out: np.ndarray            # (C,)

    @property
    def num_types(self) -> int:
        return self.type_embedding.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.type_embedding.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "TppParams":
        out, pos = [], 0
        for a in self.arrays():
            out.append(np.array(vec[pos:pos + a.size], dtype=float).reshape(a.shape))
            pos += a.size
        return TppParams(*out)

    def zeros_like(self) -> "TppParams":
        return TppParams(*[np.zeros_like(a) for a in self.arrays()])

    def copy(self) -> "TppParams":
        return TppParams(*[a.copy() for a in self.arrays()])

    def clamp_(self) -> "TppParams":
        np.clip(self.alpha, -ALPHA_LIMIT, ALPHA_LIMIT, out=self.alpha)
        return self


GradientBundle = TppParams


def zero_params(num_types: int, embed_dim: int, hidden_dim: int) -> TppParams:
    C, E, D = num_types, embed_dim, hidden_dim
    return TppParams(np.zeros((C, E)), np.zeros((3, D, E + 1)), np.zeros((3, D, D)), np.zeros((3, D)),
                     np.zeros((C, D)), np.zeros(C), np.zeros(C))


def init_params(num_types: int, embed_dim: int, hidden_dim: int, seed: int,
                dataset: Optional[Dataset] = None, scale: float = 0.1) -> TppParams:
    """Uniform(-scale, scale) weights; ``b_out`` starts at the empirical per-type rate if data is given."""
    rng = np.random.default_rng(seed)
    p = zero_params(num_types, embed_dim, hidden_dim)
    for a in p.arrays():
        a[...] = rng.uniform(-scale, scale, size=a.shape)
    if dataset is not None:
        mean_len = dataset.total_events / len(dataset)
        p.b_out[:] = np.log(mean_len / (num_types * dataset.horizon))
    return p.clamp_()


@dataclass
class EncodedSequence:
    hidden_states: np.ndarray       # (N, D), state after each event
    sequence_embedding: np.ndarray  # (D,), mean of hidden_states


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _integral(a, alpha, gap):
    """``int_0^gap exp(a + alpha s) ds`` and its derivative in ``alpha``.

    Uses a second-order series when ``|alpha * gap|`` is tiny.
    """
    x = alpha * gap
    small = np.abs(x) < SERIES_THRESHOLD
    safe_alpha = np.where(small, 1.0, alpha)
    ea = np.exp(a)
    g = np.where(small, gap * (1.0 + x / 2.0 + x * x / 6.0), np.expm1(x) / safe_alpha)
    dg = np.where(small, gap * gap * (0.5 + x / 3.0),
                  (x * np.exp(x) - np.expm1(x)) / (safe_alpha * safe_alpha))
    return ea * g, ea * dg


@dataclass
class _Batch:
    types: np.ndarray   # (B, N) int, padded with 0
    gaps: np.ndarray    # (B, N), padded with 0
    mask: np.ndarray    # (B, N) float
    lengths: np.ndarray
    final_gap: np.ndarray  # (B,) horizon - last time


def _pad(batch: Sequence[EventSequence]) -> _Batch:
    B = len(batch)
    N = max(len(s) for s in batch)
    types = np.zeros((B, N), dtype=np.int64)
    gaps = np.zeros((B, N))
    mask = np.zeros((B, N))
    lengths = np.zeros(B, dtype=np.int64)
    final_gap = np.zeros(B)
    for i, s in enumerate(batch):
        n = len(s)
        types[i, :n] = s.types
        gaps[i, :n] = np.diff(s.times, prepend=0.0)
        mask[i, :n] = 1.0
        lengths[i] = n
        final_gap[i] = s.horizon - s.times[-1]
    return _Batch(types, gaps, mask, lengths, final_gap)


@dataclass
class Tape:
    """Forward-pass record needed by ``backward``."""
    batch: _Batch
    log_likelihood: np.ndarray   # (B,)
    embeddings: np.ndarray       # (B, D)
    states: list                 # per-step tuples
    h_final: np.ndarray
    final_terms: tuple


def forward(params: TppParams, batch: Sequence[EventSequence], keep_hidden: bool = False):
    """Run the recurrence over a batch; returns a ``Tape`` (and hidden states if asked)."""
    pb = _pad(batch)
    B, N = pb.types.shape
    D, E = params.hidden_dim, params.embed_dim
    h = np.zeros((B, D))
    ll = np.zeros(B)
    emb_sum = np.zeros((B, D))
    states = []
    hidden = np.zeros((B, N, D)) if keep_hidden else None
    rows = np.arange(B)
    Wx = params.W[:, :, :E]
    Wt = params.W[:, :, E]
    for n in range(N):
        m = pb.mask[:, n]
        c = pb.types[:, n]
        gap = pb.gaps[:, n]
        # intensity on (t_{n-1}, t_n] driven by h
        a = h @ params.w_out.T + params.b_out
        F, dF = _integral(a, params.alpha[None, :], gap[:, None])
        ll += m * (a[rows, c] + params.alpha[c] * gap - F.sum(axis=1))
        # consume event n
        xe = params.type_embedding[c]
        xt = np.log1p(gap)
        pre = np.einsum("kde,be->kbd", Wx, xe) + Wt[:, None, :] * xt[None, :, None] + params.b[:, None, :]
        z = _sigmoid(pre[0] + h @ params.U[0].T)
        r = _sigmoid(pre[1] + h @ params.U[1].T)
        hu = h @ params.U[2].T
        cand = np.tanh(pre[2] + r * hu)
        h_new = (1.0 - z) * cand + z * h
        states.append((h, xe, xt, z, r, hu, cand, F, dF, m, c, gap))
        emb_sum += m[:, None] * h_new
        if keep_hidden:
            hidden[:, n] = h_new
        h = np.where(m[:, None] > 0, h_new, h)
    a = h @ params.w_out.T + params.b_out
    F, dF = _integral(a, params.alpha[None, :], pb.final_gap[:, None])
    ll -= F.sum(axis=1)
    emb = emb_sum / pb.lengths[:, None]
    tape = Tape(pb, ll, emb, states, h, (F, dF))
    if keep_hidden:
        return tape, hidden
    return tape


def backward(params: TppParams, tape: Tape, d_ll: np.ndarray,
             d_emb: Optional[np.ndarray] = None) -> TppParams:
    """Gradient of ``sum_b d_ll[b] * ll[b] + sum_b d_emb[b] . emb[b]`` with respect to the parameters."""
    pb = tape.batch
    B, N = pb.types.shape
    E = params.embed_dim
    g = params.zeros_like()
    rows = np.arange(B)
    d_ll = np.asarray(d_ll, dtype=float)
    d_emb_step = None if d_emb is None else d_emb / pb.lengths[:, None]

    F, dF = tape.final_terms
    dA = -d_ll[:, None] * F
    g.alpha -= (d_ll[:, None] * dF).sum(axis=0)
    g.w_out += dA.T @ tape.h_final
    g.b_out += dA.sum(axis=0)
    dh = dA @ params.w_out

    dWx = np.zeros((3, params.hidden_dim, E))
    dWt = np.zeros((3, params.hidden_dim))
    for n in range(N - 1, -1, -1):
        h, xe, xt, z, r, hu, cand, F, dF, m, c, gap = tape.states[n]
        mm = m[:, None]
        dh_new = mm * dh
        if d_emb_step is not None:
            dh_new = dh_new + mm * d_emb_step
        dh_prev = (1.0 - mm) * dh + dh_new * z
        dz = dh_new * (h - cand)
        dc = dh_new * (1.0 - z) * (1.0 - cand * cand)
        dr = dc * hu * r * (1.0 - r)
        dhu = dc * r
        dz = dz * z * (1.0 - z)
        dpre = np.stack([dz, dr, dc])                         # (3, B, D)
        g.b += dpre.sum(axis=1)
        dWx += np.einsum("kbd,be->kde", dpre, xe)
        dWt += np.einsum("kbd,b->kd", dpre, xt)
        g.U[0] += dz.T @ h
        g.U[1] += dr.T @ h
        g.U[2] += dhu.T @ h
        dh_prev += dz @ params.U[0] + dr @ params.U[1] + dhu @ params.U[2]
        dxe = np.einsum("kbd,kde->be", dpre, params.W[:, :, :E])
        np.add.at(g.type_embedding, c, dxe)
        # intensity terms on the interval ending at event n
        w = d_ll * m
        dA = -w[:, None] * F
        dA[rows, c] += w
        g.alpha -= (w[:, None] * dF).sum(axis=0)
        np.add.at(g.alpha, c, w * gap)
        g.w_out += dA.T @ h
        g.b_out += dA.sum(axis=0)
        dh = dh_prev + dA @ params.w_out
    g.W[:, :, :E] = dWx
    g.W[:, :, E] = dWt
    return g


def encode(params: TppParams, sequence: EventSequence) -> EncodedSequence:
    tape, hidden = forward(params, [sequence], keep_hidden=True)
    return EncodedSequence(hidden[0], tape.embeddings[0])


def encode_all(params: TppParams, sequences: Sequence[EventSequence], batch_size: int = 64) -> np.ndarray:
    """Sequence embeddings as an ``(M, D)`` array."""
    out = [forward(params, sequences[i:i + batch_size]).embeddings for i in range(0, len(sequences), batch_size)]
    return np.concatenate(out, axis=0)


def intensity(params: TppParams, encoded: EncodedSequence, sequence: EventSequence, c: int, t: float) -> float:
    if not 0 < t <= sequence.horizon:
        raise ValueError(f"t={t} outside (0, {sequence.horizon}]")
    return float(intensities(params, encoded, sequence, t)[c])


def intensities(params: TppParams, encoded: EncodedSequence, sequence: EventSequence, t: float) -> np.ndarray:
    """All per-type intensities at ``t`` given the events strictly before ``t``."""
    n = int(np.searchsorted(sequence.times, t, side="left"))
    if n == 0:
        h, tn = np.zeros(params.hidden_dim), 0.0
    else:
        h, tn = encoded.hidden_states[n - 1], sequence.times[n - 1]
    return np.exp(params.w_out @ h + params.alpha * (t - tn) + params.b_out)


def log_likelihood(params: TppParams, sequence: EventSequence) -> float:
    return float(forward(params, [sequence]).log_likelihood[0])


def log_likelihoods(params: TppParams, sequences: Sequence[EventSequence], batch_size: int = 64) -> np.ndarray:
    out = [forward(params, sequences[i:i + batch_size]).log_likelihood for i in range(0, len(sequences), batch_size)]
    return np.concatenate(out)


def nll_and_grad(params: TppParams, batch: Sequence[EventSequence]):
    """Mean per-sequence negative log-likelihood, its exact gradient, and the encodings."""
    if not batch:
        raise ValueError("empty batch")
    tape, hidden = forward(params, batch, keep_hidden=True)
    B = len(batch)
    nll = float(-tape.log_likelihood.mean())
    grad = backward(params, tape, np.full(B, -1.0 / B))
    encodings = [EncodedSequence(hidden[i, :len(s)], tape.embeddings[i]) for i, s in enumerate(batch)]
    return nll, grad, encodings


def _as_matrix(encodings) -> np.ndarray:
    if isinstance(encodings, np.ndarray):
        return encodings
    return np.stack([e.sequence_embedding for e in encodings])


def pairwise_sq_dists(H: np.ndarray) -> np.ndarray:
    diff = H[:, None, :] - H[None, :, :]
    return np.einsum("ijd,ijd->ij", diff, diff)


def embedding_kernel(encodings, sigma: float) -> np.ndarray:
    """Gaussian kernel ``exp(-||h_i - h_j||^2 / (2 sigma^2))`` over sequence embeddings."""
    H = _as_matrix(encodings)
    if H.shape[0] < 2:
        raise ValueError("embedding_kernel needs at least 2 embeddings")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    K = np.exp(-pairwise_sq_dists(H) / (2.0 * sigma * sigma))
    np.fill_diagonal(K, 1.0)
    return K


def embedding_kernel_backward(H: np.ndarray, K: np.ndarray, sigma: float, dK: np.ndarray) -> np.ndarray:
    """Pull ``dL/dK`` back to ``dL/dH`` with ``sigma`` held fixed."""
    S = (dK + dK.T) * K
    np.fill_diagonal(S, 0.0)
    return -(S.sum(axis=1)[:, None] * H - S @ H) / (sigma * sigma)


def save_checkpoint(params: TppParams, path, extra: Optional[dict] = None) -> None:
    obj = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "num_types": params.num_types, "embed_dim": params.embed_dim, "hidden_dim": params.hidden_dim,
        "params": {f.name: getattr(params, f.name).ravel().tolist() for f in fields(params)},
    }
    if extra:
        obj["extra"] = extra
    Path(path).write_text(json.dumps(obj))


def load_checkpoint(path) -> TppParams:
    obj = json.loads(Path(path).read_text())
    if obj.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format {obj.get('format_version')!r}")
    template = zero_params(obj["num_types"], obj["embed_dim"], obj["hidden_dim"])
    arrays = []
    for f in fields(template):
        ref = getattr(template, f.name)
        arrays.append(np.array(obj["params"][f.name], dtype=float).reshape(ref.shape))
    return TppParams(*arrays)
