"""Spectral clustering of kernel matrices and partition-agreement metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .core import Dataset
from .seqdist import distance_matrix, kernel_from_distances, median_bandwidth


class EigensolverError(RuntimeError):
    pass


@dataclass
class ClusteringReport:
    predicted_labels: np.ndarray
    nmi: float
    rand_index: float
    k: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["predicted_labels"] = [int(x) for x in self.predicted_labels]
        return d


def _round_robin_pairs(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint index pairs covering every pair once (circle method)."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(players[: m // 2])
        q = np.array(players[m // 2:][::-1])
        keep = (p < n) & (q < n)
        p, q = p[keep], q[keep]
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _off_norm(A):
    return float(np.linalg.norm(A - np.diag(A.diagonal())))


def jacobi_eigh(A: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each round rotates ``n/2`` disjoint index pairs at once; a sweep is the
    ``n - 1`` rounds of a round-robin schedule. Returns eigenvalues in
    ascending order and the matching orthonormal eigenvectors as columns.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix must be symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V
    scale = np.linalg.norm(A)
    rounds = _round_robin_pairs(n)
    for _ in range(max_sweeps):
        off = _off_norm(A)
        if off <= tol * max(scale, 1e-300):
            break
        for p, q in rounds:
            apq = A[p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = 0.5 * np.arctan2(2.0 * apq, A[q, q] - A[p, p])
            c, s = np.cos(theta), np.sin(theta)
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = Ap * c - Aq * s
            A[:, q] = Ap * s + Aq * c
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = Vp * c - Vq * s
            V[:, q] = Vp * s + Vq * c
    else:
        off = _off_norm(A)
        if off > 1e-8 * max(scale, 1e-300):
            raise EigensolverError(
                f"Jacobi did not converge in {max_sweeps} sweeps (n={n}, off-diagonal norm {off:.3e}, "
                f"matrix norm {scale:.3e})")
    w = A.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def kmeans(X: np.ndarray, k: int, seed: int, restarts: int = 20, max_iter: int = 300) -> np.ndarray:
    """Lloyd's k-means with k-means++ seeding; best of ``restarts`` by within-cluster SSE.

    Each restart has its own stream spawned from ``seed``; ties in cost go
    to the lowest restart index. An empty cluster is reseeded at the point
    farthest from its currently assigned center.
    """
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    best_labels, best_cost = None, np.inf
    for rng in [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(restarts)]:
        centers = _kmeans_pp(X, k, rng)
        labels = np.full(n, -1)
        for _ in range(max_iter):
            d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new = np.argmin(d2, axis=1)
            for j in range(k):
                if not np.any(new == j):
                    far = int(np.argmax(d2[np.arange(n), new]))
                    new[far] = j
                    d2[far, :] = 0.0
            if np.array_equal(new, labels):
                break
            labels = new
            centers = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
        cost = float(((X - centers[labels]) ** 2).sum())
        if cost < best_cost - 1e-12:
            best_labels, best_cost = labels, cost
    return best_labels


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = int(rng.integers(n)) if total <= 0 else int(rng.choice(n, p=d2 / total))
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.stack(centers)


def spectral_embedding(kernel: np.ndarray, k: int) -> np.ndarray:
    K = np.asarray(kernel, dtype=float)
    deg = K.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    A = inv_sqrt[:, None] * K * inv_sqrt[None, :]
    _, V = jacobi_eigh(A)
    Y = V[:, ::-1][:, :k]
    norms = np.linalg.norm(Y, axis=1, keepdims=True)
    return np.where(norms > 0, Y / np.where(norms > 0, norms, 1.0), 0.0)


def spectral_cluster(kernel: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Ng-Jordan-Weiss spectral clustering of a similarity matrix."""
    n = np.asarray(kernel).shape[0]
    if not 2 <= k <= n:
        raise ValueError(f"k={k} must lie in [2, {n}]")
    return kmeans(spectral_embedding(kernel, k), k, seed)


def _contingency(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"label arrays differ in length: {a.size} vs {b.size}")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1.0)
    return table


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(a, b) -> float:
    """Mutual information over the arithmetic mean of the two entropies (natural log)."""
    if len(a) < 1:
        raise ValueError("nmi needs at least one label")
    table = _contingency(a, b)
    n = table.sum()
    ha, hb = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if ha == 0 and hb == 0:
        return 1.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    return float(np.clip(mi / (0.5 * (ha + hb)), 0.0, 1.0))


def rand_index(a, b) -> float:
    if len(a) < 2:
        raise ValueError("rand_index needs at least two labels")
    table = _contingency(a, b)
    n = table.sum()
    pairs = n * (n - 1) / 2
    same_both = (table * (table - 1) / 2).sum()
    same_a = (table.sum(axis=1) * (table.sum(axis=1) - 1) / 2).sum()
    same_b = (table.sum(axis=0) * (table.sum(axis=0) - 1) / 2).sum()
    agree = pairs + 2 * same_both - same_a - same_b
    return float(agree / pairs)


def report(kernel: np.ndarray, k: int, truth, seed: int) -> ClusteringReport:
    labels = spectral_cluster(kernel, k, seed)
    return ClusteringReport(labels, nmi(labels, truth), rand_index(labels, truth), k)


def dis_sc_baseline(dataset: Dataset, k: int, mode: str = "singleton", seed: int = 0,
                    threads: int = 1, distances: Optional[np.ndarray] = None) -> ClusteringReport:
    """Nonparametric distance kernel followed by spectral clustering, scored against true labels."""
    truth = dataset.labels
    if truth is None:
        raise ValueError("dis_sc_baseline needs a fully labeled dataset")
    D = distances if distances is not None else distance_matrix(
        dataset.sequences, mode, dataset.num_types, dataset.horizon, threads=threads)
    K = kernel_from_distances(D, median_bandwidth(D))
    return report(K, k, truth, seed)
