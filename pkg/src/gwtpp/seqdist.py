"""Nonparametric distance between event sequences and the kernel built on it.

Each event is read as a vector ``[t, one_hot(c)]`` with coordinate maxima
``r = [T, 1, ..., 1]``. For an index subset ``I`` the element kernel is
``prod_{i in I} (r_i - |e_i - e'_i|)``, a product of triangular kernels and
therefore PSD, so the subset distance is an MMD between the two event sets.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Dataset, EventSequence

FULL_MODE_MAX_INDICES = 16
SNAP_TO_ZERO = 1e-12


class CapabilityError(ValueError):
    pass


@dataclass
class Counters:
    """Evaluation counters, used to check symmetry exploitation and cost."""
    pair_evaluations: int = 0
    element_kernel_evaluations: int = 0

    def reset(self) -> None:
        self.pair_evaluations = 0
        self.element_kernel_evaluations = 0


COUNTERS = Counters()


def parse_mode(mode: str) -> str:
    mode = mode.lower()
    if mode not in ("full", "singleton"):
        raise ValueError(f"subset mode must be 'full' or 'singleton', got {mode!r}")
    return mode


def subsets_for(mode: str, num_types: int) -> list[tuple[int, ...]]:
    mode = parse_mode(mode)
    n = num_types + 1
    if mode == "singleton":
        return [(i,) for i in range(n)]
    if n > FULL_MODE_MAX_INDICES:
        raise CapabilityError(f"full subset enumeration needs 2^{n} subsets; limited to {FULL_MODE_MAX_INDICES} indices")
    return [s for k in range(n + 1) for s in itertools.combinations(range(n), k)]


def _coordinate_kernels(ta, ca, tb, cb, num_types: int, horizon: float) -> list[np.ndarray]:
    """Per-coordinate factors ``r_i - |e_i - e'_i|`` as ``N_a x N_b`` matrices."""
    out = [horizon - np.abs(ta[:, None] - tb[None, :])]
    for i in range(num_types):
        a = ca == i
        b = cb == i
        out.append((a[:, None] == b[None, :]).astype(float))
    return out


def _block_sums(ta, ca, tb, cb, subsets, num_types, horizon) -> np.ndarray:
    factors = _coordinate_kernels(ta, ca, tb, cb, num_types, horizon)
    sums = np.empty(len(subsets))
    for j, subset in enumerate(subsets):
        if not subset:
            sums[j] = float(len(ta) * len(tb))
            continue
        k = factors[subset[0]]
        for i in subset[1:]:
            k = k * factors[i]
        sums[j] = k.sum()
    COUNTERS.element_kernel_evaluations += sum(len(s) for s in subsets) * len(ta) * len(tb)
    return sums


def _subset_distances(a: EventSequence, b: EventSequence, subsets, num_types, horizon,
                      self_a=None, self_b=None) -> np.ndarray:
    if self_a is None:
        self_a = _block_sums(a.times, a.types, a.times, a.types, subsets, num_types, horizon)
    if self_b is None:
        self_b = _block_sums(b.times, b.types, b.times, b.types, subsets, num_types, horizon)
    cross = _block_sums(a.times, a.types, b.times, b.types, subsets, num_types, horizon)
    return np.sqrt(np.maximum(self_a + self_b - 2.0 * cross, 0.0))


def subset_distance(a: EventSequence, b: EventSequence, subset: Iterable[int],
                    num_types: int, horizon: float) -> float:
    subset = tuple(sorted(set(subset)))
    if any(not 0 <= i <= num_types for i in subset):
        raise ValueError(f"subset {subset} not within [0, {num_types}]")
    return float(_subset_distances(a, b, [subset], num_types, horizon)[0])


def pair_distance(a: EventSequence, b: EventSequence, mode: str, num_types: int, horizon: float) -> float:
    """Subset-averaged distance: all ``2^(C+1)`` subsets, or the ``C+1`` singletons."""
    subsets = subsets_for(mode, num_types)
    COUNTERS.pair_evaluations += 1
    d = float(np.mean(_subset_distances(a, b, subsets, num_types, horizon)))
    return 0.0 if d < SNAP_TO_ZERO else d


def distance_matrix(sequences: Sequence[EventSequence], mode: str, num_types: int, horizon: float,
                    threads: int = 1) -> np.ndarray:
    """Symmetric pairwise distance matrix, one evaluation per unordered pair.

    Within-sequence sums are computed once per sequence and reused across
    its pairs. With ``threads > 1`` rows are distributed over a thread pool;
    every entry is still produced by the same arithmetic, so the result is
    identical to the serial one.
    """
    n = len(sequences)
    if n < 2:
        raise ValueError("distance_matrix needs at least 2 sequences")
    subsets = subsets_for(mode, num_types)
    selfs = [_block_sums(s.times, s.types, s.times, s.types, subsets, num_types, horizon) for s in sequences]
    D = np.zeros((n, n))

    def row(i):
        for j in range(i + 1, n):
            COUNTERS.pair_evaluations += 1
            d = float(np.mean(_subset_distances(sequences[i], sequences[j], subsets, num_types, horizon,
                                                selfs[i], selfs[j])))
            D[i, j] = D[j, i] = 0.0 if d < SNAP_TO_ZERO else d

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(row, range(n)))
    else:
        for i in range(n):
            row(i)
    return D


def median_bandwidth(d: np.ndarray) -> float:
    """Median of the strict upper triangle, falling back to the smallest positive entry, then 1."""
    d = np.asarray(d, dtype=float)
    if d.shape[0] < 2:
        raise ValueError("median_bandwidth needs at least 2 points")
    upper = d[np.triu_indices(d.shape[0], k=1)]
    sigma = float(np.median(upper))
    if sigma > 0:
        return sigma
    positive = upper[upper > 0]
    return float(positive.min()) if positive.size else 1.0


def kernel_from_distances(d: np.ndarray, sigma: float, squared: bool = False) -> np.ndarray:
    """``exp(-d / (2 sigma^2))``; ``squared=True`` uses ``d**2`` in the exponent instead."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    d = np.asarray(d, dtype=float)
    x = d * d if squared else d
    K = np.exp(-x / (2.0 * sigma * sigma))
    np.fill_diagonal(K, 1.0)
    return K


def sample_reference_kernel(dataset: Dataset, L: int, mode: str, seed: int,
                            squared: bool = False, threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Kernel over ``L`` sequences drawn uniformly without replacement.

    Returns ``(kernel, indices)`` with ``indices`` in draw order.
    """
    M = len(dataset)
    if not 2 <= L <= M:
        raise ValueError(f"reference size L={L} must lie in [2, {M}]")
    rng = np.random.default_rng(seed)
    idx = rng.choice(M, size=L, replace=False)
    seqs = [dataset.sequences[i] for i in idx]
    D = distance_matrix(seqs, mode, dataset.num_types, dataset.horizon, threads=threads)
    return kernel_from_distances(D, median_bandwidth(D), squared=squared), idx
