import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gwtpp.core import Dataset, Event, EventSequence, to_event_vector
from gwtpp.seqdist import (COUNTERS, CapabilityError, distance_matrix, kernel_from_distances, median_bandwidth,
                           pair_distance, sample_reference_kernel, subset_distance, subsets_for)
from gwtpp.simulate import default_plan, make_synthetic

from conftest import random_dataset, random_sequence


def seq(*events, T=10.0, sid="x"):
    return EventSequence(sid, tuple(Event(t, c) for t, c in events), T)


def brute_subset_distance(a, b, subset, C, T):
    """Direct MMD from event vectors, one element-kernel product at a time."""
    va = [to_event_vector(e, C, T) for e in a.events]
    vb = [to_event_vector(e, C, T) for e in b.events]

    def k(x, y):
        return math.prod(x.bounds[i] - abs(x.coords[i] - y.coords[i]) for i in subset)

    def block(u, v):
        return sum(k(x, y) for x in u for y in v)

    return math.sqrt(max(block(va, va) + block(vb, vb) - 2 * block(va, vb), 0.0))


def test_hand_examples():
    a, b = seq((1.0, 0)), seq((3.0, 0))
    assert subset_distance(a, b, [0], 1, 10.0) == pytest.approx(2.0, abs=1e-12)
    assert subset_distance(a, b, [1], 1, 10.0) == 0.0
    assert abs(pair_distance(a, b, "full", 1, 10.0) - 1.0) < 1e-12
    assert abs(pair_distance(a, b, "singleton", 1, 10.0) - 1.0) < 1e-12
    assert pair_distance(a, a, "full", 1, 10.0) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    C, T = 3, 10.0
    a = random_sequence(rng, C, T, 6)
    b = random_sequence(rng, C, T, 4)
    for subset in subsets_for("full", C):
        assert subset_distance(a, b, subset, C, T) == pytest.approx(brute_subset_distance(a, b, subset, C, T),
                                                                   rel=1e-10, abs=1e-9)


def test_pseudo_metric_on_simulated_pairs():
    ds = make_synthetic(default_plan(("Hawkes", "InhomPoisson"), 25, seed=3))
    rng = np.random.default_rng(0)
    for _ in range(50):
        i, j, k = rng.choice(len(ds), 3, replace=False)
        a, b, c = ds.sequences[i], ds.sequences[j], ds.sequences[k]
        dab = pair_distance(a, b, "singleton", 5, 50.0)
        assert abs(dab - pair_distance(b, a, "singleton", 5, 50.0)) <= 1e-9 and dab >= 0
        assert pair_distance(a, a, "singleton", 5, 50.0) == 0.0
        assert dab <= pair_distance(a, c, "singleton", 5, 50.0) + pair_distance(c, b, "singleton", 5, 50.0) + 1e-9


def test_triangle_on_random_triples():
    ds = random_dataset(7, M=12)
    D = distance_matrix(ds.sequences, "full", 3, 10.0)
    rng = np.random.default_rng(1)
    for _ in range(100):
        i, j, k = rng.choice(12, 3, replace=False)
        assert D[i, j] <= D[i, k] + D[k, j] + 1e-9


def test_full_and_singleton_rank_agree():
    ds = random_dataset(11, M=20, num_types=3, n_range=(2, 15))
    Df = distance_matrix(ds.sequences, "full", 3, 10.0)
    Ds = distance_matrix(ds.sequences, "singleton", 3, 10.0)
    iu = np.triu_indices(20, 1)
    assert stats.spearmanr(Df[iu], Ds[iu]).statistic > 0.8


def test_pair_evaluations_counted_once():
    ds = random_dataset(2, M=3)
    COUNTERS.reset()
    distance_matrix(ds.sequences, "singleton", 3, 10.0)
    assert COUNTERS.pair_evaluations == 3


def test_duplicates_have_zero_distance_and_threads_agree():
    ds = random_dataset(4, M=5)
    seqs = list(ds.sequences) + [EventSequence("dup", ds.sequences[0].events, 10.0)]
    D1 = distance_matrix(seqs, "singleton", 3, 10.0)
    D4 = distance_matrix(seqs, "singleton", 3, 10.0, threads=4)
    assert D1[0, 5] == 0.0
    np.testing.assert_array_equal(D1, D4)
    np.testing.assert_array_equal(D1, D1.T)


def test_full_mode_capability_limit():
    with pytest.raises(CapabilityError):
        subsets_for("full", 16)
    assert len(subsets_for("full", 3)) == 16
    assert len(subsets_for("singleton", 16)) == 17


@pytest.mark.parametrize("offdiag,expected", [((1, 2, 3), 2.0), ((0, 0, 0), 1.0), ((0, 0, 5), 5.0)])
def test_median_bandwidth(offdiag, expected):
    d = np.zeros((3, 3))
    d[0, 1], d[0, 2], d[1, 2] = offdiag
    assert median_bandwidth(d + d.T) == expected


def test_kernel_from_distances():
    sigma = 1.5
    d = np.array([[0, 2 * sigma ** 2, 1.0], [2 * sigma ** 2, 0, 3.0], [1.0, 3.0, 0]])
    K = kernel_from_distances(d, sigma)
    assert K[0, 0] == 1.0 and K[0, 1] == pytest.approx(math.exp(-1))
    assert K[1, 2] < K[0, 2]
    Ks = kernel_from_distances(d, sigma, squared=True)
    assert Ks[0, 2] == pytest.approx(math.exp(-1 / (2 * sigma ** 2)))


def test_reference_kernel_sampling():
    ds = random_dataset(5, M=8)
    K1, i1 = sample_reference_kernel(ds, 5, "singleton", 3)
    K2, i2 = sample_reference_kernel(ds, 5, "singleton", 3)
    np.testing.assert_array_equal(i1, i2)
    np.testing.assert_array_equal(K1, K2)
    Kall, iall = sample_reference_kernel(ds, 8, "singleton", 0)
    assert sorted(iall) == list(range(8))


def test_reference_kernel_shows_block_structure():
    ds = make_synthetic(default_plan(("Hawkes", "InhomPoisson"), 40, seed=9))
    K, idx = sample_reference_kernel(ds, 40, "singleton", 0)
    lab = ds.labels[idx]
    same = lab[:, None] == lab[None, :]
    off = ~np.eye(40, dtype=bool)
    assert K[same & off].mean() > K[~same].mean()


events = st.lists(st.tuples(st.floats(0.01, 9.99), st.integers(0, 2)), min_size=1, max_size=6,
                  unique_by=lambda e: e[0])


@settings(max_examples=40, deadline=None)
@given(events, events, events)
def test_pseudo_metric_property(ea, eb, ec):
    a, b, c = (seq(*sorted(e)) for e in (ea, eb, ec))
    d = lambda x, y: pair_distance(x, y, "full", 3, 10.0)
    assert d(a, b) == pytest.approx(d(b, a), abs=1e-12)
    assert d(a, b) <= d(a, c) + d(c, b) + 1e-9
