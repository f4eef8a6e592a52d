import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn import metrics

from gwtpp.cluster_eval import (EigensolverError, dis_sc_baseline, jacobi_eigh, kmeans, nmi, rand_index,
                                spectral_cluster)
from gwtpp.core import Dataset, EventSequence

from conftest import random_dataset


def block_kernel(sizes, within=0.9, across=0.1, noise=0.0, seed=0):
    truth = np.repeat(np.arange(len(sizes)), sizes)
    K = np.where(truth[:, None] == truth[None, :], within, across)
    if noise:
        E = np.random.default_rng(seed).uniform(-noise, noise, size=K.shape)
        K = K + (E + E.T) / 2
    np.fill_diagonal(K, 1.0)
    return K, truth


@pytest.mark.parametrize("n", [1, 2, 5, 17, 40])
def test_jacobi_against_lapack(n):
    A = np.random.default_rng(n).normal(size=(n, n))
    A = A + A.T
    w, V = jacobi_eigh(A)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(A), atol=1e-10 * max(1, np.abs(w).max()))
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, A, atol=1e-10)
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)


def test_jacobi_rejects_nonsymmetric_and_reports_nonconvergence():
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
    A = np.random.default_rng(0).normal(size=(30, 30))
    with pytest.raises(EigensolverError):
        jacobi_eigh(A + A.T, max_sweeps=1)


def test_exact_block_recovery():
    K, truth = block_kernel([10, 10])
    assert nmi(spectral_cluster(K, 2, 0), truth) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_noisy_block_recovery(seed):
    K, truth = block_kernel([20, 20], noise=0.01, seed=seed)
    assert nmi(spectral_cluster(K, 2, seed), truth) == 1.0


def test_all_ones_kernel():
    labels = spectral_cluster(np.ones((6, 6)), 2, 0)
    assert rand_index(labels, labels) == 1.0


def test_permutation_equivariance():
    K, truth = block_kernel([8, 12, 10], noise=0.02, seed=3)
    perm = np.random.default_rng(1).permutation(len(truth))
    a = spectral_cluster(K, 3, 0)
    b = spectral_cluster(K[np.ix_(perm, perm)], 3, 0)
    assert nmi(a[perm], b) == 1.0


def test_kmeans_deterministic_and_separates():
    rng = np.random.default_rng(0)
    X = np.r_[rng.normal(0, 0.1, (15, 2)), rng.normal(3, 0.1, (15, 2))]
    a, b = kmeans(X, 2, 5), kmeans(X, 2, 5)
    np.testing.assert_array_equal(a, b)
    assert nmi(a, np.repeat([0, 1], 15)) == 1.0


def test_nmi_examples():
    assert nmi([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-15)
    # contingency [[2,0],[1,1]]: H(a)=ln2, H(b)=H(3/4,1/4), I = H(b) - 1/2*ln2... computed directly
    hb = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
    mi = 0.5 * math.log(0.5 / (0.5 * 0.75)) + 0.25 * math.log(0.25 / (0.5 * 0.75)) + 0.25 * math.log(0.25 / (0.5 * 0.25))
    assert nmi([0, 0, 1, 1], [0, 0, 0, 1]) == pytest.approx(mi / ((math.log(2) + hb) / 2), rel=1e-12)


def test_rand_index_examples():
    assert rand_index([0, 1, 2], [0, 1, 2]) == 1.0
    assert rand_index([0, 1], [1, 0]) == 1.0
    assert rand_index([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(1 / 3)


labelings = st.integers(2, 30).flatmap(lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n),
                                                           st.lists(st.integers(0, 4), min_size=n, max_size=n)))


@settings(max_examples=100, deadline=None)
@given(labelings)
def test_metrics_against_sklearn(pair):
    a, b = pair
    if len(set(a)) > 1 or len(set(b)) > 1:
        assert nmi(a, b) == pytest.approx(metrics.normalized_mutual_info_score(a, b), abs=1e-10)
    assert rand_index(a, b) == pytest.approx(metrics.rand_score(a, b), abs=1e-12)
    assert nmi(a, b) == pytest.approx(nmi(b, a), abs=1e-12)
    relabel = {x: (x * 3 + 1) % 7 for x in set(a)}
    assert rand_index([relabel[x] for x in a], b) == pytest.approx(rand_index(a, b), abs=1e-12)


def test_baseline_on_duplicated_groups():
    base = random_dataset(1, M=2)
    seqs = [EventSequence(f"{g}-{i}", base.sequences[g].events, 10.0, g) for g in (0, 1) for i in range(6)]
    rep = dis_sc_baseline(Dataset(tuple(seqs), 3, 10.0), 2, seed=0)
    assert rep.nmi == 1.0
    rep2 = dis_sc_baseline(Dataset(tuple(seqs), 3, 10.0), 2, seed=0)
    np.testing.assert_array_equal(rep.predicted_labels, rep2.predicted_labels)
