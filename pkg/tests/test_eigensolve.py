import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigengreedy.eigensolve import (EigenSolverError, cluster, dense_eig, fix_phase, lowest_clusters,
                                    smallest_k)
from eigengreedy.generators import blbq_family, example1_family, random_quadratic_family, xxz_family

import oracles


def test_cluster_examples():
    c = cluster([-1.0, -1.0, 1.0])
    assert list(c.multiplicities) == [2, 1] and np.allclose(c.values, [-1, 1])
    c = cluster([-2.0, 0.0, 0.0])
    assert list(c.multiplicities) == [1, 2]
    c = cluster([-5.0, -5.0 + 1e-9, -4.0])
    assert list(c.multiplicities) == [2, 1]
    c = cluster([-5.0, -5.0 + 1e-6])
    assert list(c.multiplicities) == [1, 1]
    c = cluster([-1e-15, 1e-15, 1.0])
    assert list(c.multiplicities) == [2, 1] and c.values[0] == 0.0


def test_cluster_chains_transitively():
    step = 0.6e-8
    c = cluster([1.0, 1.0 + step, 1.0 + 2 * step, 2.0])
    assert list(c.multiplicities) == [3, 1]


def test_cluster_rejects_unsorted():
    with pytest.raises(ValueError):
        cluster([1.0, 0.0])


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=30))
def test_cluster_partition_properties(raw):
    vals = np.sort(np.asarray(raw))
    c = cluster(vals)
    assert c.total == len(vals)
    assert c.starts[0] == 0 and np.all(np.diff(c.starts) > 0)
    assert np.all(np.diff(c.values) > 0) or len(c) == 1
    # clustering each cluster again leaves it whole
    for k in range(len(c)):
        members = vals[c.member_range(k)]
        assert len(cluster(members)) == 1


def test_fix_phase_makes_pivot_positive():
    rng = np.random.default_rng(3)
    V = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    W = fix_phase(V)
    piv = W[np.argmax(np.abs(W), axis=0), np.arange(3)]
    assert np.allclose(piv.imag, 0) and np.all(piv.real > 0)
    assert np.allclose(np.abs(W), np.abs(V))


def test_dense_eig_example1():
    pairs = dense_eig(example1_family().assemble(0.0, dense=True))
    assert np.array_equal(pairs.values, [-2, 0, 0])


@pytest.mark.parametrize("method", ["dense", "lanczos"])
@pytest.mark.parametrize("family,mu", [(xxz_family(8), [0.3, 1.2]), (blbq_family(5), [0.4, 0.7]),
                                       (random_quadratic_family(300, 2), 0.5)], ids=["xxz", "blbq", "random"])
def test_smallest_k_matches_dense_oracle(method, family, mu):
    ref = oracles.spectrum(family, mu)
    pairs = smallest_k(family, mu, 4, method=method)
    scale = np.max(np.abs(ref))
    assert np.max(np.abs(pairs.values - ref[:4])) <= 1e-10 * scale
    A = oracles.dense(family, mu)
    R = A @ pairs.vectors - pairs.vectors * pairs.values
    assert np.linalg.norm(R, 2) <= 1e-8 * scale
    assert np.linalg.norm(pairs.vectors.conj().T @ pairs.vectors - np.eye(4)) <= 1e-10


def test_smallest_k_flags_degenerate_split():
    pairs = smallest_k(example1_family(), 1.0, 1)
    assert pairs.degenerate
    assert not smallest_k(example1_family(), 1.0, 2).degenerate


def test_smallest_k_errors():
    with pytest.raises(ValueError):
        smallest_k(example1_family(), 0.0, 4)
    with pytest.raises(EigenSolverError):
        smallest_k(xxz_family(6), [0.0, 0.0], 2, method="dense", dense_limit=10)


def test_lowest_clusters_example1():
    low = lowest_clusters(example1_family(), 1.0, 1)
    assert low.ell == 2 and low.next_value == pytest.approx(1.0)
    low = lowest_clusters(example1_family(), 0.0, 2)
    assert low.ell == 3 and low.next_value == np.inf


def test_lowest_clusters_never_truncates_degenerate_cluster():
    fam = xxz_family(8)
    low = lowest_clusters(fam, [-1.0, 0.0], 1, initial_k=2)
    assert low.ell == 9
    lam, m1, gap, W = oracles.ground(fam, [-1.0, 0.0])
    assert abs(low.next_value - (lam + gap)) < 1e-10
    assert oracles.projection_error(W, low.vectors) < 1e-8


def test_lowest_clusters_rejects_scalar_spectrum():
    from eigengreedy.affine import AffineFamily, ThetaTerm
    fam = AffineFamily((ThetaTerm.monomial([0]),), (np.eye(3),), [[0, 1]])
    with pytest.raises(EigenSolverError):
        lowest_clusters(fam, 0.5, 1)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 10), st.integers(0, 10))
def test_smallest_k_deterministic(mu, seed):
    fam = random_quadratic_family(40, seed)
    a = smallest_k(fam, mu, 3, method="lanczos", seed=1)
    b = smallest_k(fam, mu, 3, method="lanczos", seed=1)
    assert np.array_equal(a.values, b.values)


def test_lanczos_zero_matrix_falls_back():
    fam = random_quadratic_family(40, 0)
    with pytest.warns(UserWarning):
        pairs = smallest_k(fam, 0.0, 2, method="lanczos")
    assert np.array_equal(pairs.values, [0.0, 0.0])
