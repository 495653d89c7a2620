import numpy as np
import pytest
from functools import reduce

from eigengreedy.generators import (PAULI_X, PAULI_Y, PAULI_Z, SPIN1_X, SPIN1_Y, SPIN1_Z, blbq_family,
                                    example1_family, lagrange_rank_one_family, lagrange_vector,
                                    random_quadratic_family, spin_site_operator, total_sz, xxz_family)

import oracles


def kron_site(L, j, S):
    m = S.shape[0]
    return reduce(np.kron, [np.eye(m)] * (j - 1) + [S] + [np.eye(m)] * (L - j))


def test_site_operator_examples():
    assert np.array_equal(spin_site_operator(1, 1, PAULI_Z).toarray(), np.diag([1, -1]))
    assert np.array_equal(spin_site_operator(2, 2, PAULI_Z).toarray(), np.diag([1, -1, 1, -1]))
    assert np.array_equal(spin_site_operator(3, 2, PAULI_X).toarray(), kron_site(3, 2, PAULI_X))


def test_site_operator_errors():
    with pytest.raises(ValueError):
        spin_site_operator(3, 4, PAULI_X)
    with pytest.raises(ValueError):
        spin_site_operator(3, 1, np.array([[0, 1], [0, 0]]))


def xxz_oracle(L):
    X = [kron_site(L, j, PAULI_X) for j in range(1, L + 1)]
    Y = [kron_site(L, j, PAULI_Y) for j in range(1, L + 1)]
    Z = [kron_site(L, j, PAULI_Z) for j in range(1, L + 1)]
    A1 = 0.25 * sum(X[j] @ X[j + 1] + Y[j] @ Y[j + 1] for j in range(L - 1))
    A2 = 0.25 * sum(Z[j] @ Z[j + 1] for j in range(L - 1))
    A3 = 0.5 * sum(Z)
    return A1, A2, A3


def blbq_oracle(L):
    S = [[kron_site(L, j, M) for j in range(1, L + 1)] for M in (SPIN1_X, SPIN1_Y, SPIN1_Z)]
    A1 = sum(S[a][j] @ S[a][j + 1] for a in range(3) for j in range(L - 1))
    A2 = sum(np.linalg.matrix_power(S[a][j] @ S[b][j + 1], 2) for a in range(3) for b in range(3)
             for j in range(L - 1))
    A3 = sum(S[2][j] @ S[2][j] for j in range(L))
    return A1, A2, A3


@pytest.mark.parametrize("L", [2, 3, 4])
def test_xxz_matches_kron_oracle(L):
    fam = xxz_family(L)
    assert fam.n == 2 ** L and fam.Q == 3
    for A, B in zip(fam.matrices, xxz_oracle(L)):
        assert np.max(np.abs(A.toarray() - B)) <= 1e-14


@pytest.mark.parametrize("L", [2, 3])
def test_blbq_matches_kron_oracle(L):
    fam = blbq_family(L)
    assert fam.n == 3 ** L
    for A, B in zip(fam.matrices, blbq_oracle(L)):
        assert np.max(np.abs(A.toarray() - B)) <= 1e-14


def test_xxz_examples():
    fam = xxz_family(2)
    assert np.array_equal(fam.matrices[2].toarray(), np.diag([1.0, 0, 0, -1]))
    lam1, m1, gap, _ = oracles.ground(fam, [1.0, 0.0])
    assert abs(lam1 + 0.75) < 1e-14 and m1 == 1 and abs(gap - 1) < 1e-14
    assert np.allclose(fam.domain, [[-1, 2.5], [0, 3.5]])


def test_xxz_L14_dimension():
    assert xxz_family(14).n == 16384


def test_blbq_L2_at_origin():
    fam = blbq_family(2)
    S = (SPIN1_X, SPIN1_Y, SPIN1_Z)
    ref = np.linalg.eigvalsh(sum(np.kron(M, M) for M in S))
    assert np.allclose(oracles.spectrum(fam, [0.0, 0.0]), ref, atol=1e-12)


@pytest.mark.parametrize("L", [2, 3, 4])
def test_xxz_conserves_magnetisation(L):
    fam = xxz_family(L)
    Sz = total_sz(L).toarray()
    rng = np.random.default_rng(L)
    for _ in range(5):
        A = oracles.dense(fam, [rng.uniform(-1, 2.5), rng.uniform(0, 3.5)])
        assert np.linalg.norm(A @ Sz - Sz @ A) <= 1e-12


def test_random_family_deterministic_and_symmetric():
    a, b = random_quadratic_family(20, 7), random_quadratic_family(20, 7)
    for x, y in zip(a.matrices, b.matrices):
        assert np.array_equal(x, y)
    A = a.assemble(1.0, dense=True)
    assert np.array_equal(A, A.T)
    assert np.allclose(A, a.matrices[0] + a.matrices[1])
    assert not np.array_equal(random_quadratic_family(20, 8).matrices[0], a.matrices[0])


def test_example1_spectra():
    f = example1_family()
    assert np.allclose(oracles.spectrum(f, 1.0), [-1, -1, 1])
    lam, m1, gap, _ = oracles.ground(f, 1.0)
    assert m1 == 2
    lam, m1, gap, _ = oracles.ground(f, 0.0)
    assert lam == -2 and gap == 2
    lam, m1, gap, _ = oracles.ground(f, 2.0)
    assert lam == -2 and m1 == 1 and gap == 4


def test_lagrange_family():
    nodes = [-0.9, -0.3, 0.1, 0.6, 1.0]
    fam = lagrange_rank_one_family(nodes)
    assert fam.is_rational
    for k, x in enumerate(nodes):
        lam, m1, _, W = oracles.ground(fam, x)
        assert abs(abs(W[k, 0]) - 1) < 1e-12
    rng = np.random.default_rng(0)
    for mu in rng.uniform(-1, 1, 100):
        w = np.linalg.eigvalsh(oracles.dense(fam, mu))
        assert abs(w[0] + 1) < 1e-10 and abs(w[1]) < 1e-10
        assert abs(np.linalg.norm(lagrange_vector(nodes, mu)) - 1) < 1e-14


def test_lagrange_rejects_duplicates():
    with pytest.raises(ValueError):
        lagrange_rank_one_family([0.1, 0.1, 0.5])
