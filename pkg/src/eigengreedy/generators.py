"""Test families: open spin chains, a random quadratic family, Examples 1 and 2."""

from __future__ import annotations

from functools import reduce

import numpy as np
import scipy.sparse as sp

from .affine import AffineFamily, ThetaTerm

# spin-1/2 operators in the Pauli normalisation used by the xxz chain
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_R2 = 1.0 / np.sqrt(2.0)
SPIN1_X = _R2 * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
SPIN1_Y = (-1j * _R2) * np.array([[0, 1, 0], [-1, 0, 1], [0, -1, 0]], dtype=complex)
SPIN1_Z = np.array([[1, 0, 0], [0, 0, 0], [0, 0, -1]], dtype=complex)


def _realify(mat: sp.csr_matrix) -> sp.csr_matrix:
    mat = mat.tocsr()
    mat.eliminate_zeros()
    if np.iscomplexobj(mat.data) and np.allclose(mat.data.imag, 0.0, atol=0.0):
        mat = mat.real.tocsr()
    return mat


def spin_site_operator(L: int, j: int, S: np.ndarray) -> sp.csr_matrix:
    """I^{(j-1)} (x) S (x) I^{(L-j)} as a sparse m^L x m^L matrix (j is 1-based)."""
    S = np.asarray(S)
    m = S.shape[0]
    if not 1 <= j <= L:
        raise ValueError(f"site index {j} outside 1..{L}")
    if not np.array_equal(S, S.conj().T):
        raise ValueError("site operator must be Hermitian")
    left = sp.identity(m ** (j - 1), format="csr", dtype=complex)
    right = sp.identity(m ** (L - j), format="csr", dtype=complex)
    out = sp.kron(sp.kron(left, sp.csr_matrix(S)), right, format="csr")
    return _realify(out)


def _site_ops(L: int, S: np.ndarray) -> list[sp.csr_matrix]:
    return [spin_site_operator(L, j, S) for j in range(1, L + 1)]


def xxz_family(L: int) -> AffineFamily:
    """Open xxz chain: A(mu) = A_1 + mu_1 A_2 - mu_2 A_3 on [-1, 2.5] x [0, 3.5]."""
    if L < 2:
        raise ValueError("xxz chain needs L >= 2")
    X, Y, Z = _site_ops(L, PAULI_X), _site_ops(L, PAULI_Y), _site_ops(L, PAULI_Z)
    hop = sum(X[j] @ X[j + 1] + Y[j] @ Y[j + 1] for j in range(L - 1))
    zz = sum(Z[j] @ Z[j + 1] for j in range(L - 1))
    mag = sum(Z)
    mats = (_realify(0.25 * hop), _realify(0.25 * zz), _realify(0.5 * mag))
    terms = (
        ThetaTerm.monomial([0, 0], 1.0),
        ThetaTerm.monomial([1, 0], 1.0),
        ThetaTerm.monomial([0, 1], -1.0),
    )
    return AffineFamily(terms, mats, np.array([[-1.0, 2.5], [0.0, 3.5]]), name=f"xxz_L{L}")


def blbq_family(L: int) -> AffineFamily:
    """Spin-1 bilinear-biquadratic chain with uniaxial anisotropy on [-pi, pi] x [-2, 3].

    A(mu) = cos(mu_1) A_1 + sin(mu_1) A_2 + mu_2 A_3.
    """
    if L < 2:
        raise ValueError("blbq chain needs L >= 2")
    ops = [_site_ops(L, S) for S in (SPIN1_X, SPIN1_Y, SPIN1_Z)]
    bilinear = sum(ops[a][j] @ ops[a][j + 1] for a in range(3) for j in range(L - 1))
    biquad = None
    for a in range(3):
        for b in range(3):
            for j in range(L - 1):
                prod = ops[a][j] @ ops[b][j + 1]
                term = prod @ prod
                biquad = term if biquad is None else biquad + term
    aniso = sum(ops[2][j] @ ops[2][j] for j in range(L))
    mats = (_realify(bilinear), _realify(biquad), _realify(aniso))
    terms = (ThetaTerm.cosine(0), ThetaTerm.sine(0), ThetaTerm.monomial([0, 1]))
    return AffineFamily(terms, mats, np.array([[-np.pi, np.pi], [-2.0, 3.0]]), name=f"blbq_L{L}")


def random_quadratic_family(n: int, seed: int = 0) -> AffineFamily:
    """A(mu) = mu^2 A_1 + mu A_2 on [0.1, 10] with symmetrised standard-normal A_q.

    Entries come from ``numpy.random.default_rng(seed)``; each A_q is (G + G^T)/2.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(2):
        G = rng.standard_normal((n, n))
        mats.append(0.5 * (G + G.T))
    terms = (ThetaTerm.monomial([2]), ThetaTerm.monomial([1]))
    return AffineFamily(terms, tuple(mats), np.array([[0.1, 10.0]]), name=f"random_n{n}_seed{seed}")


def example1_family() -> AffineFamily:
    """diag(mu, mu^2 - 2, -mu) on [-2, 2]; lambda_1 is double at mu = +-1."""
    e = np.eye(3)
    A_lin = np.outer(e[0], e[0]) - np.outer(e[2], e[2])
    A_quad = np.outer(e[1], e[1])
    A_const = -2.0 * np.outer(e[1], e[1])
    terms = (ThetaTerm.monomial([1]), ThetaTerm.monomial([2]), ThetaTerm.monomial([0]))
    return AffineFamily(terms, (A_lin, A_quad, A_const), np.array([[-2.0, 2.0]]), name="example1")


def lagrange_rank_one_family(nodes) -> AffineFamily:
    """A(mu) = -w(mu) w(mu)^*, w(mu) = sum_k L_k(mu) e_k / ||L(mu)|| on [-1, 1].

    One rational theta term per pair i <= k; this family is outside the
    affine grammar accepted by the lower-bound code.
    """
    nodes = tuple(float(x) for x in nodes)
    n = len(nodes)
    if len(set(nodes)) != n:
        raise ValueError("nodes must be pairwise distinct")
    if n < 2 or n > 20:
        raise ValueError("between 2 and 20 nodes supported")
    if min(nodes) < -1 or max(nodes) > 1:
        raise ValueError("nodes must lie in [-1, 1]")
    terms, mats = [], []
    for i in range(n):
        for k in range(i, n):
            B = np.zeros((n, n))
            B[i, k] = B[k, i] = 1.0
            terms.append(ThetaTerm("lagrange", -1.0, nodes=nodes, pair=(i, k)))
            mats.append(B)
    return AffineFamily(tuple(terms), tuple(mats), np.array([[-1.0, 1.0]]), name=f"lagrange_n{n}")


def lagrange_vector(nodes, mu: float) -> np.ndarray:
    """The normalised ground vector w(mu) of :func:`lagrange_rank_one_family`."""
    from .affine import lagrange_basis

    b = lagrange_basis(nodes, float(mu))
    return b / np.linalg.norm(b)


def total_sz(L: int) -> sp.csr_matrix:
    """sum_j Z_j for spin-1/2; commutes with every xxz A(mu)."""
    return _realify(reduce(lambda a, b: a + b, _site_ops(L, PAULI_Z)))
