"""Full- and reduced-order Hermitian eigensolvers and multiplicity clustering."""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096
CLUSTER_ABS = 1e-14
CLUSTER_REL = 1e-8


class EigenSolverError(RuntimeError):
    pass


@dataclass
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class EigenClustering:
    """Distinct eigenvalues with multiplicities; ``starts[k]`` indexes the first member."""

    values: np.ndarray
    multiplicities: np.ndarray
    starts: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def count(self, nclusters: int) -> int:
        """Number of eigenvalues in the first ``nclusters`` clusters."""
        return int(np.sum(self.multiplicities[:nclusters]))

    def member_range(self, k: int) -> range:
        return range(int(self.starts[k]), int(self.starts[k] + self.multiplicities[k]))

    @property
    def total(self) -> int:
        return int(np.sum(self.multiplicities))


def fix_phase(vectors: np.ndarray) -> np.ndarray:
    """Scale each column so its largest-magnitude entry is real and positive."""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[idx, np.arange(vectors.shape[1])]
    phase = np.where(np.abs(pivots) > 0, np.abs(pivots) / np.where(pivots == 0, 1, pivots), 1)
    return vectors * phase[None, :]


def dense_eig(A) -> EigenPairs:
    """All eigenpairs of a Hermitian matrix, ascending."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    try:
        vals, vecs = sla.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"dense eigensolver failed: {exc}") from exc
    return EigenPairs(vals, fix_phase(vecs))


def cluster(values, tol_abs: float = CLUSTER_ABS, tol_rel: float = CLUSTER_REL) -> EigenClustering:
    """Group ascending eigenvalues into coalescent clusters.

    Neighbours a <= b coalesce when both |a|, |b| < tol_abs (cluster value 0)
    or |a - b| / max(|a|, |b|) < tol_rel.  Chaining is transitive along
    adjacent pairs.  Cluster values are member means.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return EigenClustering(np.empty(0), np.empty(0, dtype=int), np.empty(0, dtype=int))
    if np.any(np.diff(values) < 0):
        raise ValueError("cluster expects ascending values")
    starts = [0]
    for i in range(1, values.size):
        a, b = values[i - 1], values[i]
        scale = max(abs(a), abs(b))
        tiny = abs(a) < tol_abs and abs(b) < tol_abs
        close = scale > 0 and abs(b - a) / scale < tol_rel
        if not (tiny or close or a == b):
            starts.append(i)
    starts = np.array(starts, dtype=int)
    mult = np.diff(np.append(starts, values.size))
    cvals = np.empty(len(starts))
    for k, (s, m) in enumerate(zip(starts, mult)):
        members = values[s:s + m]
        cvals[k] = 0.0 if np.all(np.abs(members) < tol_abs) and m > 1 else members.mean()
    return EigenClustering(cvals, mult, starts)


def _start_vector(n: int, mu, seed: int, dtype) -> np.ndarray:
    key = zlib.crc32(np.ascontiguousarray(np.asarray(mu, dtype=float)).tobytes())
    rng = np.random.default_rng([seed, key])
    v0 = rng.standard_normal(n)
    if np.issubdtype(dtype, np.complexfloating):
        v0 = v0 + 1j * rng.standard_normal(n)
    return v0


def smallest_k(family, mu, k: int, tol: float = 1e-14, method: str = "auto",
               dense_limit: int = DENSE_LIMIT, seed: int = 0,
               tol_abs: float = CLUSTER_ABS, tol_rel: float = CLUSTER_REL) -> EigenPairs:
    """The k smallest eigenpairs of A(mu).

    ``method`` is ``dense`` (LAPACK subset solve), ``lanczos`` (ARPACK
    implicitly restarted Lanczos on the sparse assembly) or ``auto``.
    Two extra eigenvalues are computed; ``degenerate`` is set when the k-th
    and (k+1)-th coalesce, meaning the caller should enlarge k.
    """
    n = family.n
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    want = min(n, k + 2)
    if method == "auto":
        method = "dense" if n <= dense_limit else "lanczos"
    if method == "lanczos" and want >= n - 1:
        method = "dense"
    if method == "dense":
        if n > dense_limit:
            raise EigenSolverError(f"n={n} exceeds the dense limit {dense_limit}")
        A = family.assemble(mu, dense=True)
        try:
            vals, vecs = sla.eigh(A, subset_by_index=[0, want - 1])
        except np.linalg.LinAlgError as exc:
            raise EigenSolverError(str(exc)) from exc
    elif method == "lanczos":
        A = family.assemble(mu)
        if not sp.issparse(A):
            A = sp.csr_matrix(A)
        v0 = _start_vector(n, mu, seed, A.dtype)
        ncv = min(n - 1, max(2 * want + 1, want + 32))
        try:
            vals, vecs = spla.eigsh(A, k=want, which="SA", tol=tol, v0=v0, ncv=ncv,
                                    maxiter=max(1000, 50 * n))
        except spla.ArpackNoConvergence as exc:
            raise EigenSolverError(f"Lanczos did not converge: {len(exc.eigenvalues)} of {want} pairs") from exc
        except spla.ArpackError as exc:
            # e.g. A(mu) = 0 annihilates the start vector
            if n > dense_limit:
                raise EigenSolverError(f"Lanczos failed: {exc}") from exc
            return smallest_k(family, mu, k, tol, "dense", dense_limit, seed, tol_abs, tol_rel)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        # re-orthonormalise within near-degenerate groups
        vecs, _ = np.linalg.qr(vecs)
        H = vecs.conj().T @ (A @ vecs)
        vals, rot = np.linalg.eigh(0.5 * (H + H.conj().T))
        vecs = vecs @ rot
    else:
        raise ValueError(f"unknown method {method!r}")
    degenerate = False
    if want > k:
        cl = cluster(vals, tol_abs, tol_rel)
        owner = np.repeat(np.arange(len(cl)), cl.multiplicities)
        degenerate = bool(owner[k - 1] == owner[k])
    return EigenPairs(vals[:k].copy(), fix_phase(vecs[:, :k]), degenerate)


@dataclass
class LowClusters:
    """Eigenpairs of the first few clusters of A(mu) plus the next eigenvalue."""

    values: np.ndarray
    vectors: np.ndarray
    next_value: float
    clustering: EigenClustering

    @property
    def ell(self) -> int:
        return len(self.values)


def lowest_clusters(family, mu, nclusters: int, tol: float = 1e-14, method: str = "auto",
                    dense_limit: int = DENSE_LIMIT, seed: int = 0,
                    tol_abs: float = CLUSTER_ABS, tol_rel: float = CLUSTER_REL,
                    initial_k: int = 4) -> LowClusters:
    """Complete eigenvectors of clusters 1..nclusters and the first value beyond them.

    k is enlarged until cluster ``nclusters + 1`` is present among the
    computed values, so no cluster is truncated.
    """
    n = family.n
    k = min(n, max(initial_k, nclusters + 1))
    while True:
        pairs = smallest_k(family, mu, k, tol=tol, method=method, dense_limit=dense_limit,
                           seed=seed, tol_abs=tol_abs, tol_rel=tol_rel)
        cl = cluster(pairs.values, tol_abs, tol_rel)
        if len(cl) > nclusters or k == n:
            break
        k = min(n, 2 * k)
    if len(cl) < nclusters or (len(cl) == nclusters and nclusters == 1):
        raise EigenSolverError(f"A(mu) has fewer than {nclusters + 1} distinct eigenvalues")
    if len(cl) == nclusters:
        # the requested clusters exhaust the spectrum: no lambda_{ell+1}
        return LowClusters(pairs.values.copy(), pairs.vectors.copy(), math.inf, cl)
    ell = cl.count(nclusters)
    return LowClusters(pairs.values[:ell].copy(), pairs.vectors[:, :ell].copy(),
                       float(pairs.values[ell]), cluster(pairs.values[:ell], tol_abs, tol_rel))
