"""Reduced basis state: orthonormal basis, reduced Gramians, snapshots, residuals.

Everything the online phase needs is held in small dense arrays whose size
depends on the basis dimension r and the number of terms Q only:

* ``reduced_terms[q] = V^* A_q V``
* ``G[q, q'] = (A_q V)^* (A_q' V)``
* ``T0 = Z^* V`` and ``T[q] = Z^* A_q V`` where Z is an orthonormal basis of
  span{V, A_1 V, ..., A_Q V}.  Residual norms are computed as
  ``||(sum_q theta_q T[q] - lambda T0) c||`` which is backward stable, whereas
  the Gramian route loses half the digits through cancellation.
"""

from __future__ import annotations

import json
import logging
import zipfile
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .affine import AffineFamily, ThetaTerm
from .eigensolve import CLUSTER_ABS, CLUSTER_REL, DENSE_LIMIT, EigenClustering, LowClusters, cluster

log = logging.getLogger(__name__)

DROP_TOL = 1e-12
Z_DROP_TOL = 1e-14
EXTREMA_DENSE_LIMIT = 1024


class RomFormatError(ValueError):
    pass


@dataclass
class Snapshot:
    """Full-order data at a selected parameter mu_j."""

    mu: np.ndarray
    ell: int
    values: np.ndarray
    next_value: float
    theta: np.ndarray
    cross: np.ndarray  # M_j = W^(j)* V, shape (ell, r)
    vectors: np.ndarray | None = None  # W^(j), offline only


@dataclass
class ReducedEig:
    """Eigen-decomposition of the reduced matrix at one parameter."""

    mu: np.ndarray
    theta: np.ndarray
    values: np.ndarray
    vectors: np.ndarray
    clustering: EigenClustering

    @property
    def m1(self) -> int:
        return int(self.clustering.multiplicities[0])

    @property
    def degenerate(self) -> bool:
        """True when the reduced matrix is c*I (a single cluster)."""
        return len(self.clustering) < 2

    def boundary(self, t: int) -> int:
        """s(t): number of reduced values in the first t clusters."""
        return self.clustering.count(t)

    def is_boundary(self, s: int) -> bool:
        return s == len(self.values) or s in set(np.cumsum(self.clustering.multiplicities).tolist())


def theta_values(terms, mu) -> np.ndarray:
    mu = np.atleast_1d(np.asarray(mu, dtype=float)).ravel()
    return np.array([t(mu) for t in terms])


def term_extrema(family: AffineFamily, dense_limit: int = EXTREMA_DENSE_LIMIT,
                 pad: float = 1e-12) -> np.ndarray:
    """[lambda_min(A_q), lambda_max(A_q)] per term, widened slightly for rounding."""
    out = np.empty((family.Q, 2))
    for q, A in enumerate(family.matrices):
        if family.n <= dense_limit:
            dense = A.toarray() if sp.issparse(A) else A
            w = sla.eigvalsh(dense)
            lo, hi = w[0], w[-1]
            slack = 0.0
        else:
            op = A if sp.issparse(A) else sp.csr_matrix(A)
            v0 = np.ones(family.n) / np.sqrt(family.n)
            lo_val, lo_vec = spla.eigsh(op, k=1, which="SA", tol=1e-12, v0=v0)
            hi_val, hi_vec = spla.eigsh(op, k=1, which="LA", tol=1e-12, v0=v0)
            lo, hi = float(lo_val[0]), float(hi_val[0])
            r_lo = np.linalg.norm(op @ lo_vec[:, 0] - lo * lo_vec[:, 0])
            r_hi = np.linalg.norm(op @ hi_vec[:, 0] - hi * hi_vec[:, 0])
            slack = max(r_lo, r_hi)
        scale = max(abs(lo), abs(hi), 1.0)
        out[q] = lo - slack - pad * scale, hi + slack + pad * scale
    return out


def _orthogonalize(basis: np.ndarray, cols: np.ndarray, tol: float) -> tuple[np.ndarray, list[int]]:
    """Gram-Schmidt with one re-orthogonalisation; returns new columns and kept indices."""
    kept, out = [], []
    Q = basis
    for i in range(cols.shape[1]):
        w = cols[:, i].copy()
        nrm0 = np.linalg.norm(w)
        if nrm0 == 0:
            continue
        for _ in range(2):
            if Q.shape[1]:
                w -= Q @ (Q.conj().T @ w)
        nrm = np.linalg.norm(w)
        if nrm < tol * nrm0:
            continue
        w /= nrm
        Q = np.hstack([Q, w[:, None]])
        out.append(w)
        kept.append(i)
    if out:
        return np.stack(out, axis=1), kept
    return np.empty((cols.shape[0], 0), dtype=cols.dtype), kept


@dataclass
class RomState:
    terms: tuple
    domain: np.ndarray
    n: int
    extrema: np.ndarray
    dtype: type = np.float64
    reduced_terms: np.ndarray = None  # (Q, r, r)
    G: np.ndarray = None  # (Q, Q, r, r)
    T0: np.ndarray = None  # (rz, r)
    T: np.ndarray = None  # (Q, rz, r)
    snapshots: list = field(default_factory=list)
    cluster_abs: float = CLUSTER_ABS
    cluster_rel: float = CLUSTER_REL
    residual_method: str = "stable"
    meta: dict = field(default_factory=dict)
    # offline-only members
    family: AffineFamily | None = None
    V: np.ndarray | None = None
    AV: np.ndarray | None = None  # (Q, n, r)
    Z: np.ndarray | None = None

    def __post_init__(self):
        Q = len(self.terms)
        if self.reduced_terms is None:
            self.reduced_terms = np.zeros((Q, 0, 0), dtype=self.dtype)
            self.G = np.zeros((Q, Q, 0, 0), dtype=self.dtype)
            self.T0 = np.zeros((0, 0), dtype=self.dtype)
            self.T = np.zeros((Q, 0, 0), dtype=self.dtype)
        if self.family is not None and self.V is None:
            self.V = np.zeros((self.n, 0), dtype=self.dtype)
            self.AV = np.zeros((Q, self.n, 0), dtype=self.dtype)
            self.Z = np.zeros((self.n, 0), dtype=self.dtype)
        self._beta_groups = None

    @classmethod
    def empty(cls, family: AffineFamily, extrema: np.ndarray | None = None, **kw) -> RomState:
        if family.is_rational:
            raise ValueError("rational theta terms are not supported by the lower-bound machinery")
        if extrema is None:
            extrema = term_extrema(family)
        return cls(terms=family.terms, domain=family.domain, n=family.n, extrema=np.asarray(extrema),
                   dtype=family.dtype, family=family, **kw)

    @property
    def r(self) -> int:
        return self.reduced_terms.shape[1]

    @property
    def Q(self) -> int:
        return len(self.terms)

    @property
    def J(self) -> int:
        return len(self.snapshots)

    @property
    def offline(self) -> bool:
        return self.family is not None and self.V is not None

    def theta(self, mu) -> np.ndarray:
        return theta_values(self.terms, mu)

    # ------------------------------------------------------------------
    # basis growth
    # ------------------------------------------------------------------
    def orth_extend(self, new_columns: np.ndarray, paranoid: bool = False) -> int:
        """Append the part of ``new_columns`` orthogonal to span(V); returns columns added."""
        if not self.offline:
            raise RuntimeError("basis extension needs the full-order family and basis")
        new_columns = np.asarray(new_columns)
        if new_columns.ndim == 1:
            new_columns = new_columns[:, None]
        if new_columns.shape[0] != self.n:
            raise ValueError(f"new columns have {new_columns.shape[0]} rows, expected {self.n}")
        cols = new_columns.astype(np.result_type(self.dtype, new_columns.dtype), copy=True)
        if np.iscomplexobj(cols) and self.dtype != np.complex128:
            self._promote_complex()
        Vn, kept = _orthogonalize(self.V, cols, DROP_TOL)
        dropped = new_columns.shape[1] - len(kept)
        if dropped:
            log.info("orth_extend: dropped %d linearly dependent column(s)", dropped)
        k = Vn.shape[1]
        if k == 0:
            return 0
        r0 = self.r
        fam = self.family
        AVn = np.stack([np.asarray(A @ Vn) for A in fam.matrices]).astype(self.dtype, copy=False)
        V = np.hstack([self.V, Vn])
        AV = np.concatenate([self.AV, AVn], axis=2)
        Q, r1 = self.Q, r0 + k

        red = np.zeros((Q, r1, r1), dtype=self.dtype)
        red[:, :r0, :r0] = self.reduced_terms
        for q in range(Q):
            C = V.conj().T @ AVn[q]
            red[q, :, r0:] = C
            red[q, r0:, :r0] = C[:r0].conj().T
            red[q] = 0.5 * (red[q] + red[q].conj().T)

        G = np.zeros((Q, Q, r1, r1), dtype=self.dtype)
        G[:, :, :r0, :r0] = self.G
        B = np.empty((Q, Q, r1, k), dtype=self.dtype)
        for q in range(Q):
            for q2 in range(Q):
                B[q, q2] = AV[q].conj().T @ AVn[q2]
        for q in range(Q):
            for q2 in range(Q):
                G[q, q2, :, r0:] = B[q, q2]
                G[q, q2, r0:, :r0] = B[q2, q, :r0].conj().T
        for q in range(Q):
            G[q, q] = 0.5 * (G[q, q] + G[q, q].conj().T)
            for q2 in range(q + 1, Q):
                G[q2, q] = G[q, q2].conj().T

        # residual representation basis Z of span{V, A_q V}
        X_new = np.hstack([Vn] + [AVn[q] for q in range(Q)])
        Zn, _ = _orthogonalize(self.Z, X_new, Z_DROP_TOL)
        Z = np.hstack([self.Z, Zn])
        rz0, rz1 = self.Z.shape[1], Z.shape[1]
        T0 = np.zeros((rz1, r1), dtype=self.dtype)
        T = np.zeros((Q, rz1, r1), dtype=self.dtype)
        T0[:rz0, :r0] = self.T0
        T[:, :rz0, :r0] = self.T
        if rz1 > rz0:
            T0[rz0:, :r0] = Zn.conj().T @ self.V
            for q in range(Q):
                T[q, rz0:, :r0] = Zn.conj().T @ self.AV[q]
        T0[:, r0:] = Z.conj().T @ Vn
        for q in range(Q):
            T[q, :, r0:] = Z.conj().T @ AVn[q]

        for snap in self.snapshots:
            if snap.vectors is None:
                raise RuntimeError("snapshot vectors were discarded; cannot extend the basis")
            snap.cross = np.hstack([snap.cross, snap.vectors.conj().T @ Vn])

        self.V, self.AV, self.Z = V, AV, Z
        self.reduced_terms, self.G, self.T0, self.T = red, G, T0, T
        self._beta_groups = None
        if paranoid:
            self.check_consistency()
        return k

    def _promote_complex(self):
        self.dtype = np.complex128
        for name in ("reduced_terms", "G", "T0", "T", "V", "AV", "Z"):
            arr = getattr(self, name)
            if arr is not None:
                setattr(self, name, arr.astype(np.complex128))

    def add_snapshot(self, mu, low: LowClusters, paranoid: bool = False) -> Snapshot:
        """Extend the basis with the eigenvector block of ``low`` and record the snapshot."""
        W = np.asarray(low.vectors)
        self.orth_extend(W, paranoid=paranoid)
        mu = np.atleast_1d(np.asarray(mu, dtype=float)).ravel()
        snap = Snapshot(mu=mu, ell=low.ell, values=np.asarray(low.values, dtype=float).copy(),
                        next_value=float(low.next_value), theta=self.theta(mu),
                        cross=W.conj().T @ self.V, vectors=W.astype(self.dtype, copy=False))
        self.snapshots.append(snap)
        self._beta_groups = None
        return snap

    def check_consistency(self, tol: float = 1e-10) -> None:
        """Recompute all reduced quantities from scratch and compare (paranoid mode)."""
        V = self.V
        ortho = np.linalg.norm(V.conj().T @ V - np.eye(self.r), 2) if self.r else 0.0
        if ortho > tol:
            raise AssertionError(f"basis lost orthonormality: {ortho:.3e}")
        for q, A in enumerate(self.family.matrices):
            AVq = np.asarray(A @ V)
            scale = max(1.0, np.linalg.norm(AVq))
            if np.linalg.norm(V.conj().T @ AVq - self.reduced_terms[q]) > tol * scale:
                raise AssertionError(f"reduced term {q} inconsistent")
            for q2, A2 in enumerate(self.family.matrices):
                G = AVq.conj().T @ np.asarray(A2 @ V)
                if np.linalg.norm(G - self.G[q, q2]) > tol * scale * max(1.0, np.linalg.norm(G)):
                    raise AssertionError(f"Gramian ({q},{q2}) inconsistent")
            if np.linalg.norm(self.Z @ self.T[q] - AVq) > tol * scale:
                raise AssertionError(f"residual representation of term {q} inconsistent")
        for j, snap in enumerate(self.snapshots):
            if snap.vectors is not None and np.linalg.norm(snap.vectors.conj().T @ V - snap.cross) > tol:
                raise AssertionError(f"snapshot {j} cross products inconsistent")

    # ------------------------------------------------------------------
    # online evaluation
    # ------------------------------------------------------------------
    def reduced_assemble(self, mu=None, theta=None) -> np.ndarray:
        if self.r < 1:
            raise ValueError("reduced basis is empty")
        th = self.theta(mu) if theta is None else theta
        M = np.tensordot(th, self.reduced_terms, axes=1)
        return 0.5 * (M + M.conj().T)

    def reduced_eig(self, mu) -> ReducedEig:
        mu = np.atleast_1d(np.asarray(mu, dtype=float)).ravel()
        th = self.theta(mu)
        vals, vecs = np.linalg.eigh(self.reduced_assemble(theta=th))
        cl = cluster(vals, self.cluster_abs, self.cluster_rel)
        return ReducedEig(mu, th, vals, vecs, cl)

    def residual_block_norm(self, theta: np.ndarray, coeffs: np.ndarray, values: np.ndarray,
                            method: str | None = None) -> float:
        """||A(mu) V C - V C diag(values)||_2 without touching n-sized data."""
        method = method or self.residual_method
        coeffs = np.asarray(coeffs)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        values = np.broadcast_to(np.asarray(values, dtype=float), (coeffs.shape[1],))
        if method == "stable":
            Tm = np.tensordot(theta, self.T, axes=1)
            R = Tm @ coeffs - (self.T0 @ coeffs) * values[None, :]
            return float(np.linalg.norm(R, 2)) if R.size else 0.0
        if method == "gramian":
            G = np.einsum("q,p,qpij->ij", theta, theta, self.G)
            H = coeffs.conj().T @ G @ coeffs
            cross = coeffs.conj().T @ self.reduced_assemble(theta=theta) @ coeffs
            D = H - cross * values[None, :] - values[:, None] * cross
            D = D + (coeffs.conj().T @ coeffs) * np.outer(values, values)
            D = 0.5 * (D + D.conj().T)
            return float(np.sqrt(max(0.0, np.linalg.eigvalsh(D)[-1])))
        raise ValueError(f"unknown residual method {method!r}")

    def residual_norm(self, mu, red: ReducedEig | None = None, method: str | None = None) -> float:
        """||A(mu) W_1^V - lambda_1^V W_1^V|| for the reduced ground cluster."""
        red = red if red is not None else self.reduced_eig(mu)
        m1 = red.m1
        return self.residual_block_norm(red.theta, red.vectors[:, :m1],
                                        np.full(m1, red.values[0]), method)

    def lift(self, coeffs: np.ndarray) -> np.ndarray:
        if self.V is None:
            raise RuntimeError("basis not stored in this ROM (rebuild with --store-basis)")
        coeffs = np.asarray(coeffs)
        if coeffs.shape[0] != self.r:
            raise ValueError(f"reduced vectors have length {coeffs.shape[0]}, expected {self.r}")
        return self.V @ coeffs

    # ------------------------------------------------------------------
    # snapshot helpers
    # ------------------------------------------------------------------
    def beta_groups(self):
        """Snapshots grouped by ell with stacked data for vectorised beta evaluation."""
        if self._beta_groups is None:
            groups = {}
            for j, snap in enumerate(self.snapshots):
                groups.setdefault(snap.ell, []).append(j)
            out = []
            for ell, idx in sorted(groups.items()):
                snaps = [self.snapshots[j] for j in idx]
                vals = np.stack([s.values for s in snaps])
                nxt = np.array([s.next_value for s in snaps])
                M = np.stack([s.cross for s in snaps])
                out.append((np.array(idx), vals, nxt, M))
            self._beta_groups = out
        return self._beta_groups

    def snapshot_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """(theta(mu_j) rows, lambda_1(mu_j)) for all snapshots."""
        if not self.snapshots:
            return np.zeros((0, self.Q)), np.zeros(0)
        return (np.stack([s.theta for s in self.snapshots]),
                np.array([s.values[0] for s in self.snapshots]))

    def has_snapshot(self, mu, atol: float = 0.0) -> bool:
        mu = np.atleast_1d(np.asarray(mu, dtype=float)).ravel()
        return any(np.allclose(s.mu, mu, rtol=0, atol=atol) for s in self.snapshots)

    def release_offline(self, keep_basis: bool = False) -> None:
        """Drop n-sized arrays (basis optional), leaving an online-only state."""
        self.family = None
        self.AV = None
        self.Z = None
        if not keep_basis:
            self.V = None
        for s in self.snapshots:
            s.vectors = None


def new_state(family: AffineFamily, cluster_abs: float = CLUSTER_ABS, cluster_rel: float = CLUSTER_REL,
              residual_method: str = "stable", extrema=None) -> RomState:
    return RomState.empty(family, extrema=extrema, cluster_abs=cluster_abs, cluster_rel=cluster_rel,
                          residual_method=residual_method)


def reduced_assemble(state: RomState, mu) -> np.ndarray:
    return state.reduced_assemble(mu)


def reduced_smallest(state: RomState, mu) -> ReducedEig:
    return state.reduced_eig(mu)


def residual_norm(state: RomState, mu, red: ReducedEig | None = None) -> float:
    return state.residual_norm(mu, red)


def lift(state: RomState, coeffs) -> np.ndarray:
    return state.lift(coeffs)


def projector_distance(W: np.ndarray, W2: np.ndarray, tol: float = 1e-8) -> float:
    """||P_W - P_W'|| for orthonormal blocks: 1 if dimensions differ, else ||(I - W W^*) W'||."""
    W = np.asarray(W)
    W2 = np.asarray(W2)
    if W.ndim == 1:
        W = W[:, None]
    if W2.ndim == 1:
        W2 = W2[:, None]
    for X in (W, W2):
        if np.linalg.norm(X.conj().T @ X - np.eye(X.shape[1]), 2) > tol:
            raise ValueError("projector_distance needs orthonormal column blocks")
    if W.shape[1] != W2.shape[1]:
        return 1.0
    D = W2 - W @ (W.conj().T @ W2)
    return float(min(1.0, np.linalg.norm(D, 2)))


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------
ROM_VERSION = 1


def _term_to_json(t: ThetaTerm) -> dict:
    return {"kind": t.kind, "coefficient": t.coefficient, "exponents": list(t.exponents),
            "frequency": t.frequency, "axis": t.axis}


def _term_from_json(d: dict) -> ThetaTerm:
    return ThetaTerm(d["kind"], float(d["coefficient"]), exponents=tuple(d.get("exponents", ())),
                     frequency=float(d.get("frequency", 1.0)), axis=int(d.get("axis", 0)))


def save_rom(state: RomState, path, store_basis: bool = False) -> None:
    header = {
        "version": ROM_VERSION, "n": state.n, "terms": [_term_to_json(t) for t in state.terms],
        "cluster_abs": state.cluster_abs, "cluster_rel": state.cluster_rel,
        "residual_method": state.residual_method, "meta": state.meta,
        "ells": [s.ell for s in state.snapshots],
    }
    arrays = {
        "header": np.array(json.dumps(header)),
        "domain": state.domain, "extrema": state.extrema,
        "reduced_terms": state.reduced_terms, "G": state.G, "T0": state.T0, "T": state.T,
    }
    for j, s in enumerate(state.snapshots):
        arrays[f"snap{j}_mu"] = s.mu
        arrays[f"snap{j}_values"] = s.values
        arrays[f"snap{j}_next"] = np.array(s.next_value)
        arrays[f"snap{j}_cross"] = s.cross
    if store_basis:
        if state.V is None:
            raise ValueError("state holds no basis to store")
        arrays["V"] = state.V
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_rom(path) -> RomState:
    try:
        data = np.load(path, allow_pickle=False)
        header = json.loads(str(data["header"]))
    except Exception as exc:  # noqa: BLE001 - any decoding failure is a format error
        raise RomFormatError(f"{path}: not a readable ROM file ({exc})") from exc
    if header.get("version") != ROM_VERSION:
        raise RomFormatError(f"{path}: unsupported ROM version {header.get('version')}")
    try:
        terms = tuple(_term_from_json(d) for d in header["terms"])
        red = data["reduced_terms"]
        state = RomState(terms=terms, domain=data["domain"], n=int(header["n"]), extrema=data["extrema"],
                         dtype=red.dtype.type, reduced_terms=red, G=data["G"], T0=data["T0"], T=data["T"],
                         cluster_abs=header["cluster_abs"], cluster_rel=header["cluster_rel"],
                         residual_method=header.get("residual_method", "stable"), meta=header.get("meta", {}))
        for j, ell in enumerate(header["ells"]):
            mu = data[f"snap{j}_mu"]
            vals = data[f"snap{j}_values"]
            cross = data[f"snap{j}_cross"]
            if vals.shape != (ell,) or cross.shape != (ell, state.r):
                raise RomFormatError(f"{path}: snapshot {j} has inconsistent shapes")
            state.snapshots.append(Snapshot(mu=mu, ell=ell, values=vals, next_value=float(data[f"snap{j}_next"]),
                                            theta=theta_values(terms, mu), cross=cross))
        if "V" in data.files:
            state.V = data["V"]
    except RomFormatError:
        raise
    except KeyError as exc:
        raise RomFormatError(f"{path}: missing field {exc}") from exc
    except (ValueError, OSError, EOFError, zipfile.BadZipFile) as exc:
        raise RomFormatError(f"{path}: corrupted ROM data ({exc})") from exc
    Q, r = len(terms), state.r
    if state.G.shape != (Q, Q, r, r) or state.T.shape[0] != Q or state.extrema.shape != (Q, 2):
        raise RomFormatError(f"{path}: array shapes inconsistent with Q={Q}, r={r}")
    return state
