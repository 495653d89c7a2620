"""Parametric affine Hermitian families A(mu) = sum_q theta_q(mu) A_q.

Matrices are kept as exactly Hermitian objects: every stored term is rebuilt
from its upper triangle, so A_q == A_q^H holds bit-for-bit.  Parameter
dependence is limited to monomial, cosine and sine coefficient functions; the
``lagrange`` kind is a rational extension used only by the Example-2 generator
and is rejected by the lower-bound machinery.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

THETA_KINDS = ("monomial", "cosine", "sine", "lagrange")


class ModelFormatError(ValueError):
    """Raised for malformed model files; the message carries the line number."""


@dataclass(frozen=True)
class ThetaTerm:
    """One coefficient function theta_q.

    ``monomial``: coefficient * prod_i mu_i**exponents[i]
    ``cosine``/``sine``: coefficient * cos/sin(frequency * mu[axis])
    ``lagrange``: coefficient * L_i(mu) L_k(mu) / sum_j L_j(mu)**2 over ``nodes``
    (rational; one-dimensional parameter only).
    """

    kind: str
    coefficient: float = 1.0
    exponents: tuple[int, ...] = ()
    frequency: float = 1.0
    axis: int = 0
    nodes: tuple[float, ...] = ()
    pair: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.kind not in THETA_KINDS:
            raise ValueError(f"unknown theta kind {self.kind!r}")
        object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))
        object.__setattr__(self, "nodes", tuple(float(x) for x in self.nodes))
        if self.kind == "lagrange":
            if len(set(self.nodes)) != len(self.nodes) or not self.nodes:
                raise ValueError("lagrange nodes must be non-empty and pairwise distinct")
            i, k = self.pair
            if not (0 <= i < len(self.nodes) and 0 <= k < len(self.nodes)):
                raise ValueError("lagrange pair index out of range")

    @classmethod
    def monomial(cls, exponents: Sequence[int], coefficient: float = 1.0) -> ThetaTerm:
        return cls("monomial", float(coefficient), exponents=tuple(exponents))

    @classmethod
    def cosine(cls, axis: int = 0, frequency: float = 1.0, coefficient: float = 1.0) -> ThetaTerm:
        return cls("cosine", float(coefficient), frequency=float(frequency), axis=int(axis))

    @classmethod
    def sine(cls, axis: int = 0, frequency: float = 1.0, coefficient: float = 1.0) -> ThetaTerm:
        return cls("sine", float(coefficient), frequency=float(frequency), axis=int(axis))

    def check_dimension(self, p: int) -> None:
        if self.kind == "monomial" and len(self.exponents) != p:
            raise ValueError(f"monomial needs {p} exponents, got {len(self.exponents)}")
        if self.kind in ("cosine", "sine") and not 0 <= self.axis < p:
            raise ValueError(f"axis {self.axis} out of range for p={p}")
        if self.kind == "lagrange" and p != 1:
            raise ValueError("lagrange terms need a scalar parameter")

    def __call__(self, mu: np.ndarray) -> float:
        if self.kind == "monomial":
            val = 1.0
            for m, e in zip(mu, self.exponents):
                if e:
                    val *= float(m) ** e
            return self.coefficient * val
        if self.kind == "cosine":
            return self.coefficient * math.cos(self.frequency * float(mu[self.axis]))
        if self.kind == "sine":
            return self.coefficient * math.sin(self.frequency * float(mu[self.axis]))
        basis = lagrange_basis(self.nodes, float(mu[0]))
        i, k = self.pair
        return self.coefficient * basis[i] * basis[k] / float(basis @ basis)

    @property
    def params(self) -> list:
        """Parameters after the coefficient, as written in model files."""
        if self.kind == "monomial":
            return list(self.exponents)
        if self.kind in ("cosine", "sine"):
            return [self.frequency, self.axis]
        return [self.pair[0], self.pair[1], len(self.nodes), *self.nodes]


def lagrange_basis(nodes: Sequence[float], x: float) -> np.ndarray:
    """Values L_k(x) of the Lagrange basis polynomials on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    out = np.ones(len(nodes))
    for k, xk in enumerate(nodes):
        others = np.delete(nodes, k)
        out[k] = np.prod((x - others) / (xk - others))
    return out


def hermitian_from_upper(mat) -> sp.csr_matrix | np.ndarray:
    """Rebuild an exactly Hermitian matrix from the upper triangle of ``mat``.

    Dense input stays dense, sparse input becomes CSR.  The diagonal must be
    real.
    """
    if sp.issparse(mat):
        upper = sp.triu(mat, k=0, format="csr")
        diag = upper.diagonal()
        if np.iscomplexobj(diag) and np.any(diag.imag != 0):
            raise ValueError("Hermitian matrix needs a real diagonal")
        strict = sp.triu(mat, k=1, format="csr")
        full = strict + strict.conj().T + sp.diags(diag.real if np.iscomplexobj(diag) else diag)
        full = full.tocsr()
        if np.iscomplexobj(full.data) and not np.any(full.data.imag):
            full = full.real.tocsr()
        full.sum_duplicates()
        full.eliminate_zeros()
        full.sort_indices()
        return full
    mat = np.asarray(mat)
    diag = np.diag(mat)
    if np.iscomplexobj(diag) and np.any(diag.imag != 0):
        raise ValueError("Hermitian matrix needs a real diagonal")
    strict = np.triu(mat, k=1)
    full = strict + strict.conj().T + np.diag(diag.real if np.iscomplexobj(diag) else diag)
    if np.iscomplexobj(full) and not np.any(full.imag):
        full = full.real.copy()
    return full


@dataclass(frozen=True, eq=False)
class AffineFamily:
    """A(mu) = sum_q theta_q(mu) A_q on the box ``domain`` (shape (p, 2))."""

    terms: tuple[ThetaTerm, ...]
    matrices: tuple
    domain: np.ndarray
    name: str = ""

    def __post_init__(self):
        terms = tuple(self.terms)
        mats = tuple(hermitian_from_upper(m) for m in self.matrices)
        domain = np.atleast_2d(np.asarray(self.domain, dtype=float))
        if domain.shape[1] != 2 or np.any(domain[:, 0] > domain[:, 1]):
            raise ValueError("domain must be a (p, 2) array of [lo, hi] rows")
        if len(terms) != len(mats) or not terms:
            raise ValueError("need Q >= 1 terms, one per matrix")
        n = mats[0].shape[0]
        if n < 2:
            raise ValueError("matrix dimension must be at least 2")
        for m in mats:
            if m.shape != (n, n):
                raise ValueError("all A_q must share the same square shape")
        for t in terms:
            t.check_dimension(domain.shape[0])
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "domain", domain)

    @property
    def n(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def p(self) -> int:
        return self.domain.shape[0]

    @property
    def Q(self) -> int:
        return len(self.terms)

    @property
    def is_rational(self) -> bool:
        return any(t.kind == "lagrange" for t in self.terms)

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(m.data if sp.issparse(m) else m) for m in self.matrices)

    @property
    def dtype(self):
        return np.complex128 if self.is_complex else np.float64

    def check_mu(self, mu) -> np.ndarray:
        mu = np.atleast_1d(np.asarray(mu, dtype=float)).ravel()
        if mu.shape != (self.p,):
            raise ValueError(f"parameter has dimension {mu.size}, family expects {self.p}")
        lo, hi = self.domain[:, 0], self.domain[:, 1]
        if np.any(mu < lo) or np.any(mu > hi):
            warnings.warn(f"parameter {mu} lies outside the domain box", stacklevel=3)
        return mu

    def theta(self, mu) -> np.ndarray:
        mu = self.check_mu(mu)
        return np.array([t(mu) for t in self.terms])

    def assemble(self, mu, dense: bool = False):
        """A(mu); sparse CSR if any term is sparse, unless ``dense``."""
        th = self.theta(mu)
        if dense or not any(sp.issparse(m) for m in self.matrices):
            out = np.zeros((self.n, self.n), dtype=self.dtype)
            for c, m in zip(th, self.matrices):
                out += c * (m.toarray() if sp.issparse(m) else m)
            return out
        out = sp.csr_matrix((self.n, self.n), dtype=self.dtype)
        for c, m in zip(th, self.matrices):
            out = out + c * (m if sp.issparse(m) else sp.csr_matrix(m))
        return out.tocsr()

    def apply(self, mu, x: np.ndarray) -> np.ndarray:
        """A(mu) @ x without forming A(mu)."""
        x = np.asarray(x)
        if x.shape[0] != self.n:
            raise ValueError(f"vector has {x.shape[0]} rows, expected {self.n}")
        th = self.theta(mu)
        out = None
        for c, m in zip(th, self.matrices):
            y = c * (m @ x)
            out = y if out is None else out + y
        return out

    def term_apply(self, x: np.ndarray) -> list[np.ndarray]:
        """[A_q @ x for each q]."""
        return [np.asarray(m @ x) for m in self.matrices]


def evaluate_theta(family: AffineFamily, mu) -> np.ndarray:
    return family.theta(mu)


def assemble(family: AffineFamily, mu, dense: bool = False):
    return family.assemble(mu, dense=dense)


def apply(family: AffineFamily, mu, x):
    return family.apply(mu, x)


@dataclass
class ParameterGrid:
    """Training set Xi: an (N, p) array of parameter points."""

    points: np.ndarray
    provenance: str = "explicit_list"
    counts: tuple[int, ...] = field(default=())

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def check_inside(self, domain: np.ndarray, atol: float = 0.0) -> None:
        lo, hi = domain[:, 0], domain[:, 1]
        bad = np.any((self.points < lo - atol) | (self.points > hi + atol), axis=1)
        if np.any(bad):
            raise ValueError(f"{int(bad.sum())} grid points lie outside the domain box")


def chebyshev_nodes_with_endpoints(lo: float, hi: float, count: int) -> np.ndarray:
    """count-2 first-kind Chebyshev nodes mapped to [lo, hi], plus both endpoints."""
    if count < 2:
        raise ValueError("need at least 2 points per axis (the endpoints)")
    inner = np.polynomial.chebyshev.chebpts1(count - 2) if count > 2 else np.empty(0)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return np.concatenate([[lo], mid + half * inner, [hi]])


def chebyshev_grid(box, counts: Sequence[int]) -> ParameterGrid:
    """Tensor grid of Chebyshev-with-endpoints nodes; last axis varies fastest."""
    box = np.atleast_2d(np.asarray(box, dtype=float))
    counts = tuple(int(c) for c in np.atleast_1d(counts))
    if len(counts) != box.shape[0]:
        raise ValueError("one count per parameter axis")
    axes = [chebyshev_nodes_with_endpoints(lo, hi, c) for (lo, hi), c in zip(box, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return ParameterGrid(pts, provenance="tensor_chebyshev_with_endpoints", counts=counts)


def save_grid(grid: ParameterGrid, path) -> None:
    header = f"provenance={grid.provenance}"
    if grid.counts:
        header += " counts=" + "x".join(str(c) for c in grid.counts)
    np.savetxt(path, grid.points, delimiter=",", fmt="%.17g", header=header)


def load_grid(path) -> ParameterGrid:
    pts = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if pts.size == 0:
        raise ValueError(f"grid file {path} has no points")
    provenance = "explicit_list"
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("#") and "provenance=" in first:
        provenance = first.split("provenance=")[1].split()[0]
    return ParameterGrid(pts, provenance=provenance)


# ---------------------------------------------------------------------------
# model file format
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def save_model(family: AffineFamily, path) -> None:
    lines = [f"{family.n} {family.Q} {family.p}"]
    for ax, (lo, hi) in enumerate(family.domain):
        lines.append(f"{ax} {_fmt(lo)} {_fmt(hi)}")
    for term, mat in zip(family.terms, family.matrices):
        params = " ".join(_fmt(v) if isinstance(v, float) else str(v) for v in term.params)
        lines.append(f"term {term.kind} {_fmt(term.coefficient)} {params}".rstrip())
        upper = sp.triu(sp.csr_matrix(mat), k=0, format="coo")
        order = np.lexsort((upper.col, upper.row))
        rows, cols, vals = upper.row[order], upper.col[order], upper.data[order]
        lines.append(f"nnz {len(vals)}")
        for i, j, v in zip(rows, cols, vals):
            v = complex(v)
            lines.append(f"{i} {j} {_fmt(v.real)} {_fmt(v.imag)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_term(tokens: list[str], p: int, lineno: int) -> ThetaTerm:
    if len(tokens) < 3:
        raise ModelFormatError(f"line {lineno}: term line needs a kind and a coefficient")
    kind = tokens[1]
    try:
        coef = float(tokens[2])
        rest = tokens[3:]
        if kind == "monomial":
            if len(rest) != p:
                raise ModelFormatError(f"line {lineno}: monomial needs {p} exponents, got {len(rest)}")
            return ThetaTerm.monomial([int(e) for e in rest], coef)
        if kind in ("cosine", "sine"):
            if len(rest) != 2:
                raise ModelFormatError(f"line {lineno}: {kind} needs <frequency> <axis>")
            return ThetaTerm(kind, coef, frequency=float(rest[0]), axis=int(rest[1]))
        if kind == "lagrange":
            i, k, m = int(rest[0]), int(rest[1]), int(rest[2])
            nodes = [float(x) for x in rest[3:]]
            if len(nodes) != m:
                raise ModelFormatError(f"line {lineno}: lagrange declares {m} nodes, found {len(nodes)}")
            return ThetaTerm("lagrange", coef, nodes=tuple(nodes), pair=(i, k))
    except ModelFormatError:
        raise
    except (ValueError, IndexError) as exc:
        raise ModelFormatError(f"line {lineno}: bad term parameters ({exc})") from exc
    raise ModelFormatError(f"line {lineno}: unknown term kind {kind!r}")


def load_model(path) -> AffineFamily:
    raw = Path(path).read_text().splitlines()
    lines = [(no, ln.split()) for no, ln in enumerate(raw, start=1)
             if ln.strip() and not ln.lstrip().startswith("#")]
    it = iter(lines)

    def take(what: str):
        try:
            return next(it)
        except StopIteration:
            raise ModelFormatError(f"unexpected end of file while reading {what}") from None

    no, head = take("header")
    if len(head) != 3:
        raise ModelFormatError(f"line {no}: header must be 'n Q p'")
    try:
        n, Q, p = (int(x) for x in head)
    except ValueError:
        raise ModelFormatError(f"line {no}: header fields must be integers") from None
    domain = np.zeros((p, 2))
    for ax in range(p):
        no, tok = take(f"axis {ax}")
        if len(tok) != 3 or tok[0] != str(ax):
            raise ModelFormatError(f"line {no}: expected '{ax} lo hi'")
        domain[ax] = float(tok[1]), float(tok[2])

    terms, mats = [], []
    for q in range(Q):
        no, tok = take(f"term {q}")
        if tok[0] != "term":
            raise ModelFormatError(f"line {no}: expected 'term' line for block {q}")
        terms.append(_parse_term(tok, p, no))
        no, tok = take(f"nnz of block {q}")
        if len(tok) != 2 or tok[0] != "nnz":
            raise ModelFormatError(f"line {no}: expected 'nnz <count>'")
        count = int(tok[1])
        entries: dict[tuple[int, int], complex] = {}
        for _ in range(count):
            no, tok = take(f"entries of block {q}")
            if len(tok) != 4:
                raise ModelFormatError(f"line {no}: entry must be 'i j re im'")
            i, j = int(tok[0]), int(tok[1])
            v = complex(float(tok[2]), float(tok[3]))
            if not (0 <= i < n and 0 <= j < n):
                raise ModelFormatError(f"line {no}: index ({i}, {j}) out of range for n={n}")
            if i == j and v.imag != 0:
                raise ModelFormatError(f"line {no}: diagonal entry ({i}, {i}) must be real")
            key, val = ((i, j), v) if i <= j else ((j, i), v.conjugate())
            if key in entries:
                if entries[key] != val:
                    raise ModelFormatError(
                        f"line {no}: entry ({i}, {j}) is not the conjugate of its mirror (non-Hermitian)")
                continue
            entries[key] = val
        rows = np.array([k[0] for k in entries], dtype=np.int64)
        cols = np.array([k[1] for k in entries], dtype=np.int64)
        vals = np.array(list(entries.values()), dtype=np.complex128)
        if not np.any(vals.imag):
            vals = vals.real
        mats.append(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))
    extra = next(it, None)
    if extra is not None:
        raise ModelFormatError(f"line {extra[0]}: trailing content after {Q} declared blocks")
    return AffineFamily(tuple(terms), tuple(mats), domain, name=Path(path).stem)
