"""Certified subspace lower bounds (SCM-type) for the smallest eigenvalues.

For a parameter mu and a cluster-aligned count s, the lower bound combines

* rho(mu, s) = ||A(mu) U - U Lambda||, U the first s lifted Ritz vectors,
* beta_j(mu, s), a per-snapshot correction making theta(mu_j).y >= lambda_1(mu_j) + beta_j
  a valid cut for the Rayleigh quotients of A_q restricted to U^perp,
* eta_* = min theta(mu).y over the box of term extrema intersected with those cuts,

into slb_k = min{lambda^V_k, eta_*} - 2 rho^2 / (g + sqrt(g^2 + 4 rho^2)).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .subspace import ReducedEig, RomState

log = logging.getLogger(__name__)

ZERO_GUARD = 1e-12


class SRangeError(ValueError):
    """s does not sit on a reduced cluster boundary (or violates n >= 2s)."""


class LPInfeasible(RuntimeError):
    pass


# ----------------------------------------------------------------------
# linear programming
# ----------------------------------------------------------------------
@dataclass
class LpInstance:
    objective: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    rows: np.ndarray = None  # (J, Q): constraint rows a_j . y >= rhs_j
    rhs: np.ndarray = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        Q = self.objective.size
        self.lo = np.asarray(self.lo, dtype=float).reshape(Q)
        self.hi = np.asarray(self.hi, dtype=float).reshape(Q)
        if np.any(self.lo > self.hi):
            raise ValueError("empty box: lo > hi")
        self.rows = np.zeros((0, Q)) if self.rows is None else np.asarray(self.rows, dtype=float).reshape(-1, Q)
        self.rhs = np.zeros(0) if self.rhs is None else np.asarray(self.rhs, dtype=float).ravel()
        if self.rhs.size != self.rows.shape[0]:
            raise ValueError("one rhs per constraint row")


@dataclass
class LpResult:
    y: np.ndarray
    value: float
    relaxed: bool = False
    iterations: int = 0


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    piv = T[row]
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, piv)


def _simplex(T, basis, cost, allowed, max_iter, tol):
    """Minimise cost.x on tableau T (last column rhs) with Bland's rule. Returns iterations."""
    m = T.shape[0]
    ncol = T.shape[1] - 1
    it = 0
    while True:
        red = cost[:ncol] - cost[basis] @ T[:, :ncol]
        cand = np.flatnonzero((red < -tol) & allowed)
        if cand.size == 0:
            return it
        j = cand[0]
        d = T[:, j]
        pos = d > tol
        if not np.any(pos):
            raise RuntimeError("LP unbounded; the box should prevent this")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[pos, -1] / d[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = ties[np.argmin(np.asarray(basis)[ties])]
        _pivot(T, row, j)
        basis[row] = j
        it += 1
        if it > max_iter:
            raise RuntimeError(f"simplex exceeded {max_iter} iterations")


def _solve_lp_once(inst: LpInstance, max_iter: int, tol: float):
    c, lo, hi, A, b = inst.objective, inst.lo, inst.hi, inst.rows, inst.rhs
    Q, J = c.size, A.shape[0]
    u = hi - lo
    bp = b - A @ lo
    # columns: z (Q), w (Q, upper slacks), t (J, surplus), artificials
    need_art = bp > 0
    nart = int(need_art.sum())
    ncol = 2 * Q + J + nart
    m = Q + J
    T = np.zeros((m, ncol + 1))
    basis = [0] * m
    for i in range(Q):
        T[i, i] = 1.0
        T[i, Q + i] = 1.0
        T[i, -1] = u[i]
        basis[i] = Q + i
    a = 0
    for j in range(J):
        row = Q + j
        if need_art[j]:
            T[row, :Q] = A[j]
            T[row, 2 * Q + j] = -1.0
            T[row, 2 * Q + J + a] = 1.0
            T[row, -1] = bp[j]
            basis[row] = 2 * Q + J + a
            a += 1
        else:
            T[row, :Q] = -A[j]
            T[row, 2 * Q + j] = 1.0
            T[row, -1] = -bp[j]
            basis[row] = 2 * Q + j
    scale = 1.0 + max(np.abs(T[:, -1]).max(initial=0.0), np.abs(A).max(initial=0.0))
    iters = 0
    real_cols = np.zeros(ncol, dtype=bool)
    real_cols[:2 * Q + J] = True
    if nart:
        cost1 = np.zeros(ncol)
        cost1[2 * Q + J:] = 1.0
        iters += _simplex(T, basis, cost1, np.ones(ncol, dtype=bool), max_iter, tol)
        infeas = float(cost1[basis] @ T[:, -1])
        if infeas > 1e-10 * scale:
            return None, iters
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= 2 * Q + J:
                nz = np.flatnonzero(np.abs(T[i, :2 * Q + J]) > tol)
                if nz.size:
                    _pivot(T, i, nz[0])
                    basis[i] = nz[0]
                else:
                    keep[i] = False
        T = T[keep]
        basis = [bb for bb, k in zip(basis, keep) if k]
    cost2 = np.zeros(ncol)
    cost2[:Q] = c
    iters += _simplex(T, basis, cost2, real_cols, max_iter, tol)
    x = np.zeros(ncol)
    x[basis] = T[:, -1]
    z = np.clip(x[:Q], 0.0, u)
    y = lo + z
    return y, iters


def solve_lp(inst: LpInstance, max_iter: int = 10000, tol: float = 1e-12) -> LpResult:
    """min objective.y s.t. lo <= y <= hi and rows.y >= rhs (dense two-phase simplex, Bland's rule).

    Infeasible instances are retried once with rhs relaxed by 1e-10 (1 + |rhs|).
    """
    y, it = _solve_lp_once(inst, max_iter, tol)
    relaxed = False
    if y is None:
        relaxed_inst = LpInstance(inst.objective, inst.lo, inst.hi, inst.rows,
                                  inst.rhs - 1e-10 * (1.0 + np.abs(inst.rhs)))
        y, it2 = _solve_lp_once(relaxed_inst, max_iter, tol)
        it += it2
        relaxed = True
        if y is None:
            raise LPInfeasible("SCM linear program infeasible after relaxation; snapshot data inconsistent")
        log.warning("SCM linear program needed rhs relaxation")
    return LpResult(y, float(inst.objective @ y), relaxed, it)


# ----------------------------------------------------------------------
# scalar helpers
# ----------------------------------------------------------------------
def correction(rho: float, g: float, scale: float = 1.0) -> float:
    """2 rho^2 / (g + sqrt(g^2 + 4 rho^2)), with the 0/0 case defined as 0."""
    if rho <= ZERO_GUARD * scale and g <= ZERO_GUARD * scale:
        return 0.0
    if rho == 0.0 or math.isinf(g):
        return 0.0
    # rho * 2 rho / (g + hypot(g, 2 rho)) avoids underflow of rho^2
    return rho * (2.0 * rho / (g + math.hypot(g, 2.0 * rho)))


def g_k(values, eta: float) -> float:
    """min_j |eta - lambda^V_j| over the given reduced values."""
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if values.size == 0:
        raise ValueError("g_k needs k >= 1 values")
    if math.isinf(eta):
        return math.inf
    return float(np.min(np.abs(eta - values)))


def h_k(rho: float, values, eta: float) -> float:
    """eta - 2 rho^2/(g_k(eta) + sqrt(g_k(eta)^2 + 4 rho^2)); nondecreasing in eta.

    Only the exact 0/0 case is guarded here, so monotonicity holds without slack.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    return eta - correction(rho, g_k(values, eta), 0.0)


def bauer_fike(residual: float) -> float:
    """Distance bound from lambda_1^V to the spectrum of A(mu)."""
    if residual < 0:
        raise ValueError("residual norm must be nonnegative")
    return float(residual)


def eigvec_from_eigval_bound(lam_v: float, lam: float, gap: float) -> float:
    """sqrt((lambda_1^V - lambda_1)/gap): bound on the component of u_1^V outside W_1."""
    if gap <= 0:
        raise ValueError("gap must be positive")
    if lam_v < lam:
        raise ValueError("need lambda_1^V >= lambda_1")
    return math.sqrt((lam_v - lam) / gap)


# ----------------------------------------------------------------------
# per-parameter evaluation with caching
# ----------------------------------------------------------------------
@dataclass
class BoundContext:
    """Lower-bound quantities at one parameter over a frozen RomState, cached per s."""

    state: RomState
    mu: np.ndarray
    red: ReducedEig = None
    lp_max_iter: int = 10000
    _rho: dict = field(default_factory=dict)
    _eta: dict = field(default_factory=dict)
    relaxed: bool = False

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float)).ravel()
        if self.red is None:
            self.red = self.state.reduced_eig(self.mu)

    @property
    def scale(self) -> float:
        return 1.0 + float(np.max(np.abs(self.red.values)))

    def check_s(self, s: int) -> None:
        if not 1 <= s <= self.state.r:
            raise SRangeError(f"s={s} outside 1..{self.state.r}")
        if not self.red.is_boundary(s):
            raise SRangeError(f"s={s} splits a reduced eigenvalue cluster")

    def rho(self, s: int) -> float:
        if s not in self._rho:
            self.check_s(s)
            red = self.red
            self._rho[s] = self.state.residual_block_norm(red.theta, red.vectors[:, :s], red.values[:s])
        return self._rho[s]

    def beta_all(self, s: int) -> np.ndarray:
        """beta_j(mu, s) for every snapshot j (zero-length if none)."""
        self.check_s(s)
        st = self.state
        out = np.empty(st.J)
        U = self.red.vectors[:, :s]
        for idx, vals, nxt, M in st.beta_groups():
            X = M @ U
            P = X @ np.conj(np.swapaxes(X, 1, 2))
            d1 = vals - vals[:, :1]
            d2 = np.sqrt(np.maximum(nxt[:, None] - vals, 0.0))
            B = d2[:, :, None] * P * d2[:, None, :]
            ell = vals.shape[1]
            B[:, np.arange(ell), np.arange(ell)] += d1
            B = 0.5 * (B + np.conj(np.swapaxes(B, 1, 2)))
            out[idx] = np.linalg.eigvalsh(B)[:, 0]
        return out

    def lp_instance(self, s: int, use_snapshots: bool = True) -> LpInstance:
        st = self.state
        rows, lam1 = st.snapshot_matrix()
        if use_snapshots and st.J:
            rhs = lam1 + self.beta_all(s)
        else:
            rows, rhs = None, None
        return LpInstance(self.red.theta, st.extrema[:, 0], st.extrema[:, 1], rows, rhs)

    def eta(self, s: int) -> float:
        """eta_*(mu, s) <= lambda_1 of A(mu) restricted to U(mu, s)^perp."""
        if s in self._eta:
            return self._eta[s]
        self.check_s(s)
        st = self.state
        if st.r == st.n:
            # V spans everything: the compression to U^perp is known exactly
            val = float(self.red.values[s]) if s < st.r else math.inf
        else:
            inst = self.lp_instance(s, use_snapshots=st.n >= 2 * s)
            res = solve_lp(inst, max_iter=self.lp_max_iter)
            self.relaxed |= res.relaxed
            val = res.value
        self._eta[s] = val
        return val

    def slb(self, k: int, s: int, eta: float | None = None) -> float:
        """lambda_k^SLB(mu) with U(mu, s); k <= s."""
        if not 1 <= k <= s:
            raise SRangeError(f"need 1 <= k={k} <= s={s}")
        eta = self.eta(s) if eta is None else eta
        lam = float(self.red.values[k - 1])
        g = g_k(self.red.values[:k], eta)
        return min(lam, eta) - correction(self.rho(s), g, self.scale)

    def epsilon(self, s: int) -> float:
        """The correction 2 rho^2/(g_s + sqrt(g_s^2 + 4 rho^2)) at eta_*(mu, s)."""
        return correction(self.rho(s), g_k(self.red.values[:s], self.eta(s)), self.scale)

    # convenience
    def slb1(self, s: int | None = None) -> float:
        return self.slb(1, self.red.m1 if s is None else s)


def context(state: RomState, mu, red: ReducedEig | None = None) -> BoundContext:
    return BoundContext(state, mu, red)


def rho(state: RomState, mu, s: int, ctx: BoundContext | None = None) -> float:
    return (ctx or BoundContext(state, mu)).rho(s)


def beta(state: RomState, j: int, mu, s: int, ctx: BoundContext | None = None) -> float:
    """beta^(j)(mu, s) for snapshot j; requires n >= 2s."""
    if state.n < 2 * s:
        raise SRangeError(f"beta needs n >= 2s (n={state.n}, s={s})")
    ctx = ctx or BoundContext(state, mu)
    return float(ctx.beta_all(s)[j])


def eta_star(state: RomState, mu, s: int, ctx: BoundContext | None = None) -> float:
    return (ctx or BoundContext(state, mu)).eta(s)


def f_J(state: RomState, mu, eta: float, s: int, ctx: BoundContext | None = None) -> float:
    """min{lambda_1^V, eta} - 2 rho^2/(|lambda_1^V - eta| + sqrt(. + 4 rho^2))."""
    return (ctx or BoundContext(state, mu)).slb(1, s, eta=eta)


def slb_1(state: RomState, mu, s: int | None = None, ctx: BoundContext | None = None) -> float:
    return (ctx or BoundContext(state, mu)).slb1(s)


def slb_k(state: RomState, mu, k: int, s: int, ctx: BoundContext | None = None) -> float:
    return (ctx or BoundContext(state, mu)).slb(k, s)
