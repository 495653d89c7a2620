"""Offline greedy drivers for the gap subspace and the ground eigenspace subspace."""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .affine import AffineFamily, ParameterGrid
from .eigensolve import CLUSTER_ABS, CLUSTER_REL, DENSE_LIMIT, lowest_clusters
from .gap_cert import DIM_MARGIN, check_dim_condition, gap_bounds, true_gap
from .lowerbounds import BoundContext
from .subspace import RomState, new_state, projector_distance

log = logging.getLogger(__name__)


class GreedyError(RuntimeError):
    pass


@dataclass
class GreedyConfig:
    grid: ParameterGrid
    tol: float
    max_iterations: int = 1000
    initial_index: int = 0
    margin: float = DIM_MARGIN
    eig_tol: float = 1e-14
    eig_method: str = "auto"
    dense_limit: int = DENSE_LIMIT
    seed: int = 0
    cluster_abs: float = CLUSTER_ABS
    cluster_rel: float = CLUSTER_REL
    residual_method: str = "stable"
    threads: int = 0  # 0: EIGENGREEDY_THREADS or 1
    paranoid: bool = False
    verify_oracle: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if len(self.grid) == 0:
            raise ValueError("empty training grid")
        if not 0 <= self.initial_index < len(self.grid):
            raise ValueError("initial index outside the grid")

    @property
    def n_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        return max(1, int(os.environ.get("EIGENGREEDY_THREADS", "1")))

    def solver_kw(self) -> dict:
        return dict(tol=self.eig_tol, method=self.eig_method, dense_limit=self.dense_limit, seed=self.seed,
                    tol_abs=self.cluster_abs, tol_rel=self.cluster_rel)


@dataclass
class GreedyTrace:
    rows: list = field(default_factory=list)
    final_max: float = math.nan
    seconds: float = 0.0

    def add(self, **row):
        self.rows.append(row)

    @property
    def selected(self) -> list[int]:
        return [r["index"] for r in self.rows]

    def write_csv(self, path) -> None:
        cols = ["iteration", "phase", "index", "mu", "estimator", "H", "residual_term", "r", "ell"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.rows:
                w.writerow([_fmt(row.get(c)) for c in cols])


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, np.ndarray):
        return " ".join(f"{x:.17g}" for x in v)
    return "" if v is None else str(v)


def argmax_over_grid(values) -> int:
    """Index of the maximum, lowest index on ties; NaN and +inf (degenerate flags) win."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise ValueError("empty grid")
    vals = np.where(np.isnan(vals), np.inf, vals)
    return int(np.argmax(vals))


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ----------------------------------------------------------------------
# estimators
# ----------------------------------------------------------------------
def h_surrogate(state: RomState, mu, ctx: BoundContext | None = None) -> float:
    """lambda_1^SUB - lambda_1^SLB with s = m_1(mu, V)."""
    c = ctx or BoundContext(state, mu)
    return float(c.red.values[0]) - c.slb1()


@dataclass
class DeltaParts:
    delta: float
    H: float
    residual: float
    gap_v: float


def delta_parts(eig_state: RomState, gap_state: RomState, eps_gamma: float, mu,
                eig_ctx: BoundContext | None = None, gap_v: float | None = None) -> DeltaParts:
    if not 0 < eps_gamma < 1:
        raise ValueError("eps_gamma must lie in (0, 1)")
    ec = eig_ctx or BoundContext(eig_state, mu)
    if gap_v is None:
        gred = gap_state.reduced_eig(mu)
        if gred.degenerate:
            raise ValueError("gap reduced matrix is c*I at this parameter")
        gap_v = float(gred.values[gred.m1] - gred.values[0])
    H = h_surrogate(eig_state, mu, ec)
    R = eig_state.residual_norm(mu, ec.red)
    return DeltaParts((H + R) / ((1.0 - eps_gamma) * gap_v), H, R, gap_v)


def delta_estimator(eig_state: RomState, gap_state: RomState, eps_gamma: float, mu) -> float:
    """[(lambda_1^SUB - lambda_1^SLB) + ||R||] / [(1 - eps_gamma) gamma^{V_gamma}(mu)]."""
    return delta_parts(eig_state, gap_state, eps_gamma, mu).delta


# ----------------------------------------------------------------------
# drivers
# ----------------------------------------------------------------------
class _Driver:
    nclusters = 1

    def __init__(self, family: AffineFamily, config: GreedyConfig, state: RomState | None = None):
        if family.is_rational:
            raise ValueError("rational theta terms are not supported by the certified greedy")
        config.grid.check_inside(family.domain, atol=1e-12)
        self.family = family
        self.cfg = config
        self.state = state or new_state(family, config.cluster_abs, config.cluster_rel, config.residual_method)
        self.trace = GreedyTrace()
        self.selected: set[int] = set()
        self.iteration = 0

    def snapshot(self, idx: int, phase: str, est=None, parts=None):
        if idx in self.selected:
            raise GreedyError(f"grid point {idx} selected twice; estimator failed to collapse")
        if self.iteration >= self.cfg.max_iterations:
            raise GreedyError(f"max_iterations={self.cfg.max_iterations} exceeded")
        mu = self.cfg.grid[idx]
        low = lowest_clusters(self.family, mu, self.nclusters, **self.cfg.solver_kw())
        self.state.add_snapshot(mu, low, paranoid=self.cfg.paranoid)
        self.selected.add(idx)
        self.iteration += 1
        row = dict(iteration=self.iteration, phase=phase, index=idx, mu=np.asarray(mu), estimator=est,
                   r=self.state.r, ell=low.ell)
        if parts is not None:
            row.update(H=parts.H, residual_term=parts.residual)
        self.trace.add(**row)
        log.info("%s %d: mu=%s est=%s r=%d ell=%d", phase, self.iteration, mu, est, self.state.r, low.ell)

    def estimate(self, idx: int):
        raise NotImplementedError

    def needs_enforcement(self, idx: int) -> bool:
        raise NotImplementedError

    def sweep(self):
        return _map(self.estimate, range(len(self.cfg.grid)), self.cfg.n_threads)

    def run(self):
        t0 = time.perf_counter()
        if self.state.r == 0:
            self.snapshot(self.cfg.initial_index, "init")
        while True:
            while True:
                results = self.sweep()
                values = [r[0] for r in results]
                idx = argmax_over_grid(values)
                if values[idx] <= self.cfg.tol:
                    break
                self.snapshot(idx, "greedy", float(values[idx]), results[idx][1])
            added = False
            for idx in range(len(self.cfg.grid)):
                if idx in self.selected:
                    continue
                if self.needs_enforcement(idx):
                    self.snapshot(idx, "enforce", None)
                    added = True
            if not added:
                break
        final = self.sweep()
        self.trace.final_max = float(max(r[0] for r in final))
        # independent re-check of the postcondition
        if self.trace.final_max > self.cfg.tol:
            raise GreedyError("postcondition failed after enforcement")
        self.trace.seconds = time.perf_counter() - t0
        return self.state, self.trace


class _GapDriver(_Driver):
    nclusters = 2

    def estimate(self, idx):
        gb = gap_bounds(self.state, self.cfg.grid[idx])
        return (math.inf if gb.degenerate else gb.indicator), None

    def needs_enforcement(self, idx):
        ctx = BoundContext(self.state, self.cfg.grid[idx])
        if ctx.red.degenerate:
            return True
        return not check_dim_condition(self.state, ctx.mu, 1, ctx, self.cfg.margin).ok


class _EigDriver(_Driver):
    nclusters = 1

    def __init__(self, family, config, gap_state: RomState, eps_gamma: float):
        if not 0 < eps_gamma < 1:
            raise ValueError("eps_gamma must lie in (0, 1)")
        super().__init__(family, config)
        self.gap_state = gap_state
        self.eps_gamma = eps_gamma
        gaps = []
        for mu in config.grid:
            red = gap_state.reduced_eig(mu)
            if red.degenerate:
                raise ValueError(f"gap ROM is degenerate at {mu}; was it built on this grid?")
            gaps.append(float(red.values[red.m1] - red.values[0]))
        self.gap_v = np.array(gaps)

    def estimate(self, idx):
        mu = self.cfg.grid[idx]
        parts = delta_parts(self.state, self.gap_state, self.eps_gamma, mu, gap_v=self.gap_v[idx])
        return parts.delta, parts

    def needs_enforcement(self, idx):
        ctx = BoundContext(self.state, self.cfg.grid[idx])
        return not check_dim_condition(self.state, ctx.mu, 1, ctx, self.cfg.margin).ok


def greedy_gap(family: AffineFamily, config: GreedyConfig, state: RomState | None = None):
    """Grow V_gamma until max Gamma <= tol and the k=1 dimension condition holds on the grid."""
    drv = _GapDriver(family, config, state)
    st, trace = drv.run()
    st.meta.update(kind="gap", eps_gamma=config.tol, J=st.J)
    return st, trace


def greedy_eigenspace(family: AffineFamily, gap_state: RomState, config: GreedyConfig,
                      eps_gamma: float | None = None):
    """Grow V_W until max Delta <= tol and the k=1 dimension condition holds on the grid."""
    if eps_gamma is None:
        eps_gamma = gap_state.meta.get("eps_gamma")
        if eps_gamma is None:
            raise ValueError("eps_gamma unknown: pass it or use a gap ROM built by greedy_gap")
    drv = _EigDriver(family, config, gap_state, float(eps_gamma))
    st, trace = drv.run()
    st.meta.update(kind="eig", eps_W=config.tol, eps_gamma=float(eps_gamma), J=st.J)
    return st, trace


# ----------------------------------------------------------------------
# oracle verification
# ----------------------------------------------------------------------
REPORT_COLUMNS = ["index", "mu", "lam1_V", "slb1", "m1_V", "gap_sub", "gap_slb", "Gamma", "F", "dim_ok",
                  "Delta", "F_eig", "dim_ok_eig", "lam1", "m1", "gamma", "E", "proj_err", "violations"]


def verify_point(family: AffineFamily, gap_state: RomState, mu, eig_state: RomState | None = None,
                 eps_gamma: float | None = None, eps_W: float | None = None, oracle: bool = True,
                 tol_abs: float = 1e-10, solver_kw: dict | None = None) -> dict:
    """One report row with bounds, diagnostics and (oracle mode) true errors and claim checks."""
    solver_kw = solver_kw or {}
    mu = np.atleast_1d(np.asarray(mu, dtype=float)).ravel()
    gc = BoundContext(gap_state, mu)
    row = dict(mu=mu, lam1_V=float(gc.red.values[0]), m1_V=gc.red.m1)
    viol = []
    gb = gap_bounds(gap_state, mu, gc)
    row.update(gap_sub=gb.sub, gap_slb=gb.slb, Gamma=gb.indicator, slb1=gc.slb1())
    if gb.degenerate:
        viol.append("degenerate_gap_rom")
        dim = None
    else:
        dim = check_dim_condition(gap_state, mu, 1, gc)
        row.update(F=dim.slack, dim_ok=dim.ok)
    if eps_gamma is not None and not gb.degenerate and gb.indicator > eps_gamma:
        viol.append("Gamma>eps_gamma")
    ec = None
    if eig_state is not None:
        ec = BoundContext(eig_state, mu)
        parts = delta_parts(eig_state, gap_state, eps_gamma, mu, eig_ctx=ec,
                            gap_v=None if gb.degenerate else gb.reduced_gap)
        dim_e = check_dim_condition(eig_state, mu, 1, ec)
        row.update(Delta=parts.delta, F_eig=dim_e.slack, dim_ok_eig=dim_e.ok)
        if eps_W is not None and parts.delta > eps_W:
            viol.append("Delta>eps_W")
    if oracle:
        low = lowest_clusters(family, mu, 1, **solver_kw)
        lam1, m1 = float(low.values[0]), low.ell
        gamma = float(low.next_value - lam1)
        scale = 1.0 + abs(lam1)
        E = abs(gb.reduced_gap - gamma) / gb.reduced_gap if not gb.degenerate else math.nan
        row.update(lam1=lam1, m1=m1, gamma=gamma, E=E)
        if row["slb1"] > lam1 + 1e-8 * scale:
            viol.append("slb1>lam1")
        if lam1 > row["lam1_V"] + tol_abs * scale:
            viol.append("lam1>lam1_V")
        if dim is not None and dim.ok:
            if gc.red.m1 != m1:
                viol.append("m1_mismatch_gap")
            if E > gb.indicator + 1e-8:
                viol.append("E>Gamma")
            if eps_gamma is not None and E > eps_gamma + 1e-12:
                viol.append("E>eps_gamma")
        if ec is not None:
            if eig_state.V is None:
                raise ValueError("projection errors need the eigenspace ROM basis")
            W1v = eig_state.V @ ec.red.vectors[:, :ec.red.m1]
            W1v, _ = np.linalg.qr(W1v)
            perr = projector_distance(low.vectors, W1v)
            row["proj_err"] = perr
            if row["dim_ok_eig"] and ec.red.m1 != m1:
                viol.append("m1_mismatch_eig")
            if row["dim_ok_eig"] and not gb.degenerate and perr > row["Delta"] + tol_abs:
                viol.append("proj_err>Delta")
            if eps_W is not None and perr > eps_W + tol_abs:
                viol.append("proj_err>eps_W")
    row["violations"] = ";".join(viol)
    return row


def verify_grid(family: AffineFamily, gap_state: RomState, grid: ParameterGrid, eig_state: RomState | None = None,
                eps_gamma: float | None = None, eps_W: float | None = None, oracle: bool = True,
                threads: int = 1, solver_kw: dict | None = None) -> list[dict]:
    if len(grid) == 0:
        raise ValueError("empty grid")

    def one(i):
        row = verify_point(family, gap_state, grid[i], eig_state, eps_gamma, eps_W, oracle, solver_kw=solver_kw)
        row["index"] = i
        return row

    return _map(one, range(len(grid)), threads)


def write_report(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in REPORT_COLUMNS])
