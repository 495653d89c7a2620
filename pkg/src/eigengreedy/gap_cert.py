"""Spectral gap bounds, the exact-dimension condition and online conditional certification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .eigensolve import lowest_clusters
from .lowerbounds import BoundContext, correction, g_k
from .subspace import RomState

DIM_MARGIN = 1e-12


@dataclass
class GapBounds:
    reduced_gap: float
    sub: float
    slb: float
    indicator: float
    degenerate: bool = False


@dataclass
class DimCheckResult:
    satisfied: list
    s: list
    eta_values: list
    epsilon_values: list
    reduced_values: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(self.satisfied) and all(self.satisfied)

    @property
    def slack(self) -> float:
        """eta_* - lambda^V_s - eps for t = 1 (the F diagnostic)."""
        return self.eta_values[0] - self.reduced_values[self.s[0] - 1] - self.epsilon_values[0]


def _ctx(state: RomState, mu, ctx: BoundContext | None) -> BoundContext:
    return ctx if ctx is not None else BoundContext(state, mu)


def reduced_gap(state: RomState, mu, ctx: BoundContext | None = None) -> float:
    """lambda~_2^V - lambda_1^V; NaN when the reduced matrix is a multiple of the identity."""
    if state.r < 2:
        raise ValueError("reduced gap needs r >= 2")
    red = _ctx(state, mu, ctx).red
    if red.degenerate:
        return math.nan
    return float(red.values[red.m1] - red.values[0])


def gap_sub(state: RomState, mu, ctx: BoundContext | None = None) -> float:
    """lambda^V_{m_1+1} - lambda_1^SLB(s = m_1(mu, V)); upper bound when m_1(mu) <= m_1(mu, V)."""
    c = _ctx(state, mu, ctx)
    red = c.red
    if red.degenerate:
        raise ValueError("reduced matrix is c*I: second cluster undefined")
    return float(red.values[red.m1]) - c.slb(1, red.m1)


def gap_slb(state: RomState, mu, ctx: BoundContext | None = None) -> float:
    """lambda^SLB_{m_1+1}(s = m_1 + m_2) - lambda_1^V; lower bound when m_1(mu) >= m_1(mu, V)."""
    c = _ctx(state, mu, ctx)
    red = c.red
    if red.degenerate:
        raise ValueError("reduced matrix is c*I: second cluster undefined")
    m1 = red.m1
    s = red.boundary(2)
    return c.slb(m1 + 1, s) - float(red.values[0])


def gap_bounds(state: RomState, mu, ctx: BoundContext | None = None) -> GapBounds:
    c = _ctx(state, mu, ctx)
    if c.red.degenerate:
        return GapBounds(math.nan, math.nan, math.nan, math.inf, degenerate=True)
    gv = reduced_gap(state, mu, c)
    sub = gap_sub(state, mu, c)
    slb = gap_slb(state, mu, c)
    return GapBounds(gv, sub, slb, (sub - slb) / gv)


def gap_indicator(state: RomState, mu, ctx: BoundContext | None = None) -> float:
    """Gamma^V(mu) = (gamma^SUB - gamma^SLB) / gamma^V; +inf flags a degenerate reduced matrix."""
    return gap_bounds(state, mu, ctx).indicator


def true_gap(family, mu, **solver_kw) -> tuple[float, int, float]:
    """(gamma(mu), m_1(mu), lambda_1(mu)) from a full-order solve."""
    low = lowest_clusters(family, mu, 1, **solver_kw)
    return float(low.next_value - low.values[0]), low.ell, float(low.values[0])


def gap_error_oracle(state: RomState, family, mu, ctx: BoundContext | None = None, **solver_kw) -> float:
    """E(mu) = |gamma^V(mu) - gamma(mu)| / gamma^V(mu)."""
    gv = reduced_gap(state, mu, ctx)
    g, _, _ = true_gap(family, mu, **solver_kw)
    return abs(gv - g) / gv


def epsilon_J(state: RomState, mu, s: int, ctx: BoundContext | None = None) -> float:
    return _ctx(state, mu, ctx).epsilon(s)


def check_dim_condition(state: RomState, mu, k: int = 1, ctx: BoundContext | None = None,
                        margin: float = DIM_MARGIN) -> DimCheckResult:
    """Evaluate eta_*(mu, s(t)) > lambda^V_{s(t)} + eps(mu, s(t)) for t = 1..k.

    The strict inequality is tested with a relative safety margin.  When it
    holds for all t, m_t(mu, V) = m_t(mu) for t <= k.
    """
    c = _ctx(state, mu, ctx)
    red = c.red
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(red.clustering) < k:
        raise ValueError(f"reduced matrix has fewer than {k} clusters")
    sat, ss, etas, epss = [], [], [], []
    for t in range(1, k + 1):
        s = red.boundary(t)
        eta = c.eta(s)
        lam = float(red.values[s - 1])
        eps = correction(c.rho(s), g_k(red.values[:s], eta), c.scale)
        scale = max(1.0, abs(lam), abs(eta) if math.isfinite(eta) else 0.0)
        sat.append(bool(eta > lam + eps + margin * scale))
        ss.append(s)
        etas.append(eta)
        epss.append(eps)
    return DimCheckResult(sat, ss, etas, epss, red.values.copy())


def f_diagnostics(state: RomState, mu, ctx: BoundContext | None = None) -> float:
    """F(mu) = eta_*(mu, s(1)) - lambda^V_{s(1)} - eps(mu, s(1)); positive iff the k=1 condition holds."""
    return check_dim_condition(state, mu, 1, ctx, margin=0.0).slack


# ----------------------------------------------------------------------
# online certification
# ----------------------------------------------------------------------
CERTIFIED = "Certified"
DIM_FAILED = "DimConditionFailed"
GAP_TOO_WIDE = "GapWidthTooLarge"


@dataclass
class CertResult:
    status: str
    bound: float = math.nan
    eps_mu: float = math.nan
    lam1: float = math.nan
    m1: int = 0
    reduced_gap: float = math.nan
    surrogate: float = math.nan
    residual: float = math.nan
    details: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED


def conditional_certify_online(gap_state: RomState, eig_state: RomState, mu, eps_mode: str = "absolute",
                               margin: float = DIM_MARGIN, gap_ctx: BoundContext | None = None,
                               eig_ctx: BoundContext | None = None) -> CertResult:
    """Certify the ground eigenspace at an arbitrary mu using both reduced models.

    Requires the k=1 dimension condition on both models.  eps_mu is the width
    gamma^SUB - gamma^SLB of the gap ROM (``absolute``) or that width over
    gamma^V (``relative``); it must be < 1.  The returned bound divides by
    gamma^V - width = (1 - relative width) gamma^V, which is a valid lower
    bound for gamma(mu) in either mode.
    """
    if eps_mode not in ("absolute", "relative"):
        raise ValueError("eps_mode must be 'absolute' or 'relative'")
    gc = gap_ctx or BoundContext(gap_state, mu)
    ec = eig_ctx or BoundContext(eig_state, mu)
    red = ec.red
    res = CertResult(DIM_FAILED, lam1=float(red.values[0]), m1=red.m1)
    if gc.red.degenerate:
        res.details["reason"] = "gap reduced matrix is c*I"
        return res
    dim_gap = check_dim_condition(gap_state, mu, 1, gc, margin)
    dim_eig = check_dim_condition(eig_state, mu, 1, ec, margin)
    res.details.update(dim_gap=dim_gap.ok, dim_eig=dim_eig.ok, F_gap=dim_gap.slack, F_eig=dim_eig.slack)
    if not (dim_gap.ok and dim_eig.ok):
        return res
    gb = gap_bounds(gap_state, mu, gc)
    width = gb.sub - gb.slb
    eps_mu = width if eps_mode == "absolute" else width / gb.reduced_gap
    res.eps_mu, res.reduced_gap = eps_mu, gb.reduced_gap
    denom = gb.reduced_gap - width
    if not eps_mu < 1 or denom <= 0:
        res.status = GAP_TOO_WIDE
        return res
    H = float(red.values[0]) - ec.slb1()
    R = eig_state.residual_norm(mu, red)
    res.surrogate, res.residual = H, R
    res.bound = (H + R) / denom
    res.status = CERTIFIED
    return res
