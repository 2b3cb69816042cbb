"""Omnibus tests over multiple weighting schemes: minimum-p and Cauchy combination.

The component statistics T(1)..T(m) share one input panel and are treated as
jointly normal with the exact cross covariances; the minimum-p omnibus
p-value is a multivariate-normal rectangle probability evaluated by
randomized quasi-Monte Carlo, while the Cauchy combination has a closed-form
tail that is essentially free of the cross correlations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from . import dependence, methods
from .statistic import GFisherDef, InputPanel, PValueResult, evaluate, to_pvalues
from .surrogates import MomentSummary

__all__ = [
    "OmnibusPanel",
    "build_panel",
    "component_pvalues",
    "mvn_rect_prob",
    "omnibus_pvalues",
    "pvalue_cc",
    "pvalue_minp",
]

MINP_DEFAULT_TOL = 1e-4
MINP_MAX_POINTS = 10_000_000


def _default_method(side: str) -> str:
    # one-sided inputs have no quadratic-form surrogate; moment-ratio with
    # empirical moments is the accurate general path there
    return "hyb" if side == "two" else "mr"


@dataclass
class OmnibusPanel:
    """Fitted component methods plus the cross-covariance of the components."""

    defs: list[GFisherDef]
    sigma: np.ndarray
    fitted: list[methods.NullApprox]
    omega: np.ndarray
    means: np.ndarray
    corr: np.ndarray
    method_tags: list[str]
    diagnostics: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.defs)

    @property
    def side(self) -> str:
        return self.defs[0].side


def build_panel(
    defs: Sequence[GFisherDef],
    sigma,
    method: str | Sequence[str] | None = None,
    *,
    kstar: int = dependence.DEFAULT_KSTAR,
    moments: Sequence[MomentSummary | None] | None = None,
    qf_acc: float = 1e-9,
) -> OmnibusPanel:
    """Validate the definitions, fit each component, and build the cross covariance."""
    defs = list(defs)
    if not defs:
        raise ValueError("need at least one statistic definition")
    side = defs[0].side
    n = defs[0].n
    for g in defs:
        if g.side != side or g.n != n:
            raise ValueError("all definitions must share n and sidedness")
    m = len(defs)
    if method is None:
        tags = [_default_method(side)] * m
    elif isinstance(method, str):
        tags = [method] * m
    else:
        tags = list(method)
        if len(tags) != m:
            raise ValueError("one method tag per definition required")
    if moments is None:
        moments = [None] * m
    if len(moments) != m:
        raise ValueError("one moment summary (or None) per definition required")

    fitted = [
        methods.fit_null(g, sigma, tag, kstar=kstar, moments=mom, qf_acc=qf_acc)
        for g, tag, mom in zip(defs, tags, moments)
    ]
    omega = dependence.cross_cov(defs, sigma, kstar)
    means = np.array([g.mean for g in defs])
    scale = 1.0 / np.sqrt(np.diag(omega))
    corr = omega * np.outer(scale, scale)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    diag: dict = {"kstar": kstar}
    if np.linalg.eigvalsh(corr)[0] < -1e-10:
        corr = dependence.nearest_correlation(corr)
        diag["corr_repaired"] = True
    return OmnibusPanel(defs, dependence.as_corr(sigma).values, fitted, omega, means, corr, tags, diag)


def component_pvalues(panel: OmnibusPanel, values, kind: str = "z") -> np.ndarray:
    """P(j) for each component statistic on one input panel."""
    inp = values if isinstance(values, InputPanel) else InputPanel(values, kind=kind)
    pvals = to_pvalues(inp, panel.side)
    out = np.empty(panel.m)
    for j, (g, null) in enumerate(zip(panel.defs, panel.fitted)):
        t = evaluate(g, pvals)
        out[j] = null.survival(np.asarray([t]))[0]
    return out


# ---------------------------------------------------------------------------
# Cauchy combination
# ---------------------------------------------------------------------------


def cc_statistic(pj: np.ndarray) -> float:
    """Mean of tan((1/2 - P(j)) pi), computed as cot(pi P(j)) for stability."""
    return float(np.mean(1.0 / np.tan(np.pi * pj)))


def cauchy_sf(x: float) -> float:
    """Standard Cauchy survival 1/2 - arctan(x)/pi, accurate in both tails."""
    if x > 1.0:
        return float(np.arctan(1.0 / x) / np.pi)
    if x < -1.0:
        return float(1.0 - np.arctan(-1.0 / x) / np.pi)
    return float(0.5 - np.arctan(x) / np.pi)


def pvalue_cc(component_pvals) -> PValueResult:
    """Cauchy-combination omnibus p-value from the component p-values.

    The statistic is the equal-weight mean of inverse-Cauchy transforms; its
    null tail is standard Cauchy, p = 1/2 - arctan(ccp) / pi.
    """
    pj = np.atleast_1d(np.asarray(component_pvals, dtype=float))
    clamped = int(np.count_nonzero((pj <= 0.0) | (pj >= 1.0)))
    pj = np.clip(pj, 1e-300, 1.0 - 1e-16)
    stat = cc_statistic(pj)
    diag = {"component_pvalues": pj.tolist(), "clamped_components": clamped}
    return PValueResult(cauchy_sf(stat), stat, "omnibus_cc", diagnostics=diag)


# ---------------------------------------------------------------------------
# Minimum p-value
# ---------------------------------------------------------------------------


def mvn_rect_prob(
    upper,
    corr,
    *,
    abs_tol: float = MINP_DEFAULT_TOL,
    seed: int = 0,
    n_batches: int = 24,
    max_points: int = MINP_MAX_POINTS,
) -> tuple[float, float]:
    """P(Z <= upper) for Z ~ N(0, corr) by randomized quasi-Monte Carlo.

    Sequential conditioning through the Cholesky factor maps the rectangle to
    the unit cube; scrambled Sobol batches give an error estimate (3.5 x the
    batch standard error). Points are doubled until the estimate meets
    ``abs_tol`` or the point budget is exhausted. Returns (probability,
    error estimate). Deterministic for a fixed seed.
    """
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    m = upper.size
    if m == 1:
        return float(ndtr(upper[0])), 0.0
    a = np.asarray(corr, dtype=float)
    if a.shape != (m, m):
        raise ValueError("correlation matrix shape must match the bound vector")
    chol = None
    for eps in (0.0, 1e-12, 1e-10, 1e-8, 1e-6):
        try:
            chol = np.linalg.cholesky((1.0 - eps) * a + eps * np.eye(m))
            break
        except np.linalg.LinAlgError:
            continue
    if chol is None:
        raise ValueError("correlation matrix is not positive semidefinite after repair")

    rng = np.random.default_rng(seed)
    n_per = 1 << 10
    total = 0
    est, err = np.nan, np.inf
    while True:
        batch_means = np.empty(n_batches)
        for b in range(n_batches):
            sob = qmc.Sobol(d=m - 1, scramble=True, seed=rng)
            u = sob.random(n_per)
            f = np.full(n_per, ndtr(upper[0] / chol[0, 0]))
            e_prev = f.copy()
            y = np.zeros((n_per, m - 1))
            for i in range(1, m):
                z = ndtri(np.clip(u[:, i - 1] * e_prev, 1e-16, 1.0 - 1e-16))
                y[:, i - 1] = z
                shift = y[:, :i] @ chol[i, :i]
                e_prev = ndtr((upper[i] - shift) / chol[i, i])
                f *= e_prev
            batch_means[b] = f.mean()
        total += n_batches * n_per
        est = float(batch_means.mean())
        err = float(3.5 * batch_means.std(ddof=1) / np.sqrt(n_batches))
        if err <= abs_tol or total >= max_points:
            return est, err
        n_per *= 2


def pvalue_minp(
    panel: OmnibusPanel,
    values,
    kind: str = "z",
    *,
    abs_tol: float = MINP_DEFAULT_TOL,
    seed: int = 0,
) -> PValueResult:
    """Minimum-p omnibus p-value via the joint normal approximation.

    With minp_o the smallest component p-value, the omnibus p-value is
    1 - P(all standardized components <= upper-tail quantile of minp_o) under
    the component correlation matrix.
    """
    pj = component_pvalues(panel, values, kind)
    return minp_from_components(panel, pj, abs_tol=abs_tol, seed=seed)


def minp_from_components(
    panel: OmnibusPanel,
    component_pvals,
    *,
    abs_tol: float = MINP_DEFAULT_TOL,
    seed: int = 0,
) -> PValueResult:
    pj = np.atleast_1d(np.asarray(component_pvals, dtype=float))
    minp_o = float(pj.min())
    diag: dict = {"component_pvalues": pj.tolist()}
    if panel.m == 1:
        return PValueResult(minp_o, minp_o, "omnibus_minp", diagnostics=diag)
    minp_c = min(max(minp_o, 1e-300), 1.0 - 1e-16)
    upper = np.full(panel.m, -ndtri(minp_c))  # upper-tail quantile of minp_o
    rect, err = mvn_rect_prob(upper, panel.corr, abs_tol=abs_tol, seed=seed)
    diag.update({"rect_prob": rect, "rect_error": err, "m": panel.m})
    p = min(max(1.0 - rect, 0.0), 1.0)
    return PValueResult(p, minp_o, "omnibus_minp", diagnostics=diag)


def omnibus_pvalues(
    panel: OmnibusPanel,
    values,
    kind: str = "z",
    *,
    minp_tol: float = MINP_DEFAULT_TOL,
    seed: int = 0,
) -> dict:
    """Component p-values plus both omnibus p-values, as one report."""
    pj = component_pvalues(panel, values, kind)
    cc = pvalue_cc(pj)
    mp = minp_from_components(panel, pj, abs_tol=minp_tol, seed=seed)
    return {
        "component_pvalues": pj.tolist(),
        "methods": panel.method_tags,
        "cc": cc,
        "minp": mp,
    }
