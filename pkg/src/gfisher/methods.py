"""Unified p-value computation across all approximation methods.

A method is fitted once per (definition, correlation matrix) into a
``NullApprox`` whose vectorized survival function prices any number of
observed statistic values; this is what the simulation harness streams
against. ``compute_pvalue`` is the one-shot convenience wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dependence, qform, surrogates
from .kernels import gamma_sf
from .statistic import GFisherDef, InputPanel, PValueResult, evaluate, to_pvalues
from .surrogates import MomentSummary

__all__ = ["METHODS", "NullApprox", "analytic_moments", "compute_pvalue", "fit_null"]

METHODS = ("gb", "mr", "q", "hyb", "ggd123", "ggd234", "ggdmr")

_NEEDS_MOMENTS = {"mr": "skewness/kurtosis", "ggd123": "skewness", "ggd234": "skewness/kurtosis", "ggdmr": "skewness/kurtosis"}
_TWO_SIDED_ONLY = ("q", "hyb")


@dataclass
class NullApprox:
    """A fitted null approximation: evaluate ``survival`` at observed values."""

    method: str
    gdef: GFisherDef
    survival: Callable[[np.ndarray], np.ndarray]
    diagnostics: dict = field(default_factory=dict)

    def pvalue(self, t_obs: float) -> PValueResult:
        p = float(np.asarray(self.survival(np.asarray([t_obs], dtype=float)))[0])
        return PValueResult(
            p, float(t_obs), self.method, side=self.gdef.side, diagnostics=dict(self.diagnostics)
        )


def analytic_moments(gdef: GFisherDef, sigma, kstar: int = dependence.DEFAULT_KSTAR) -> MomentSummary:
    """Exact null mean and variance (higher moments are not analytic here)."""
    return MomentSummary(mu=gdef.mean, var=dependence.var_T(gdef, sigma, kstar), source="analytic")


def _gamma_survival(shape: float, mu: float, sd: float) -> Callable[[np.ndarray], np.ndarray]:
    def surv(t: np.ndarray) -> np.ndarray:
        arg = (np.asarray(t, dtype=float) - mu) / sd * np.sqrt(shape) + shape
        out = np.ones_like(arg, dtype=float)
        pos = arg > 0.0
        if np.any(pos):
            out[pos] = gamma_sf(arg[pos], shape)
        return out

    return surv


def fit_null(
    gdef: GFisherDef,
    sigma,
    method: str = "hyb",
    *,
    kstar: int = dependence.DEFAULT_KSTAR,
    moments: MomentSummary | None = None,
    qf_acc: float = qform.DEFAULT_QF_ACC,
) -> NullApprox:
    """Fit one approximation method for a statistic under a correlation matrix.

    ``moments`` supplies skewness/kurtosis (and overrides mean/variance) for
    the methods that need them: required for mr/ggd123/ggd234/ggdmr. The
    q and hyb methods are restricted to two-sided inputs with integer
    degrees of freedom.
    """
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method in _TWO_SIDED_ONLY and gdef.side != "two":
        raise ValueError(f"method {method!r} requires two-sided input p-values")
    if method in _NEEDS_MOMENTS and moments is None:
        raise ValueError(
            f"method {method!r} needs a MomentSummary with {_NEEDS_MOMENTS[method]} "
            "(e.g. from harness.empirical_moments or qform.hybrid_moments)"
        )

    diag: dict = {"kstar": kstar}

    if method == "gb":
        m = moments or analytic_moments(gdef, sigma, kstar)
        sur = surrogates.fit_gb(m)
        diag.update({"shape": sur.shape, "moment_source": m.source})
        return NullApprox(method, gdef, _gamma_survival(sur.shape, m.mu, m.sd), diag)

    if method == "mr":
        m = moments
        sur = surrogates.fit_mr(m)
        diag.update(
            {"shape": sur.shape, "moment_source": m.source, "mr_fallback_gb": sur.degenerate_fallback}
        )
        return NullApprox(method, gdef, _gamma_survival(sur.shape, m.mu, m.sd), diag)

    if method == "q":
        spec = qform.qform_spec(gdef, sigma, kstar)
        diag.update(qform.spec_diagnostics(spec, gdef))
        diag["qf_acc"] = qf_acc

        def surv(t: np.ndarray) -> np.ndarray:
            t = np.atleast_1d(np.asarray(t, dtype=float))
            return np.array([qform.qform_sf(spec, x, qf_acc) for x in t])

        return NullApprox(method, gdef, surv, diag)

    if method == "hyb":
        spec = qform.qform_spec(gdef, sigma, kstar)
        shape = qform.hybrid_shape(spec)
        mu = gdef.mean
        sd = float(np.sqrt(dependence.var_T(gdef, sigma, kstar)))
        diag.update(qform.spec_diagnostics(spec, gdef))
        diag["shape"] = shape
        return NullApprox(method, gdef, _gamma_survival(shape, mu, sd), diag)

    # generalized-gamma variants
    variant = method.removeprefix("ggd")
    sur = surrogates.fit_ggd(moments, variant)  # raises NoSolutionError when unsolved
    diag.update(
        {
            "variant": variant,
            "params": [sur.shape, sur.scale, sur.power, sur.loc],
            "fit_residual": sur.residual,
            "moment_source": moments.source,
        }
    )

    def surv_ggd(t: np.ndarray) -> np.ndarray:
        return np.asarray(
            surrogates.ggd_sf(np.asarray(t, dtype=float), sur.shape, sur.scale, sur.power, sur.loc)
        )

    return NullApprox(method, gdef, surv_ggd, diag)


def compute_pvalue(
    gdef: GFisherDef,
    sigma,
    values,
    kind: str = "z",
    method: str = "hyb",
    *,
    kstar: int = dependence.DEFAULT_KSTAR,
    moments: MomentSummary | None = None,
    qf_acc: float = qform.DEFAULT_QF_ACC,
) -> PValueResult:
    """One-shot p-value: inputs -> p-values -> statistic -> fitted survival."""
    panel = values if isinstance(values, InputPanel) else InputPanel(values, kind=kind)
    pvals = to_pvalues(panel, gdef.side)
    n_zero = int(np.count_nonzero(pvals <= 0.0))
    t_obs = evaluate(gdef, pvals)
    if method == "q":
        # the single-point path reports the achieved inversion bound
        result = qform.pvalue_q(gdef, sigma, t_obs, kstar=kstar, acc=qf_acc)
    else:
        null = fit_null(gdef, sigma, method, kstar=kstar, moments=moments, qf_acc=qf_acc)
        result = null.pvalue(t_obs)
    result.diagnostics["clamped_inputs"] = n_zero
    result.diagnostics["cov_last_term"] = dependence.truncation_diagnostic(gdef, sigma, kstar)
    return result
