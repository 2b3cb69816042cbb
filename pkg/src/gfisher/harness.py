"""Simulation laboratory: null samplers, type-I-error ratios, survival curves.

Replication uses counter-based substreams (one Philox jump per batch) derived
from the master seed, so reports are bit-identical for a given configuration
regardless of the number of worker threads; reductions happen in batch order.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from . import dependence, methods, omnibus
from .kernels import chisq_inv_sf
from .statistic import GFisherDef, evaluate_many
from .surrogates import MomentSummary

__all__ = [
    "SimConfig",
    "SurvivalTable",
    "TIEReport",
    "empirical_moments",
    "empirical_tie",
    "inflation_factor",
    "sample_null",
    "survival_compare",
]


@dataclass
class SimConfig:
    """Null-model simulation settings.

    A non-PSD correlation matrix is repaired once, up front, so the sampler
    and every method fitted against this configuration see the same matrix.
    """

    sigma: object
    nreps: int
    seed: int = 0
    model: Literal["gmm", "mvt"] = "gmm"
    df: float = 10.0
    side: Literal["one", "two"] = "two"
    batch_size: int = 100_000
    sigma_repaired: bool = field(init=False, default=False)

    def __post_init__(self):
        corr = dependence.as_corr(self.sigma)
        if not corr.is_psd():
            corr = dependence.CorrMatrix(dependence.nearest_correlation(corr.values))
            self.sigma_repaired = True
        self.sigma = corr
        if self.nreps < 1:
            raise ValueError("nreps must be >= 1")
        if self.model not in ("gmm", "mvt"):
            raise ValueError("model must be 'gmm' or 'mvt'")
        if self.model == "mvt" and self.df <= 2:
            raise ValueError("the multivariate-t model needs df > 2 for a correlation matrix")
        vals, vecs = np.linalg.eigh(self.sigma.values)
        self._sqrt = vecs * np.sqrt(np.maximum(vals, 0.0))

    @property
    def n(self) -> int:
        return self.sigma.n

    def rng(self, batch_index: int, stream: int = 0) -> np.random.Generator:
        """Independent deterministic substream per (stream, batch)."""
        bitgen = np.random.Philox(np.random.SeedSequence((int(self.seed), int(stream))))
        return np.random.Generator(bitgen.jumped(batch_index))

    def batches(self, nreps: int | None = None):
        total = self.nreps if nreps is None else int(nreps)
        size = int(self.batch_size)
        return [(b, min(size, total - b * size)) for b in range((total + size - 1) // size)]

    def draw(self, batch_index: int, size: int, stream: int = 0) -> np.ndarray:
        rng = self.rng(batch_index, stream)
        z = rng.standard_normal((size, self.n)) @ self._sqrt.T
        if self.model == "mvt":
            z /= np.sqrt(rng.chisquare(self.df, size=size) / self.df)[:, None]
        return z


def sim_config_from_json(path) -> SimConfig:
    """Build a simulation configuration from a JSON file.

    Keys: ``sigma`` (path to a dense CSV) or ``structure``
    ({kind, param, block, n}), plus ``nreps``, ``seed``, ``model``, ``df``,
    ``side``, ``batch_size`` with the usual defaults.
    """
    import json

    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    if "sigma" in spec:
        sigma = dependence.CorrMatrix.from_csv(spec["sigma"])
    elif "structure" in spec:
        s = spec["structure"]
        sigma = dependence.gen_structure(s["kind"], s["block"], int(s["n"]), float(s["param"]))
    else:
        raise ValueError("simulation config needs 'sigma' or 'structure'")
    return SimConfig(
        sigma=sigma,
        nreps=int(spec.get("nreps", 1_000_000)),
        seed=int(spec.get("seed", 0)),
        model=spec.get("model", "gmm"),
        df=float(spec.get("df", 10.0)),
        side=spec.get("side", "two"),
        batch_size=int(spec.get("batch_size", 100_000)),
    )


def sample_null(config: SimConfig, nreps: int | None = None, stream: int = 0):
    """Yield batches of input z-score vectors under the configured null."""
    for b, size in config.batches(nreps):
        yield config.draw(b, size, stream)


def _side_pvalues(z: np.ndarray, side: str) -> np.ndarray:
    return ndtr(-z) if side == "one" else 2.0 * ndtr(-np.abs(z))


def _statistics_batch(gdef: GFisherDef, z: np.ndarray, side: str) -> np.ndarray:
    return evaluate_many(gdef, _side_pvalues(z, side))


# ---------------------------------------------------------------------------
# Empirical moments
# ---------------------------------------------------------------------------


def empirical_moments(gdef: GFisherDef, config: SimConfig, nreps: int | None = None) -> MomentSummary:
    """Moments of the statistic estimated from simulated null replicates.

    Streaming accumulation of power sums centered at the analytic null mean,
    constant memory in the replicate count.
    """
    total = config.nreps if nreps is None else int(nreps)
    if total < 100:
        raise ValueError("at least 100 replicates are required for moment estimation")
    shift = gdef.mean
    sums = np.zeros(4)
    count = 0
    for b, size in config.batches(total):
        t = _statistics_batch(gdef, config.draw(b, size, stream=1), config.side) - shift
        sums += [t.sum(), (t**2).sum(), (t**3).sum(), (t**4).sum()]
        count += size
    m1 = sums[0] / count
    m2 = sums[1] / count
    m3 = sums[2] / count
    m4 = sums[3] / count
    var = m2 - m1**2
    mu3 = m3 - 3.0 * m1 * m2 + 2.0 * m1**3
    mu4 = m4 - 4.0 * m1 * m3 + 6.0 * m1**2 * m2 - 3.0 * m1**4
    return MomentSummary(
        mu=shift + m1,
        var=var,
        skew=mu3 / var**1.5,
        exkurt=mu4 / var**2 - 3.0,
        source="empirical",
    )


# ---------------------------------------------------------------------------
# Type-I-error ratios
# ---------------------------------------------------------------------------


@dataclass
class TIEReport:
    """Empirical rejection rates against nominal levels."""

    alphas: np.ndarray
    counts: np.ndarray
    nreps: int
    method: str
    n_failures: int = 0
    config: dict = field(default_factory=dict)

    @property
    def rates(self) -> np.ndarray:
        return self.counts / self.nreps

    @property
    def ratios(self) -> np.ndarray:
        return self.rates / self.alphas

    @property
    def mc_se(self) -> np.ndarray:
        r = self.rates
        return np.sqrt(np.maximum(r * (1.0 - r), 0.0) / self.nreps)

    def as_dict(self) -> dict:
        return {
            "alphas": self.alphas.tolist(),
            "counts": self.counts.tolist(),
            "rates": self.rates.tolist(),
            "ratios": self.ratios.tolist(),
            "mc_se": self.mc_se.tolist(),
            "nreps": self.nreps,
            "method": self.method,
            "n_failures": self.n_failures,
            "config": self.config,
        }

    def to_csv(self, path) -> None:
        rows = np.column_stack([self.alphas, self.rates, self.ratios, self.mc_se])
        np.savetxt(
            path,
            rows,
            delimiter=",",
            header="alpha,rate,ratio,mc_se",
            comments="",
            fmt="%.12g",
        )


def _config_echo(config: SimConfig, extra: dict | None = None) -> dict:
    out = {
        "nreps": config.nreps,
        "seed": config.seed,
        "model": config.model,
        "side": config.side,
        "n": config.n,
        "sigma_repaired": config.sigma_repaired,
    }
    if config.model == "mvt":
        out["df"] = config.df
    if extra:
        out.update(extra)
    return out


def _auto_moments(
    gdef: GFisherDef, config: SimConfig, method: str, moments, moments_nreps: int
) -> MomentSummary | None:
    if moments is not None or method not in methods._NEEDS_MOMENTS:
        return moments
    return empirical_moments(gdef, config, moments_nreps)


def empirical_tie(
    target,
    method: str,
    config: SimConfig,
    alphas: Sequence[float],
    *,
    moments: MomentSummary | None = None,
    moments_nreps: int = 100_000,
    kstar: int = dependence.DEFAULT_KSTAR,
    qf_acc: float = 1e-9,
    threads: int = 1,
    minp_tol: float | None = None,
) -> TIEReport:
    """Fraction of simulated replicates whose p-value falls below each level.

    ``target`` is a statistic definition (method = one of the approximation
    tags) or an omnibus panel (method = 'cc' or 'minp'). Streaming and
    deterministic for a fixed configuration.
    """
    alphas = np.asarray(sorted(alphas, reverse=True), dtype=float)
    if np.any((alphas <= 0) | (alphas >= 1)):
        raise ValueError("levels must lie in (0, 1)")
    if config.nreps < 10.0 / alphas.min():
        warnings.warn(
            f"nreps = {config.nreps:g} is small for alpha = {alphas.min():g}; "
            "expect noisy ratios",
            RuntimeWarning,
            stacklevel=2,
        )

    if isinstance(target, omnibus.OmnibusPanel):
        count_batch = _omnibus_counter(target, method, config, alphas, minp_tol)
        tag = f"omnibus_{method}"
    else:
        gdef: GFisherDef = target
        if gdef.side != config.side:
            raise ValueError("definition and simulation config disagree on sidedness")
        mom = _auto_moments(gdef, config, method, moments, moments_nreps)
        null = methods.fit_null(gdef, config.sigma, method, kstar=kstar, moments=mom, qf_acc=qf_acc)

        def count_batch(z: np.ndarray) -> tuple[np.ndarray, int]:
            t = _statistics_batch(gdef, z, config.side)
            p = np.asarray(null.survival(t))
            bad = int(np.count_nonzero(~np.isfinite(p)))
            p = p[np.isfinite(p)]
            return np.array([np.count_nonzero(p < a) for a in alphas]), bad

        tag = method

    jobs = config.batches()

    def run(job):
        b, size = job
        return count_batch(config.draw(b, size))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    counts = np.zeros(alphas.size, dtype=np.int64)
    failures = 0
    for c, bad in results:  # batch order: deterministic reduction
        counts += c
        failures += bad
    return TIEReport(
        alphas=alphas,
        counts=counts,
        nreps=config.nreps,
        method=tag,
        n_failures=failures,
        config=_config_echo(config, {"kstar": kstar}),
    )


def _omnibus_counter(panel, method: str, config: SimConfig, alphas: np.ndarray, minp_tol):
    if method not in ("cc", "minp"):
        raise ValueError("omnibus targets take method 'cc' or 'minp'")
    if panel.side != config.side:
        raise ValueError("panel and simulation config disagree on sidedness")

    def component_matrix(z: np.ndarray) -> np.ndarray:
        pv = _side_pvalues(z, config.side)
        cols = []
        for g, null in zip(panel.defs, panel.fitted):
            t = evaluate_many(g, pv)
            cols.append(np.asarray(null.survival(t)))
        return np.column_stack(cols)

    if method == "cc":

        def count_batch(z: np.ndarray) -> tuple[np.ndarray, int]:
            pj = np.clip(component_matrix(z), 1e-300, 1.0 - 1e-16)
            stat = np.mean(1.0 / np.tan(np.pi * pj), axis=1)
            p = 0.5 - np.arctan(stat) / np.pi
            return np.array([np.count_nonzero(p < a) for a in alphas]), 0

        return count_batch

    # minp: the omnibus p-value is monotone in the smallest component p-value,
    # so each level inverts once to a threshold on min_j P(j)
    tol = minp_tol if minp_tol is not None else None
    thresholds = np.array(
        [_invert_minp_level(panel, a, tol, config.seed) for a in alphas]
    )

    def count_batch(z: np.ndarray) -> tuple[np.ndarray, int]:
        minp = component_matrix(z).min(axis=1)
        return np.array([np.count_nonzero(minp < t) for t in thresholds]), 0

    return count_batch


def _invert_minp_level(panel, alpha: float, tol: float | None, seed: int) -> float:
    rect_tol = tol if tol is not None else float(np.clip(alpha / 50.0, 1e-7, 1e-4))

    def f(log_t: float) -> float:
        res = omnibus.minp_from_components(
            panel, np.full(panel.m, np.exp(log_t)), abs_tol=rect_tol, seed=seed
        )
        return res.pvalue - alpha

    lo, hi = np.log(alpha / panel.m) - 3.0, np.log(min(0.5, alpha))
    flo, fhi = f(lo), f(hi)
    for _ in range(60):
        if flo < 0:
            break
        lo -= 2.0
        flo = f(lo)
    if fhi < 0:
        return float(np.exp(hi))
    return float(np.exp(brentq(f, lo, hi, xtol=1e-12, rtol=1e-9)))


# ---------------------------------------------------------------------------
# Survival curves and inflation factors
# ---------------------------------------------------------------------------


@dataclass
class SurvivalTable:
    """Tail probabilities (-log10) of fitted methods along empirical quantiles."""

    quantiles: np.ndarray
    statistic_values: np.ndarray
    empirical_neglog10: np.ndarray
    method_neglog10: dict[str, np.ndarray]

    def to_csv(self, path) -> None:
        cols = [self.quantiles, self.statistic_values, self.empirical_neglog10]
        names = ["quantile", "statistic", "empirical"]
        for name, vals in self.method_neglog10.items():
            names.append(name)
            cols.append(vals)
        np.savetxt(
            path,
            np.column_stack(cols),
            delimiter=",",
            header=",".join(names),
            comments="",
            fmt="%.12g",
        )


def survival_compare(
    gdef: GFisherDef,
    method_names: Sequence[str],
    config: SimConfig,
    q_grid: Sequence[float] | None = None,
    *,
    moments: MomentSummary | None = None,
    moments_nreps: int = 100_000,
    kstar: int = dependence.DEFAULT_KSTAR,
) -> SurvivalTable:
    """Right-tail probabilities of each method at empirical null quantiles."""
    if q_grid is None:
        q_grid = 1.0 - np.logspace(np.log10(0.5), -4, 40)  # up to the 0.9999 quantile
    q_grid = np.asarray(q_grid, dtype=float)
    draws = np.empty(config.nreps)
    pos = 0
    for b, size in config.batches():
        draws[pos : pos + size] = _statistics_batch(gdef, config.draw(b, size), config.side)
        pos += size
    t_q = np.quantile(draws, q_grid)
    table: dict[str, np.ndarray] = {}
    for name in method_names:
        mom = _auto_moments(gdef, config, name, moments, moments_nreps)
        null = methods.fit_null(gdef, config.sigma, name, kstar=kstar, moments=mom)
        p = np.clip(np.asarray(null.survival(t_q)), 1e-300, 1.0)
        table[name] = -np.log10(p)
    return SurvivalTable(
        quantiles=q_grid,
        statistic_values=t_q,
        empirical_neglog10=-np.log10(np.clip(1.0 - q_grid, 1e-300, 1.0)),
        method_neglog10=table,
    )


def inflation_factor(pvalues, p_grid=(0.5, 0.1, 0.01)) -> np.ndarray:
    """Percentile-dependent inflation factor of a p-value collection.

    lambda(p) is the ratio of the chi2_1 upper quantile at the observed
    100p-th percentile of the p-values to the one at p itself; uniformly
    distributed p-values give lambda = 1 at every percentile.
    """
    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        raise ValueError("need at least one p-value")
    grid = np.asarray(p_grid, dtype=float)
    if np.any((grid <= 0) | (grid > 0.5)):
        raise ValueError("percentiles must lie in (0, 0.5]")
    observed = np.quantile(p, grid)
    observed = np.clip(observed, 1e-300, 1.0 - 1e-16)
    return chisq_inv_sf(observed, 1.0) / chisq_inv_sf(grid, 1.0)
