"""Covariances of transformed summands under correlated Gaussian inputs.

The covariance of two summands T_i, T_j expands as a series in the input
correlation: Cov(T_i, T_j) = sum_k sigma^k / k! * I_i(k) I_j(k), where I(k)
is a Hermite-coefficient integral of the inverse-chi-square transform. Only
n* x k* one-dimensional integrals are needed for an n x n covariance matrix,
where n* is the number of distinct degrees of freedom.

Also provides the block correlation-structure generators used by the
simulation harness, CSV round-tripping for correlation matrices, and a
nearest-correlation repair (alternating projections).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from math import lgamma

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import gammainccinv, ndtr, ndtri

from .kernels import GAUSS_CUTOFF, hermite, norm_phi
from .statistic import GFisherDef, Side, validate_side

__all__ = [
    "CorrMatrix",
    "cov_matrix",
    "cov_summands",
    "cross_cov",
    "gen_structure",
    "hermite_coeff",
    "nearest_correlation",
    "transform_product_moment",
    "truncation_diagnostic",
    "var_T",
]

DEFAULT_KSTAR = 8
QUAD_TOL = 1e-11

# ---------------------------------------------------------------------------
# Hermite-coefficient integrals
# ---------------------------------------------------------------------------


def _input_survival(z: np.ndarray, side: str) -> np.ndarray:
    # u(z) = 1 - F(z) with F the CDF of the (one- or two-sided) input p-value
    if side == "one":
        return ndtr(-z)
    return 2.0 * ndtr(-np.abs(z))


def _transformed(z: float, d: float, side: str) -> float:
    u = _input_survival(np.asarray(z, dtype=float), side)
    u = np.clip(u, 1e-300, 1.0)
    if d == 2.0:
        return float(-2.0 * np.log(u))
    if d == 1.0:
        return float(ndtri(np.clip(0.5 * u, 1e-300, 0.5)) ** 2)
    return float(2.0 * gammainccinv(d / 2.0, u))


def _quad_gauss(f, tol: float) -> float:
    # central panel split at the two-sided cusp, plus both tails
    segments = ((-np.inf, -GAUSS_CUTOFF, None), (-GAUSS_CUTOFF, GAUSS_CUTOFF, [0.0]), (GAUSS_CUTOFF, np.inf, None))
    value = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for lo, hi, pts in segments:
            v, _ = quad(f, lo, hi, points=pts, limit=300, epsabs=tol / 3.0, epsrel=0.0)
            value += v
    return value


@lru_cache(maxsize=None)
def _hermite_coeff_cached(d: float, k: int, side: str, tol: float) -> float:
    def integrand(z: float) -> float:
        return _transformed(z, d, side) * float(hermite(k, z)) * float(norm_phi(z))

    return _quad_gauss(integrand, tol)


def hermite_coeff(d: float, k: int, side: Side, tol: float = QUAD_TOL) -> float:
    """The k-th Hermite coefficient I(k) of the transform for one d.

    For two-sided inputs the transform is an even function of z, so odd-order
    coefficients vanish identically and are returned as exact zeros.
    """
    validate_side(side)
    if k < 1:
        raise ValueError("order k must be >= 1")
    d = float(d)
    if d <= 0:
        raise ValueError("degrees of freedom must be > 0")
    if side == "two" and k % 2 == 1:
        return 0.0
    return _hermite_coeff_cached(d, int(k), side, float(tol))


@lru_cache(maxsize=None)
def _product_moment_cached(d1: float, d2: float, side: str, tol: float) -> float:
    def integrand(z: float) -> float:
        return _transformed(z, d1, side) * _transformed(z, d2, side) * float(norm_phi(z))

    return _quad_gauss(integrand, tol)


def transform_product_moment(d1: float, d2: float, side: Side, tol: float = QUAD_TOL) -> float:
    """E[T_i T_j] for two transforms of the same standard normal input.

    This is the sigma = 1 limit of the covariance series (plus the product of
    means); computing it by direct quadrature avoids the slow tail of the
    series at full correlation.
    """
    validate_side(side)
    a, b = sorted((float(d1), float(d2)))
    return _product_moment_cached(a, b, side, float(tol))


def same_index_cov(d1: float, d2: float, side: Side, tol: float = QUAD_TOL) -> float:
    """Exact Cov(T_i, T_j) when both transforms share one input (sigma = 1)."""
    return transform_product_moment(d1, d2, side, tol) - float(d1) * float(d2)


# ---------------------------------------------------------------------------
# Covariance series
# ---------------------------------------------------------------------------


def _coeff_table(degrees: np.ndarray, side: Side, kstar: int, tol: float) -> dict[float, np.ndarray]:
    """I(k), k = 1..kstar, for each distinct d (the n* x k* economy)."""
    table: dict[float, np.ndarray] = {}
    for d in sorted(set(float(x) for x in degrees)):
        table[d] = np.array([hermite_coeff(d, k, side, tol) for k in range(1, kstar + 1)])
    return table


def cov_summands(
    d_i: float,
    d_j: float,
    sigma_ij: float,
    side: Side,
    kstar: int = DEFAULT_KSTAR,
    tol: float = QUAD_TOL,
) -> float:
    """Truncated covariance series sum_{k<=kstar} sigma^k / k! * I_i(k) I_j(k)."""
    if kstar < 1:
        raise ValueError("kstar must be >= 1")
    if not -1.0 <= sigma_ij <= 1.0:
        raise ValueError("correlation must lie in [-1, 1]")
    total = 0.0
    log_fact = 0.0
    for k in range(1, kstar + 1):
        log_fact += np.log(k)
        ii = hermite_coeff(d_i, k, side, tol)
        jj = hermite_coeff(d_j, k, side, tol)
        total += sigma_ij**k / np.exp(log_fact) * ii * jj
    return float(total)


def cov_matrix(
    gdef: GFisherDef,
    sigma,
    kstar: int = DEFAULT_KSTAR,
    tol: float = QUAD_TOL,
) -> np.ndarray:
    """Covariance matrix of the transformed summands T_1..T_n.

    Off-diagonal entries come from the truncated series; the diagonal is the
    exact marginal variance Var(chi2_d) = 2d (the series at sigma = 1
    converges slowly for two-sided inputs, and exactness on the diagonal is
    what makes the independence case exact downstream).
    """
    s = as_corr(sigma).values
    n = gdef.n
    if s.shape != (n, n):
        raise ValueError(f"correlation matrix must be {n}x{n}, got {s.shape}")
    table = _coeff_table(gdef.degrees, gdef.side, kstar, tol)
    cov = np.zeros((n, n))
    fact = 1.0
    for k in range(1, kstar + 1):
        fact *= k
        v_k = np.array([table[float(d)][k - 1] for d in gdef.degrees])
        cov += (s**k) * np.outer(v_k, v_k) / fact
    np.fill_diagonal(cov, 2.0 * gdef.degrees)
    return cov


def truncation_diagnostic(
    gdef: GFisherDef,
    sigma,
    kstar: int = DEFAULT_KSTAR,
    tol: float = QUAD_TOL,
) -> float:
    """Largest off-diagonal magnitude of the last retained series term."""
    s = as_corr(sigma).values
    table = _coeff_table(gdef.degrees, gdef.side, kstar, tol)
    v = np.array([table[float(d)][kstar - 1] for d in gdef.degrees])
    term = np.abs(s**kstar) * np.abs(np.outer(v, v)) / np.exp(lgamma(kstar + 1))
    np.fill_diagonal(term, 0.0)
    return float(term.max()) if term.size else 0.0


def var_T(gdef: GFisherDef, sigma, kstar: int = DEFAULT_KSTAR, tol: float = QUAD_TOL) -> float:
    """Null variance of the statistic: w' Cov(T) w."""
    c = cov_matrix(gdef, sigma, kstar, tol)
    return float(gdef.weights @ c @ gdef.weights)


def cross_cov(
    defs: list[GFisherDef],
    sigma,
    kstar: int = DEFAULT_KSTAR,
    tol: float = QUAD_TOL,
) -> np.ndarray:
    """m x m covariance matrix across statistics sharing one input panel.

    Same-index contributions (sigma_ii = 1) use the exact product-moment
    quadrature; cross-index contributions use the truncated series.
    """
    if not defs:
        raise ValueError("need at least one statistic definition")
    n = defs[0].n
    side = defs[0].side
    for g in defs:
        if g.n != n:
            raise ValueError("all definitions must share the input dimension n")
        if g.side != side:
            raise ValueError("mixed sidedness across definitions is not supported")
    s = as_corr(sigma).values
    if s.shape != (n, n):
        raise ValueError(f"correlation matrix must be {n}x{n}, got {s.shape}")
    m = len(defs)
    all_degrees = np.concatenate([g.degrees for g in defs])
    table = _coeff_table(all_degrees, side, kstar, tol)

    # series part with the diagonal of sigma zeroed (handled exactly below)
    s0 = s.copy()
    np.fill_diagonal(s0, 0.0)
    omega = np.zeros((m, m))
    fact = 1.0
    vs = np.empty((m, n))
    for k in range(1, kstar + 1):
        fact *= k
        for l, g in enumerate(defs):
            vs[l] = g.weights * np.array([table[float(d)][k - 1] for d in g.degrees])
        omega += vs @ (s0**k) @ vs.T / fact
    # exact same-index terms
    for l in range(m):
        for r in range(l, m):
            gl, gr = defs[l], defs[r]
            diag = sum(
                gl.weights[i]
                * gr.weights[i]
                * same_index_cov(gl.degrees[i], gr.degrees[i], side, tol)
                for i in range(n)
            )
            omega[l, r] += diag
            if r != l:
                omega[r, l] += diag
    return omega


# ---------------------------------------------------------------------------
# Correlation matrices
# ---------------------------------------------------------------------------

_CSV_FMT = "%.17g"  # round-trips float64 exactly


@dataclass
class CorrMatrix:
    """Symmetric matrix with unit diagonal and entries in [-1, 1].

    Positive semidefiniteness is checked lazily (``is_psd``); consumers that
    need a PSD matrix repair it via ``nearest_correlation``.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("correlation matrix must be square")
        if not np.allclose(v, v.T, atol=1e-12):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(v), 1.0, atol=1e-12):
            raise ValueError("correlation matrix must have unit diagonal")
        if np.any(np.abs(v) > 1.0 + 1e-12):
            raise ValueError("correlation entries must lie in [-1, 1]")
        v = 0.5 * (v + v.T)
        np.fill_diagonal(v, 1.0)
        np.clip(v, -1.0, 1.0, out=v)
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[0])

    def is_psd(self, tol: float = 1e-10) -> bool:
        return self.min_eigenvalue() >= -tol

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt=_CSV_FMT)

    @classmethod
    def from_csv(cls, path) -> "CorrMatrix":
        v = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(v)


def as_corr(sigma) -> CorrMatrix:
    if isinstance(sigma, CorrMatrix):
        return sigma
    return CorrMatrix(np.asarray(sigma, dtype=float))


# ---------------------------------------------------------------------------
# Structure generators
# ---------------------------------------------------------------------------

STRUCTURE_KINDS = ("equal", "poly", "invequal", "invpoly")
BLOCK_TYPES = ("I", "II", "III")
POLY_CAP = 0.99  # |i - j| = 1 gives a raw entry of 1.0; capped to keep the
# matrix nonsingular (still flagged non-PSD where applicable)


def _equal_block(m: int, rho: float) -> np.ndarray:
    if not 0.0 <= rho < 1.0:
        raise ValueError("equal-correlation parameter must satisfy 0 <= rho < 1")
    a = np.full((m, m), rho)
    np.fill_diagonal(a, 1.0)
    return a


def _poly_block(m: int, kappa: float) -> np.ndarray:
    if kappa <= 0:
        raise ValueError("polynomial-decay parameter must be > 0")
    idx = np.arange(m)
    dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
    with np.errstate(divide="ignore"):
        a = 1.0 / dist**kappa
    a = np.minimum(a, POLY_CAP)
    np.fill_diagonal(a, 1.0)
    return a


def _standardized_inverse(a: np.ndarray) -> np.ndarray:
    """D^{-1/2} A^{-1} D^{-1/2} with D = diag(A^{-1}).

    A is repaired to the nearest strictly positive definite correlation first
    when needed, so the inverse exists and has a positive diagonal.
    """
    if np.linalg.eigvalsh(a)[0] < 1e-10:
        a = nearest_correlation(a, eig_floor=1e-8)
    inv = np.linalg.inv(a)
    d = np.sqrt(np.diag(inv))
    out = inv / np.outer(d, d)
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    return out


def gen_structure(kind: str, block: str, n: int, param: float) -> CorrMatrix:
    """Assemble one of the 2 x 2 block correlation layouts.

    Block type I places the pattern in the upper-left (n/2) block, II in both
    diagonal blocks, III over the whole matrix; off-diagonal blocks are zero
    and remaining diagonal blocks are identity. The inv* variants invert the
    pattern block and standardize it back to unit diagonal.

    The result is not guaranteed positive semidefinite for the capped
    polynomial pattern; consumers repair when needed.
    """
    kind = kind.lower()
    if kind not in STRUCTURE_KINDS:
        raise ValueError(f"unknown structure kind {kind!r}; expected one of {STRUCTURE_KINDS}")
    if block not in BLOCK_TYPES:
        raise ValueError(f"unknown block type {block!r}; expected one of {BLOCK_TYPES}")
    if n < 2:
        raise ValueError("n must be >= 2")
    if block in ("I", "II") and n % 2 != 0:
        raise ValueError("block types I and II require even n")

    base = _equal_block if kind.endswith("equal") else _poly_block
    inverted = kind.startswith("inv")

    def pattern(m: int) -> np.ndarray:
        a = base(m, param)
        return _standardized_inverse(a) if inverted else a

    if block == "III":
        return CorrMatrix(pattern(n))
    half = n // 2
    out = np.eye(n)
    out[:half, :half] = pattern(half)
    if block == "II":
        out[half:, half:] = pattern(half)
    return CorrMatrix(out)


# ---------------------------------------------------------------------------
# Nearest correlation matrix (alternating projections)
# ---------------------------------------------------------------------------


def nearest_correlation(
    a,
    tol: float = 1e-10,
    max_iter: int = 500,
    eig_floor: float = 0.0,
) -> np.ndarray:
    """Nearest correlation matrix in Frobenius norm (Higham's projections).

    Alternates projection onto the PSD cone (eigenvalue clipping at
    ``eig_floor``) and onto the unit-diagonal affine set, with a Dykstra
    correction for the cone. Converges linearly; ``tol`` is the Frobenius
    distance between successive iterates.
    """
    y = np.asarray(a, dtype=float).copy()
    n = y.shape[0]
    if y.shape != (n, n):
        raise ValueError("matrix must be square")
    ds = np.zeros_like(y)
    prev = y.copy()
    for _ in range(max_iter):
        r = y - ds
        vals, vecs = np.linalg.eigh(0.5 * (r + r.T))
        x = (vecs * np.maximum(vals, eig_floor)) @ vecs.T
        ds = x - r
        y = 0.5 * (x + x.T)
        np.fill_diagonal(y, 1.0)
        np.clip(y, -1.0, 1.0, out=y)
        if np.linalg.norm(y - prev, "fro") <= tol * max(1.0, np.linalg.norm(y, "fro")):
            break
        prev = y.copy()
    # final symmetric PSD polish with the unit diagonal kept
    vals, vecs = np.linalg.eigh(0.5 * (y + y.T))
    x = (vecs * np.maximum(vals, eig_floor)) @ vecs.T
    d = np.sqrt(np.clip(np.diag(x), 1e-12, None))
    x = x / np.outer(d, d)
    x = 0.5 * (x + x.T)
    np.fill_diagonal(x, 1.0)
    np.clip(x, -1.0, 1.0, out=x)
    return x
