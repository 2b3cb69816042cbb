"""Input z-score panels from regression designs.

Builds the vector of per-covariate test statistics and its estimated
correlation matrix for three estimation schemes: joint least squares,
marginal least squares, and marginal score tests under a null GLM fit
(Gaussian or binomial-logit). The resulting panel feeds directly into the
combination-test machinery.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import expit

from .dependence import CorrMatrix

__all__ = [
    "DesignData",
    "ZPanel",
    "joint_ls",
    "load_design",
    "marginal_ls",
    "marginal_score",
]

Family = Literal["gaussian", "binomial"]


@dataclass
class DesignData:
    """Response, inquiry design, and control design (include the intercept in c)."""

    y: np.ndarray
    x: np.ndarray
    c: np.ndarray
    family: Family = "gaussian"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        n_obs = y.size
        if x.shape[0] != n_obs or c.shape[0] != n_obs:
            raise ValueError("x and c must have one row per observation")
        if n_obs <= x.shape[1] + c.shape[1]:
            raise ValueError("need more observations than total covariates")
        if self.family not in ("gaussian", "binomial"):
            raise ValueError("family must be 'gaussian' or 'binomial'")
        if self.family == "binomial" and not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("binomial responses must be 0/1")
        if np.linalg.matrix_rank(c) < c.shape[1]:
            raise ValueError("control design must have full column rank")
        self.y, self.x, self.c = y, x, c

    @property
    def n_obs(self) -> int:
        return self.y.size

    @property
    def n_inquiry(self) -> int:
        return self.x.shape[1]


@dataclass
class ZPanel:
    """Per-covariate statistics with their estimated correlation matrix."""

    z: np.ndarray
    sigma_hat: CorrMatrix
    kind: Literal["joint_ls", "marginal_ls", "marginal_score"]

    def __post_init__(self):
        if np.any(~np.isfinite(self.z)):
            raise ValueError("statistics must be finite")


def _residualize(q: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """(I - H) mat with H the projector onto the column span of q (orthonormal)."""
    return mat - q @ (q.T @ mat)


def _control_basis(c: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(c)
    return q


def _check_identifiable(g: np.ndarray, x: np.ndarray) -> None:
    # residual variance ~ 0 relative to the raw column scale means the
    # column is (numerically) in the span of the controls
    bad = np.flatnonzero(np.diag(g) <= 1e-10 * np.sum(x * x, axis=0))
    if bad.size:
        raise ValueError(f"inquiry columns {bad.tolist()} lie in the span of the controls")


def _corr_from_cov(g: np.ndarray) -> CorrMatrix:
    d = np.diag(g)
    bad = np.flatnonzero(d <= 0)
    if bad.size:
        raise ValueError(f"inquiry columns {bad.tolist()} lie in the span of the controls")
    scale = 1.0 / np.sqrt(d)
    r = g * np.outer(scale, scale)
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 1.0)
    np.clip(r, -1.0, 1.0, out=r)
    return CorrMatrix(r)


def marginal_ls(data: DesignData) -> ZPanel:
    """Marginal least-squares statistics of each inquiry covariate.

    z_i = x_i'(I - H)y / (sigma_hat sqrt(G_ii)) with G = X'(I - H)X and
    sigma_hat^2 the residual mean square of the control-only fit.
    """
    if data.family != "gaussian":
        raise ValueError("least-squares panels require the gaussian family")
    q = _control_basis(data.c)
    xr = _residualize(q, data.x)
    yr = _residualize(q, data.y[:, None]).ravel()
    g = xr.T @ xr
    _check_identifiable(g, data.x)
    sigma2 = float(yr @ yr) / (data.n_obs - q.shape[1])
    score = xr.T @ yr
    z = score / np.sqrt(np.diag(g)) / np.sqrt(sigma2)
    return ZPanel(z=z, sigma_hat=_corr_from_cov(g), kind="marginal_ls")


def joint_ls(data: DesignData) -> ZPanel:
    """Joint least-squares statistics: standardized coefficients of the full fit."""
    if data.family != "gaussian":
        raise ValueError("least-squares panels require the gaussian family")
    q = _control_basis(data.c)
    xr = _residualize(q, data.x)
    yr = _residualize(q, data.y[:, None]).ravel()
    g = xr.T @ xr
    _check_identifiable(g, data.x)
    try:
        g_inv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise ValueError("inquiry design is singular after adjusting for controls") from exc
    beta = g_inv @ (xr.T @ yr)
    rss = float(yr @ yr - beta @ (xr.T @ yr))
    dof = data.n_obs - q.shape[1] - data.n_inquiry
    sigma2 = rss / dof
    z = beta / np.sqrt(np.diag(g_inv)) / np.sqrt(sigma2)
    return ZPanel(z=z, sigma_hat=_corr_from_cov(g_inv), kind="joint_ls")


def _irls_logit(c: np.ndarray, y: np.ndarray, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Null-model logistic fit by iteratively reweighted least squares."""
    gamma = np.zeros(c.shape[1])
    ybar = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    # warm start for an intercept column if present
    ones = np.flatnonzero(np.all(c == 1.0, axis=0))
    if ones.size:
        gamma[ones[0]] = np.log(ybar / (1.0 - ybar))
    for _ in range(max_iter):
        eta = c @ gamma
        mu = expit(eta)
        w = mu * (1.0 - mu)
        if np.all(w < 1e-12):
            raise RuntimeError("null logistic fit degenerate (complete separation?)")
        cw = c * w[:, None]
        try:
            step = np.linalg.solve(c.T @ cw, c.T @ (y - mu))
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("null logistic fit failed: singular weighted design") from exc
        gamma = gamma + step
        if np.max(np.abs(step)) < tol:
            return gamma
    raise RuntimeError(f"null logistic fit did not converge in {max_iter} iterations")


def marginal_score(data: DesignData) -> ZPanel:
    """Marginal score statistics under the null model fit on the controls.

    z = Lam X'(y - mu0) with Lam = diag(1 / sqrt(G0_ii)),
    G0 = X~'(I - H~)X~ built from the W0^{1/2}-scaled designs, W0 the null
    conditional variance of the response. For the gaussian family this
    reduces exactly to the marginal least-squares panel.
    """
    if data.family == "gaussian":
        panel = marginal_ls(data)
        return ZPanel(z=panel.z, sigma_hat=panel.sigma_hat, kind="marginal_score")
    gamma0 = _irls_logit(data.c, data.y)
    mu0 = expit(data.c @ gamma0)
    w0 = mu0 * (1.0 - mu0)
    rw = np.sqrt(w0)
    x_t = data.x * rw[:, None]
    c_t = data.c * rw[:, None]
    q = _control_basis(c_t)
    xr = _residualize(q, x_t)
    g0 = xr.T @ xr
    _check_identifiable(g0, x_t)
    z = (data.x.T @ (data.y - mu0)) / np.sqrt(np.diag(g0))
    return ZPanel(z=z, sigma_hat=_corr_from_cov(g0), kind="marginal_score")


def load_design(csv_path, manifest_path) -> DesignData:
    """Read a design from a headered CSV plus a JSON sidecar manifest.

    The manifest selects columns by name:
    ``{"response": "y", "inquiry": ["x1", ...], "controls": ["c1", ...],
    "family": "gaussian", "intercept": true}``. With ``intercept`` true
    (the default) a column of ones is appended to the controls.
    """
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in ("response", "inquiry"):
        if key not in manifest:
            raise ValueError(f"design manifest is missing the {key!r} field")
    raw = np.genfromtxt(csv_path, delimiter=",", names=True, dtype=float)
    names = raw.dtype.names

    def col(name: str) -> np.ndarray:
        if name not in names:
            raise ValueError(f"column {name!r} not present in the design CSV")
        return np.asarray(raw[name], dtype=float)

    y = col(manifest["response"])
    x = np.column_stack([col(c) for c in manifest["inquiry"]])
    controls = [col(c) for c in manifest.get("controls", [])]
    if manifest.get("intercept", True):
        controls.append(np.ones(y.size))
    if not controls:
        raise ValueError("at least one control column or an intercept is required")
    c = np.column_stack(controls)
    return DesignData(y=y, x=x, c=c, family=manifest.get("family", "gaussian"))
