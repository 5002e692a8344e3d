"""Pseudo-likelihood fitting engines.

``fit_gglm`` maximizes the stacked (global pseudo-) likelihood by
iteratively reweighted least squares, ignoring the clustering; its
model-based standard errors are the ones known to be badly
underestimated for conditional-mean models. ``fit_gee`` solves the
cluster-aware estimating equations under a chosen working correlation
with moment re-estimation of rho between parameter updates, and returns
both the model-based and the sandwich covariance. QIC is available for
independence fits only, which is the regime where the criterion is
justified for conditional means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .core import (
    DimensionError,
    DomainError,
    PsiVector,
    RankError,
    WorkingCorrelation,
    materialize_correlation,
    rho_bounds,
)
from .design import StackedDesign

__all__ = [
    "GeeFit",
    "fit_gglm",
    "fit_gee",
    "sandwich_covariance",
    "qic",
    "quasi_loglik",
    "estimating_function_value",
    "estimating_function_terms",
    "wald_table",
]

DIVERGENCE_THRESHOLD = 30.0
_GROWTH_LIMIT = 5
_MU_CLAMP = 1e-12
_NU_RIDGE = 1e-10


@dataclass(frozen=True)
class GeeFit:
    """Result of a pseudo-likelihood fit.

    ``naive_cov`` is the model-based covariance (inverse bread matrix;
    for the pooled GLM, the inverse Fisher information). ``robust_cov``
    is the sandwich estimate, absent for the pooled GLM. ``qic`` is
    filled only for independence working correlation.
    """

    estimates: PsiVector
    naive_cov: np.ndarray
    robust_cov: np.ndarray | None
    rho_hat: float | None
    scale_hat: float
    qic: float | None
    iterations: int
    converged: bool
    diverged: bool
    corr: WorkingCorrelation
    method: str
    trace: list | None = field(default=None, repr=False)

    def se(self, robust: bool = True) -> np.ndarray:
        cov = self.robust_cov if (robust and self.robust_cov is not None) else self.naive_cov
        return np.sqrt(np.clip(np.diag(cov), 0.0, None))

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "working_correlation": self.corr.kind,
            "estimates": self.estimates.as_dict(),
            "naive_cov": self.naive_cov.tolist(),
            "robust_cov": None if self.robust_cov is None else self.robust_cov.tolist(),
            "rho_hat": self.rho_hat,
            "scale_hat": self.scale_hat,
            "qic": self.qic,
            "iterations": self.iterations,
            "converged": self.converged,
            "diverged": self.diverged,
        }
        if self.trace is not None:
            out["trace"] = [list(map(float, step)) for step in self.trace]
        return out


def _check_columns(design: StackedDesign) -> None:
    if design.n_rows == 0:
        raise DimensionError("empty design")
    flat = design.flat_z()
    dead = [name for i, name in enumerate(design.names) if not np.any(flat[:, i])]
    if dead:
        raise RankError(f"design columns are identically zero: {dead}")


def fit_gglm(
    design: StackedDesign,
    max_iter: int = 100,
    tol: float = 1e-8,
    keep_trace: bool = False,
) -> GeeFit:
    """Pooled logistic fit of the stacked design (global pseudo-likelihood
    treated as a GLM likelihood). Clustering is ignored; the returned
    covariance is the inverse Fisher information of the pooled model."""
    _check_columns(design)
    z = design.flat_z()
    y = design.flat_y()
    d = design.d
    psi = np.zeros(d)
    trace = [] if keep_trace else None
    converged = False
    diverged = False
    it = 0
    fisher = None
    for it in range(1, max_iter + 1):
        mu = expit(z @ psi)
        w = np.clip(mu * (1.0 - mu), _NU_RIDGE, None)
        fisher = z.T @ (w[:, None] * z)
        score = z.T @ (y - mu)
        try:
            step = np.linalg.solve(fisher, score)
        except np.linalg.LinAlgError as err:
            raise RankError("singular weighted cross-product in IRLS") from err
        psi = psi + step
        if trace is not None:
            trace.append(psi.copy())
        if np.abs(psi).max() > DIVERGENCE_THRESHOLD:
            diverged = True
            break
        if np.abs(step).max() < tol:
            converged = True
            break
    mu = expit(z @ psi)
    w = np.clip(mu * (1.0 - mu), _NU_RIDGE, None)
    fisher = z.T @ (w[:, None] * z)
    naive = np.linalg.inv(fisher)
    resid2 = (y - mu) ** 2 / w
    scale = float(resid2.sum() / max(design.n_rows - d, 1))
    return GeeFit(
        estimates=design.psi_vector(psi),
        naive_cov=0.5 * (naive + naive.T),
        robust_cov=None,
        rho_hat=None,
        scale_hat=scale,
        qic=None,
        iterations=it,
        converged=converged and not diverged,
        diverged=diverged,
        corr=WorkingCorrelation("independence"),
        method="gglm",
        trace=trace,
    )


def _standardized(design: StackedDesign, psi: np.ndarray):
    """Per-cluster standardized quantities at psi.

    Returns (mu, nu, rs, zs) with rs the Pearson residuals and zs the
    rows of Z scaled by sqrt(nu).
    """
    eta = design.Z @ psi
    mu = expit(eta)
    nu = np.clip(mu * (1.0 - mu), _NU_RIDGE, None)
    root = np.sqrt(nu)
    rs = (design.y - mu) / root
    zs = design.Z * root[:, :, None]
    return mu, nu, rs, zs


def _moment_rho(kind: str, rs: np.ndarray, d: int) -> tuple[float | None, float]:
    """Moment estimates of the scale and of rho from standardized
    residuals, clamped to 99% of the validity bound."""
    n, m = rs.shape
    total = rs.size
    scale = float((rs ** 2).sum() / max(total - d, 1))
    if kind == "independence" or m == 1:
        return None, scale
    if kind == "exchangeable":
        rowsum = rs.sum(axis=1)
        num = float(((rowsum ** 2).sum() - (rs ** 2).sum()) / 2.0)
        den = scale * max(n * m * (m - 1) / 2.0 - d, 1.0)
    elif kind == "ar1":
        num = float((rs[:, :-1] * rs[:, 1:]).sum())
        den = scale * max(n * (m - 1) - d, 1.0)
    else:
        raise DomainError(f"unknown working correlation kind {kind!r}")
    rho = num / den
    lo, hi = rho_bounds(kind, m)
    return float(np.clip(rho, 0.99 * lo, 0.99 * hi)), scale


def _gee_system(zs: np.ndarray, rs: np.ndarray, r_inv: np.ndarray):
    """Bread matrix, estimating-function value, and per-cluster terms.

    B = sum_k Zs_k' R^-1 Zs_k, terms_k = Zs_k' R^-1 rs_k.
    """
    u = np.matmul(r_inv, zs)
    bread = np.tensordot(zs, u, axes=([0, 1], [0, 1]))
    terms = np.einsum("kmd,km->kd", u, rs)
    return bread, terms


def fit_gee(
    design: StackedDesign,
    corr: str | WorkingCorrelation = "independence",
    max_iter: int = 100,
    tol: float = 1e-8,
    keep_trace: bool = False,
) -> GeeFit:
    """Fisher scoring on the cluster-wise estimating equations.

    Scoring starts from the pooled-GLM solution (the usual GEE warm
    start; the fixed point of the joint (psi, rho) iteration depends on
    it for dependent working correlations). Between parameter updates
    rho is re-estimated from standardized Pearson residuals by the
    usual moment formulas and clamped inside its validity bound.
    Divergence (a parameter escaping past the threshold, or steps
    growing for several consecutive iterations) is a recorded outcome,
    not an exception.
    """
    kind = corr.kind if isinstance(corr, WorkingCorrelation) else str(corr)
    if kind not in ("independence", "exchangeable", "ar1"):
        raise DomainError(f"unknown working correlation kind {kind!r}")
    _check_columns(design)
    m = design.m
    d = design.d
    warm = fit_gglm(design, max_iter=max_iter, tol=tol)
    psi = warm.estimates.values.copy() if not warm.diverged else np.zeros(d)
    trace = [] if keep_trace else None
    converged = False
    diverged = False
    rho = None
    scale = 1.0
    it = 0
    prev_step = np.inf
    growth = 0
    for it in range(1, max_iter + 1):
        _, _, rs, zs = _standardized(design, psi)
        rho, scale = _moment_rho(kind, rs, d)
        r_mat = materialize_correlation(WorkingCorrelation(kind, rho), m)
        r_inv = np.linalg.inv(r_mat)
        bread, terms = _gee_system(zs, rs, r_inv)
        try:
            step = np.linalg.solve(bread, terms.sum(axis=0))
        except np.linalg.LinAlgError:
            # ridge fallback for a numerically singular system
            bread_r = bread + 1e-8 * np.eye(d)
            try:
                step = np.linalg.solve(bread_r, terms.sum(axis=0))
            except np.linalg.LinAlgError as err:
                raise RankError("singular bread matrix in GEE scoring") from err
        psi = psi + step
        if trace is not None:
            trace.append(psi.copy())
        step_norm = float(np.abs(step).max())
        if np.abs(psi).max() > DIVERGENCE_THRESHOLD:
            diverged = True
            break
        growth = growth + 1 if step_norm > prev_step else 0
        if growth >= _GROWTH_LIMIT:
            diverged = True
            break
        prev_step = step_norm
        if step_norm < tol:
            converged = True
            break

    naive, robust, bread, meat = _sandwich(design, psi, kind, rho)
    converged = converged and not diverged
    qic_value = None
    if kind == "independence" and not diverged:
        qic_value = _qic_value(design, psi, robust)
    return GeeFit(
        estimates=design.psi_vector(psi),
        naive_cov=naive,
        robust_cov=robust,
        rho_hat=rho,
        scale_hat=scale,
        qic=qic_value,
        iterations=it,
        converged=converged,
        diverged=diverged,
        corr=WorkingCorrelation(kind, rho),
        method="gee",
        trace=trace,
    )


def _sandwich(design: StackedDesign, psi: np.ndarray, kind: str, rho: float | None):
    r_mat = materialize_correlation(WorkingCorrelation(kind, rho), design.m)
    r_inv = np.linalg.inv(r_mat)
    _, _, rs, zs = _standardized(design, psi)
    bread, terms = _gee_system(zs, rs, r_inv)
    try:
        naive = np.linalg.inv(bread)
    except np.linalg.LinAlgError as err:
        raise RankError("singular bread matrix in sandwich computation") from err
    meat = terms.T @ terms
    robust = naive @ meat @ naive
    return 0.5 * (naive + naive.T), 0.5 * (robust + robust.T), bread, meat


def sandwich_covariance(
    design: StackedDesign,
    psi,
    corr: str | WorkingCorrelation = "independence",
    rho: float | None = None,
):
    """(naive, robust) covariance pair at the given parameter value.

    naive = B^-1 and robust = B^-1 M B^-1 with B the bread and M the
    outer product of per-cluster estimating-function terms; the robust
    matrix is symmetrized after inversion.
    """
    psi = np.asarray(psi, dtype=float).ravel()
    if not np.isfinite(psi).all():
        raise DomainError("psi must be finite")
    kind = corr.kind if isinstance(corr, WorkingCorrelation) else str(corr)
    if isinstance(corr, WorkingCorrelation) and rho is None:
        rho = corr.rho
    naive, robust, _, _ = _sandwich(design, psi, kind, rho)
    return naive, robust


def quasi_loglik(design: StackedDesign, psi) -> float:
    """Binary log quasi-likelihood sum y log mu + (1-y) log(1-mu) at psi,
    with fitted means clamped away from 0 and 1."""
    mu = expit(design.Z @ np.asarray(psi, dtype=float))
    mu = np.clip(mu, _MU_CLAMP, 1.0 - _MU_CLAMP)
    y = design.y
    return float((y * np.log(mu) + (1.0 - y) * np.log1p(-mu)).sum())


def _qic_value(design: StackedDesign, psi: np.ndarray, robust: np.ndarray) -> float:
    # Omega is the independence bread matrix divided by the Pearson scale
    # (mean squared standardized residual), matching the convention of the
    # standard GEE software this mirrors.
    r_inv = np.eye(design.m)
    _, _, rs, zs = _standardized(design, psi)
    bread, _ = _gee_system(zs, rs, r_inv)
    phi = float((rs ** 2).sum() / design.n_rows)
    q = quasi_loglik(design, psi)
    return float(-2.0 * q + 2.0 * np.trace(bread @ robust) / phi)


def qic(fit: GeeFit, design: StackedDesign) -> float:
    """Quasi-likelihood information criterion -2Q + 2 trace(Omega J).

    Only valid (and only computed) for fits under the independence
    working correlation; Omega is the independence bread matrix and J
    the sandwich covariance.
    """
    if fit.corr.kind != "independence":
        raise DomainError(
            "QIC is defined under the independence working correlation only; "
            f"got {fit.corr.kind!r}"
        )
    if fit.robust_cov is None:
        raise DomainError("QIC needs a sandwich covariance; fit with fit_gee")
    psi = fit.estimates.values
    return _qic_value(design, psi, fit.robust_cov)


def estimating_function_terms(
    design: StackedDesign,
    psi,
    corr: WorkingCorrelation,
) -> np.ndarray:
    """Per-cluster contributions phi_k(psi; R_rho), shape (n, d).

    The working correlation here is taken as fixed (rho is not
    re-estimated); summing the rows gives the raw estimating-function
    value used in the consistency diagnostics.
    """
    psi = np.asarray(psi, dtype=float).ravel()
    if psi.size != design.d:
        raise DimensionError(f"psi has {psi.size} entries, design has d={design.d}")
    r_mat = materialize_correlation(corr, design.m)
    r_inv = np.linalg.inv(r_mat)
    _, _, rs, zs = _standardized(design, psi)
    _, terms = _gee_system(zs, rs, r_inv)
    return terms


def estimating_function_value(
    design: StackedDesign,
    psi,
    corr: WorkingCorrelation,
) -> np.ndarray:
    """Raw estimating-function vector phi(psi; R_rho) without solving."""
    return estimating_function_terms(design, psi, corr).sum(axis=0)


def wald_table(fit: GeeFit, alpha: float = 0.05):
    """Per-parameter (estimate, se, z, p, reject) rows for H0: psi_j = 0.

    Robust standard errors are used when the fit carries them (GEE);
    the pooled GLM falls back to its model-based errors.
    """
    se = fit.se(robust=True)
    est = fit.estimates.values
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, est / se, np.inf * np.sign(est))
    p = 2.0 * norm.sf(np.abs(z))
    crit = norm.ppf(1.0 - alpha / 2.0)
    rows = []
    for i, name in enumerate(fit.estimates.names):
        rows.append(
            {
                "parameter": name,
                "estimate": float(est[i]),
                "se": float(se[i]),
                "z": float(z[i]),
                "p": float(p[i]),
                "reject": bool(abs(z[i]) > crit),
            }
        )
    return rows
