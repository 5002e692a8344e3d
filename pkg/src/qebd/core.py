"""Shared domain types for clustered binary response models.

Panels of correlated binary responses, parameter vectors for the
quadratic exponential family (main effects plus pairwise interaction
effects), the packing between the interaction vector and its symmetric
matrix form, working correlation structures, and the logit link.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as _expit

__all__ = [
    "QebdError",
    "DimensionError",
    "DomainError",
    "ResourceError",
    "RankError",
    "CompatibilityError",
    "BinaryPanel",
    "QebdParams",
    "PsiVector",
    "WorkingCorrelation",
    "LinkState",
    "ModelSpec",
    "expit",
    "logit",
    "variance_fn",
    "link_state",
    "theta_to_matrix",
    "matrix_to_theta",
    "pair_indices",
    "pair_names",
    "build_g_matrix",
    "materialize_correlation",
    "rho_bounds",
    "equality_kernel",
    "discrete_kernel",
]


class QebdError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(QebdError, ValueError):
    """Array shapes or lengths are inconsistent."""


class DomainError(QebdError, ValueError):
    """A value lies outside its mathematical domain."""


class ResourceError(QebdError, RuntimeError):
    """An exact computation was refused because it would not fit in memory/time."""


class RankError(QebdError, np.linalg.LinAlgError):
    """A matrix that must be invertible is (numerically) rank deficient."""


class CompatibilityError(QebdError, ValueError):
    """Interaction kernels violate the symmetry condition required for a
    unique joint distribution."""


# --------------------------------------------------------------------------- #
# Link functions
# --------------------------------------------------------------------------- #

def expit(x):
    """Inverse logit, 1 / (1 + exp(-x)). Overflow-safe for any real x."""
    return _expit(x)


def logit(p):
    """Log-odds of ``p``. Requires every entry of ``p`` in the open (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("logit requires probabilities strictly inside (0, 1)")
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


def variance_fn(mu):
    """Binary variance function mu * (1 - mu)."""
    mu = np.asarray(mu, dtype=float)
    out = mu * (1.0 - mu)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LinkState:
    """Conditional mean and variance-function value under the logit link."""

    mu: np.ndarray
    nu: np.ndarray


def link_state(eta) -> LinkState:
    """Evaluate the logit link at linear predictor ``eta``."""
    mu = _expit(np.asarray(eta, dtype=float))
    return LinkState(mu=mu, nu=mu * (1.0 - mu))


# --------------------------------------------------------------------------- #
# Interaction-vector packing
# --------------------------------------------------------------------------- #

def n_pairs(m: int) -> int:
    return m * (m - 1) // 2


def pair_indices(m: int) -> tuple[np.ndarray, np.ndarray]:
    """0-based (i, j) index pairs, i < j, in row-of-upper-triangle order
    ((1,2), (1,3), ..., (1,m), (2,3), ...)."""
    return np.triu_indices(m, k=1)


def pair_names(m: int, labels: tuple[str, ...] | None = None) -> list[str]:
    """Canonical interaction-parameter names for an m-node model.

    With node ``labels`` given, names are ``"A:B"``; otherwise
    ``"theta_i_j"`` with 1-based indices.
    """
    rows, cols = pair_indices(m)
    if labels is not None:
        if len(labels) != m:
            raise DimensionError(f"expected {m} labels, got {len(labels)}")
        return [f"{labels[i]}:{labels[j]}" for i, j in zip(rows, cols)]
    return [f"theta_{i + 1}_{j + 1}" for i, j in zip(rows, cols)]


def theta_to_matrix(theta, m: int) -> np.ndarray:
    """Unpack the interaction vector into the m x m symmetric matrix with
    zero diagonal.

    ``theta`` must have length m(m-1)/2 and be ordered
    (theta_12, theta_13, ..., theta_1m, theta_23, ...).
    """
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != n_pairs(m):
        raise DimensionError(
            f"theta has length {theta.size}, expected m(m-1)/2 = {n_pairs(m)} for m={m}"
        )
    big = np.zeros((m, m))
    rows, cols = pair_indices(m)
    big[rows, cols] = theta
    big[cols, rows] = theta
    return big


def matrix_to_theta(big) -> np.ndarray:
    """Pack a symmetric zero-diagonal interaction matrix into vector form.

    Inverse of :func:`theta_to_matrix`.
    """
    big = np.asarray(big, dtype=float)
    if big.ndim != 2 or big.shape[0] != big.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {big.shape}")
    if not np.allclose(big, big.T, rtol=0.0, atol=1e-12):
        raise DomainError("interaction matrix must be symmetric")
    if np.any(np.abs(np.diag(big)) > 1e-12):
        raise DomainError("interaction matrix must have zero diagonal")
    rows, cols = pair_indices(big.shape[0])
    return big[rows, cols].copy()


def build_g_matrix(m: int) -> np.ndarray:
    """Duplication-style matrix G mapping the packed interaction vector to
    the vectorized interaction matrix: G.T @ theta = vec(theta_to_matrix(theta)).

    Row (i, j) of G is e_i (x) e_j + e_j (x) e_i, so it carries exactly two
    ones. vec() is column-major, which for symmetric matrices coincides with
    row-major.
    """
    if m < 2:
        raise DimensionError("G is only defined for m >= 2")
    rows, cols = pair_indices(m)
    g = np.zeros((n_pairs(m), m * m))
    idx = np.arange(n_pairs(m))
    g[idx, rows * m + cols] = 1.0
    g[idx, cols * m + rows] = 1.0
    return g


# --------------------------------------------------------------------------- #
# Working correlations
# --------------------------------------------------------------------------- #

_CORR_KINDS = ("independence", "exchangeable", "ar1")


def rho_bounds(kind: str, m: int) -> tuple[float, float]:
    """Open interval of rho values for which the m x m working correlation
    of the given kind is positive definite."""
    if kind == "independence":
        return (0.0, 0.0)
    if m <= 1:
        # degenerate 1x1 correlation; any rho materializes to [[1.]]
        return (-1.0, 1.0)
    if kind == "exchangeable":
        return (-1.0 / (m - 1), 1.0)
    if kind == "ar1":
        return (-1.0, 1.0)
    raise DomainError(f"unknown working correlation kind {kind!r}")


@dataclass(frozen=True)
class WorkingCorrelation:
    """A working correlation structure: independence, exchangeable, or ar1,
    with its scalar parameter (absent for independence)."""

    kind: str
    rho: float | None = None

    def __post_init__(self):
        if self.kind not in _CORR_KINDS:
            raise DomainError(
                f"unknown working correlation kind {self.kind!r}; "
                f"expected one of {_CORR_KINDS}"
            )
        if self.kind == "independence" and self.rho is not None:
            raise DomainError("independence takes no rho parameter")


def materialize_correlation(spec: WorkingCorrelation, m: int) -> np.ndarray:
    """Build the m x m working correlation matrix.

    Raises :class:`DomainError` if rho lies outside the positive-definite
    bound for the structure (exchangeable: rho in (-1/(m-1), 1);
    ar1: |rho| < 1).
    """
    if m < 1:
        raise DimensionError("m must be >= 1")
    if spec.kind == "independence" or m == 1:
        return np.eye(m)
    rho = spec.rho
    if rho is None:
        raise DomainError(f"{spec.kind} requires a rho value")
    lo, hi = rho_bounds(spec.kind, m)
    if not (lo < rho < hi):
        raise DomainError(
            f"rho={rho} outside the validity bound ({lo:.6g}, {hi:.6g}) "
            f"for {spec.kind} with m={m}"
        )
    if spec.kind == "exchangeable":
        r = np.full((m, m), rho)
        np.fill_diagonal(r, 1.0)
        return r
    # ar1
    lags = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    return rho ** lags


# --------------------------------------------------------------------------- #
# Panels and parameter vectors
# --------------------------------------------------------------------------- #

def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class BinaryPanel:
    """n independent clusters of m binary responses each (balanced).

    ``y`` is the n x m response matrix with entries in {0, 1}.
    """

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 2:
            raise DimensionError(f"panel must be 2-d (clusters x responses), got ndim={y.ndim}")
        if y.shape[0] < 1 or y.shape[1] < 1:
            raise DimensionError(f"panel needs n >= 1 and m >= 1, got shape {y.shape}")
        if not np.isin(y, (0, 1)).all():
            raise DomainError("panel entries must all be exactly 0 or 1")
        object.__setattr__(self, "y", _freeze(np.ascontiguousarray(y, dtype=np.int8)))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.y.shape[1]

    def as_float(self) -> np.ndarray:
        return self.y.astype(float)


@dataclass(frozen=True)
class QebdParams:
    """Parameters of the quadratic exponential binary distribution:
    ``beta`` holds the m main effects, ``theta`` the m(m-1)/2 interaction
    effects in (1,2), (1,3), ..., (m-1,m) order.
    """

    beta: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        theta = np.asarray(self.theta, dtype=float).ravel()
        m = beta.size
        if m < 1:
            raise DimensionError("beta must have at least one entry")
        if theta.size != n_pairs(m):
            raise DimensionError(
                f"theta has length {theta.size}, expected {n_pairs(m)} for m={m}"
            )
        if not (np.isfinite(beta).all() and np.isfinite(theta).all()):
            raise DomainError("parameters must be finite")
        object.__setattr__(self, "beta", _freeze(beta))
        object.__setattr__(self, "theta", _freeze(theta))

    @property
    def m(self) -> int:
        return self.beta.size

    def theta_matrix(self) -> np.ndarray:
        return theta_to_matrix(self.theta, self.m)

    def psi(self) -> np.ndarray:
        return np.concatenate([self.beta, self.theta])

    def names(self) -> list[str]:
        return [f"beta_{j + 1}" for j in range(self.m)] + pair_names(self.m)

    @classmethod
    def from_psi(cls, psi, m: int) -> "QebdParams":
        psi = np.asarray(psi, dtype=float).ravel()
        if psi.size != m + n_pairs(m):
            raise DimensionError(
                f"psi has length {psi.size}, expected {m + n_pairs(m)} for m={m}"
            )
        return cls(beta=psi[:m], theta=psi[m:])

    @classmethod
    def zeros(cls, m: int) -> "QebdParams":
        return cls(beta=np.zeros(m), theta=np.zeros(n_pairs(m)))


@dataclass(frozen=True)
class PsiVector:
    """A named parameter vector split into a main-effect block (first
    ``n_main`` entries) and an interaction block (the rest)."""

    values: np.ndarray
    names: tuple[str, ...]
    n_main: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        names = tuple(self.names)
        if values.size != len(names):
            raise DimensionError(
                f"{values.size} values but {len(names)} names"
            )
        if len(set(names)) != len(names):
            raise DimensionError("parameter names must be unique")
        if not 0 <= self.n_main <= values.size:
            raise DimensionError("n_main out of range")
        if values.size < 1:
            raise DimensionError("need at least one parameter")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "names", names)

    @property
    def beta(self) -> np.ndarray:
        return self.values[: self.n_main]

    @property
    def gamma(self) -> np.ndarray:
        return self.values[self.n_main:]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.names, self.values)}


# --------------------------------------------------------------------------- #
# Interaction kernels and model descriptors
# --------------------------------------------------------------------------- #

def equality_kernel(u) -> np.ndarray:
    """Similarity kernel w_ij = 1 if u_i equals u_j else 0 (w_jj = 1).

    This is the convention used for all shipped simulation scenarios; a
    genuine metric is available as :func:`discrete_kernel`.
    """
    u = np.asarray(u)
    if u.ndim == 1:
        u = u[:, None]
    eq = np.all(u[:, None, :] == u[None, :, :], axis=2)
    return eq.astype(float)


def discrete_kernel(u) -> np.ndarray:
    """Discrete-metric kernel w_ij = 1 if u_i differs from u_j else 0."""
    return 1.0 - equality_kernel(u)


def validate_kernels(kernels: np.ndarray, m: int) -> np.ndarray:
    """Check a stack of interaction kernels (L, m, m): each must be
    symmetric and nonnegative, otherwise the conditionals do not define a
    unique joint distribution."""
    kernels = np.asarray(kernels, dtype=float)
    if kernels.ndim == 2:
        kernels = kernels[None]
    if kernels.ndim != 3 or kernels.shape[1:] != (m, m):
        raise DimensionError(
            f"kernels must have shape (L, {m}, {m}), got {kernels.shape}"
        )
    for idx, w in enumerate(kernels):
        if not np.allclose(w, w.T, rtol=0.0, atol=1e-12):
            raise CompatibilityError(
                f"kernel {idx} is asymmetric; no unique joint distribution exists"
            )
        if np.any(w < 0):
            raise CompatibilityError(f"kernel {idx} has negative entries")
    return kernels


_FAMILIES = ("qebd", "qelr-ci", "qelr-linear", "markov")


@dataclass(frozen=True)
class ModelSpec:
    """Descriptor of a conditional-mean model family and its observed
    constants.

    Parameters
    ----------
    family : str
        One of ``qebd``, ``qelr-ci``, ``qelr-linear``, ``markov``.
    X : ndarray, optional
        Main-effect covariates: (m, p) shared across clusters or
        (n, m, p) per cluster. ``None`` means node one-hot indicators.
    x_names : tuple of str, optional
        Column names for X.
    kernels : ndarray, optional
        (L, m, m) symmetric nonnegative interaction kernels
        (qelr-linear only).
    kernel_names : tuple of str, optional
        Names for the L interaction coefficients.
    markov_order : int
        Number of lagged responses entering the predictor (markov only).
    time_start : int
        Value of the time covariate at the first observation (markov only).
    """

    family: str
    X: np.ndarray | None = None
    x_names: tuple[str, ...] | None = None
    kernels: np.ndarray | None = None
    kernel_names: tuple[str, ...] | None = None
    markov_order: int = 1
    time_start: int = 1
    node_labels: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise DomainError(
                f"unknown family {self.family!r}; expected one of {_FAMILIES}"
            )
        if self.family == "qelr-linear" and self.kernels is None:
            raise DimensionError("qelr-linear requires interaction kernels")
        if self.family == "markov" and self.markov_order < 1:
            raise DomainError("markov order must be >= 1")
