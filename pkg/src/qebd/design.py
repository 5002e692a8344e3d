"""Stacked per-node logistic designs.

Every model family here reduces to the same substrate: one row per
(cluster k, node j) with response y_kj and a predictor vector whose
linear combination with the parameters gives the conditional logit.
The pooled-GLM and GEE engines both consume this design, which is what
makes their point estimates coincide under the independence working
correlation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .core import (
    BinaryPanel,
    DimensionError,
    PsiVector,
    pair_indices,
    pair_names,
    validate_kernels,
)

__all__ = [
    "StackedDesign",
    "expand_qebd",
    "expand_qelr_ci",
    "expand_qelr_linear",
    "expand_markov",
]


@dataclass(frozen=True)
class StackedDesign:
    """n x m stacked rows with predictor tensor Z of shape (n, m, d).

    Column ``names`` map one-to-one onto parameter positions; the first
    ``n_main`` columns are main effects, the rest interaction effects.
    Rows are ordered j = 1..m within each cluster.
    """

    y: np.ndarray  # (n, m) float
    Z: np.ndarray  # (n, m, d) float
    names: tuple[str, ...]
    n_main: int
    family: str

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        Z = np.asarray(self.Z, dtype=float)
        if y.ndim != 2 or Z.ndim != 3 or Z.shape[:2] != y.shape:
            raise DimensionError(
                f"inconsistent design shapes y={y.shape}, Z={Z.shape}"
            )
        if Z.shape[2] != len(self.names):
            raise DimensionError(
                f"{Z.shape[2]} predictor columns but {len(self.names)} names"
            )
        if len(set(self.names)) != len(self.names):
            raise DimensionError("design column names must be unique")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.y.shape[1]

    @property
    def d(self) -> int:
        return self.Z.shape[2]

    @property
    def n_rows(self) -> int:
        return self.n * self.m

    def flat_y(self) -> np.ndarray:
        return self.y.reshape(-1)

    def flat_z(self) -> np.ndarray:
        return self.Z.reshape(self.n_rows, self.d)

    def psi_vector(self, values) -> PsiVector:
        return PsiVector(values=values, names=self.names, n_main=self.n_main)

    def linear_predictor(self, psi) -> np.ndarray:
        psi = np.asarray(psi, dtype=float).ravel()
        if psi.size != self.d:
            raise DimensionError(f"psi has {psi.size} entries, design has d={self.d}")
        return self.Z @ psi

    def subset(self, keep) -> "StackedDesign":
        """Design restricted to the named columns (original order kept)."""
        keep = set(keep)
        unknown = keep - set(self.names)
        if unknown:
            raise DimensionError(f"unknown design columns: {sorted(unknown)}")
        idx = [i for i, name in enumerate(self.names) if name in keep]
        names = tuple(self.names[i] for i in idx)
        n_main = sum(1 for i in idx if i < self.n_main)
        return StackedDesign(
            y=self.y,
            Z=self.Z[:, :, idx],
            names=names,
            n_main=n_main,
            family=self.family,
        )

    def to_frame(self) -> pd.DataFrame:
        """Long-format view: cluster, node, y, one column per predictor."""
        n, m, d = self.n, self.m, self.d
        data = {
            "cluster": np.repeat(np.arange(1, n + 1), m),
            "node": np.tile(np.arange(1, m + 1), n),
            "y": self.flat_y(),
        }
        flat = self.flat_z()
        for i, name in enumerate(self.names):
            data[f"z_{name}"] = flat[:, i]
        return pd.DataFrame(data)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def _main_block(panel: BinaryPanel, X, x_names):
    """Resolve the main-effect predictor block to (n, m, p) plus names.

    X of None means node one-hot indicators; (m, p) is broadcast across
    clusters; (n, m, p) is used as given.
    """
    n, m = panel.n, panel.m
    if X is None:
        block = np.broadcast_to(np.eye(m), (n, m, m)).copy()
        names = [f"beta_{j + 1}" for j in range(m)]
        return block, names
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        if X.shape[0] != m:
            raise DimensionError(
                f"shared covariates must have {m} rows (one per node), got {X.shape}"
            )
        block = np.broadcast_to(X, (n,) + X.shape).copy()
    elif X.ndim == 3:
        if X.shape[:2] != (n, m):
            raise DimensionError(
                f"per-cluster covariates must have shape ({n}, {m}, p), got {X.shape}"
            )
        block = X.copy()
    else:
        raise DimensionError(f"covariates must be 2-d or 3-d, got ndim={X.ndim}")
    p = block.shape[2]
    names = list(x_names) if x_names is not None else [f"x_{i + 1}" for i in range(p)]
    if len(names) != p:
        raise DimensionError(f"{len(names)} covariate names for {p} columns")
    return block, names


def expand_qebd(panel: BinaryPanel, labels=None) -> StackedDesign:
    """Node-wise logistic design of the quadratic exponential distribution.

    Row (k, j) has the one-hot main-effect indicator e_j and, in the
    theta_{ab} column, y_kb if j = a, y_ka if j = b, and 0 otherwise.
    """
    n, m = panel.n, panel.m
    if m < 2:
        raise DimensionError("the quadratic exponential design needs m >= 2")
    yf = panel.as_float()
    rows, cols = pair_indices(m)
    npair = rows.size
    Z = np.zeros((n, m, m + npair))
    Z[:, np.arange(m), np.arange(m)] = 1.0
    for p, (a, b) in enumerate(zip(rows, cols)):
        Z[:, a, m + p] = yf[:, b]
        Z[:, b, m + p] = yf[:, a]
    if labels is not None:
        if len(labels) != m:
            raise DimensionError(f"expected {m} node labels, got {len(labels)}")
        names = list(labels) + pair_names(m, tuple(labels))
    else:
        names = [f"beta_{j + 1}" for j in range(m)] + pair_names(m)
    return StackedDesign(y=yf, Z=Z, names=tuple(names), n_main=m, family="qebd")


def expand_qelr_ci(
    panel: BinaryPanel, X=None, x_names=None, labels=None
) -> StackedDesign:
    """Common-interaction design: one shared coefficient on the count of
    the other positive responses, sum_s y_ks - y_kj."""
    yf = panel.as_float()
    main, names = _main_block(panel, X, x_names)
    if X is None and labels is not None:
        if len(labels) != panel.m:
            raise DimensionError(f"expected {panel.m} node labels, got {len(labels)}")
        names = list(labels)
    other_count = yf.sum(axis=1, keepdims=True) - yf
    Z = np.concatenate([main, other_count[:, :, None]], axis=2)
    return StackedDesign(
        y=yf,
        Z=Z,
        names=tuple(names) + ("gamma",),
        n_main=len(names),
        family="qelr-ci",
    )


def expand_qelr_linear(
    panel: BinaryPanel, X, kernels, x_names=None, kernel_names=None
) -> StackedDesign:
    """Design with L kernel-weighted interaction columns.

    Kernels must be symmetric and nonnegative (asymmetry is a hard
    failure: the conditionals would not define a joint distribution).
    Column l of row (k, j) is sum_{i != j} w^l_{ij} y_ki.
    """
    yf = panel.as_float()
    m = panel.m
    kernels = validate_kernels(kernels, m)
    L = kernels.shape[0]
    main, names = _main_block(panel, X, x_names)
    inter = np.empty((panel.n, m, L))
    for l in range(L):
        w = kernels[l].copy()
        np.fill_diagonal(w, 0.0)
        inter[:, :, l] = yf @ w
    if kernel_names is None:
        kernel_names = [f"gamma_{l + 1}" for l in range(L)]
    elif len(kernel_names) != L:
        raise DimensionError(f"{len(kernel_names)} kernel names for {L} kernels")
    return StackedDesign(
        y=yf,
        Z=np.concatenate([main, inter], axis=2),
        names=tuple(names) + tuple(kernel_names),
        n_main=len(names),
        family="qelr-linear",
    )


def expand_markov(
    panel: BinaryPanel, X=None, order: int = 1, x_names=None
) -> StackedDesign:
    """Transition-model design: lagged responses as interaction columns.

    Lag s of row (k, t) is y_{k,t-s}, zero-filled for t - s <= 0 (the
    pre-sample responses count as zero), so the first rows are plain
    logistic rows.
    """
    if order < 1:
        raise DimensionError("markov order must be >= 1")
    yf = panel.as_float()
    n, m = panel.n, panel.m
    main, names = _main_block(panel, X, x_names)
    lags = np.zeros((n, m, order))
    for s in range(1, order + 1):
        lags[:, s:, s - 1] = yf[:, :-s]
    lag_names = tuple(f"gamma_{s}" for s in range(1, order + 1))
    return StackedDesign(
        y=yf,
        Z=np.concatenate([main, lags], axis=2),
        names=tuple(names) + lag_names,
        n_main=len(names),
        family="markov",
    )
