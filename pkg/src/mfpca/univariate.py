"""Univariate functional PCA: covariance estimation on a grid, weighted
eigendecomposition, score computation, and variance-explained truncation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .fdata import UnivariateFunctionalSample
from .numerics import (
    QuadratureWeights,
    SampledGrid,
    _readonly,
    canonical_sign,
    sym_eig,
    trapezoid_weights,
)

__all__ = [
    "CovarianceSurface",
    "UnivariateEigenSystem",
    "estimate_covariance",
    "eigendecompose_covariance",
    "uni_scores",
    "select_M_by_pve",
    "UnivariateFPCA",
]


@dataclass(frozen=True)
class CovarianceSurface:
    """Empirical covariance values C(s, t) on a feature's grid."""

    grid: SampledGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.values, dtype=float)
        s = self.grid.size
        if c.shape != (s, s):
            raise ValueError(f"covariance must be {s}x{s} to match the grid")
        if not np.all(np.isfinite(c)):
            raise ValueError("covariance values must be finite")
        scale = float(np.abs(c).max())
        if scale > 0 and float(np.abs(c - c.T).max()) > 1e-10 * max(1.0, scale):
            raise ValueError("covariance surface is not symmetric within tolerance")
        object.__setattr__(self, "values", _readonly(c))


@dataclass(frozen=True)
class UnivariateEigenSystem:
    """Leading eigenpairs of one feature's covariance operator.

    `eigenfunctions` holds one function per row, orthonormal under the
    stored quadrature weights; `eigenvalues` are the matching variances in
    descending order.
    """

    feature_id: int
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    grid: SampledGrid
    weights: QuadratureWeights

    def __post_init__(self) -> None:
        vals = np.asarray(self.eigenvalues, dtype=float)
        funcs = np.asarray(self.eigenfunctions, dtype=float)
        if vals.ndim != 1 or funcs.ndim != 2:
            raise ValueError("expected 1-D eigenvalues and 2-D eigenfunctions")
        if funcs.shape != (vals.size, self.grid.size):
            raise ValueError("eigenfunction rows must align with eigenvalues and grid")
        if np.any(vals < 0):
            raise ValueError("eigenvalues must be nonnegative")
        if np.any(np.diff(vals) > 0):
            raise ValueError("eigenvalues must be sorted in descending order")
        object.__setattr__(self, "eigenvalues", _readonly(vals))
        object.__setattr__(self, "eigenfunctions", _readonly(funcs))

    @property
    def n_components(self) -> int:
        return int(self.eigenvalues.size)

    def truncated(self, n_components: int) -> "UnivariateEigenSystem":
        """Retain the first `n_components` eigenpairs."""
        if not 1 <= n_components <= self.n_components:
            raise ValueError(
                f"cannot truncate to {n_components} of {self.n_components} components"
            )
        return UnivariateEigenSystem(
            feature_id=self.feature_id,
            eigenvalues=self.eigenvalues[:n_components],
            eigenfunctions=self.eigenfunctions[:n_components],
            grid=self.grid,
            weights=self.weights,
        )


def estimate_covariance(centered: UnivariateFunctionalSample) -> CovarianceSurface:
    """Empirical covariance of a centered sample: ``X.T X / (N - 1)``."""
    if centered.n_obs < 2:
        raise ValueError("covariance estimation needs at least 2 observations")
    x = centered.values
    cov = x.T @ x / (centered.n_obs - 1)
    cov = (cov + cov.T) / 2.0
    return CovarianceSurface(grid=centered.grid, values=cov)


def eigendecompose_covariance(
    cov: CovarianceSurface,
    weights: QuadratureWeights,
    n_components: int,
    max_rank: Optional[int] = None,
    feature_id: int = 0,
) -> UnivariateEigenSystem:
    """Solve the weighted covariance eigenproblem and keep the top components.

    The integral eigenproblem is discretized through the symmetric form
    ``B = W^{1/2} C W^{1/2}``; eigenfunctions are ``W^{-1/2}`` times the
    eigenvectors' columns, which makes them exactly orthonormal under the
    quadrature inner product. Signs follow :func:`canonical_sign`.

    `max_rank` caps the admissible truncation (callers pass ``N - 1`` so the
    truncation stays within the sample rank).
    """
    size = cov.grid.size
    if weights.weights.size != size:
        raise ValueError("weights must align with the covariance grid")
    limit = size if max_rank is None else min(size, int(max_rank))
    if not 1 <= n_components <= limit:
        raise ValueError(
            f"truncation must satisfy 1 <= n_components <= {limit}, "
            f"got {n_components}"
        )
    sqrt_w = np.sqrt(weights.weights)
    b = sqrt_w[:, None] * cov.values * sqrt_w[None, :]
    result = sym_eig(b, psd_clip=True)
    vals = result.eigenvalues[:n_components]
    if np.any(vals < 0):
        raise ValueError("covariance surface is not positive semidefinite")
    funcs = (result.eigenvectors[:, :n_components] / sqrt_w[:, None]).T
    funcs = np.array([canonical_sign(f) for f in funcs])
    return UnivariateEigenSystem(
        feature_id=feature_id,
        eigenvalues=vals,
        eigenfunctions=funcs,
        grid=cov.grid,
        weights=weights,
    )


def uni_scores(
    centered: UnivariateFunctionalSample, eigensystem: UnivariateEigenSystem
) -> np.ndarray:
    """Scores of centered curves: quadrature inner products with each
    eigenfunction, one row per curve."""
    if not np.array_equal(centered.grid.points, eigensystem.grid.points):
        raise ValueError("sample and eigensystem grids do not match")
    projectors = (eigensystem.eigenfunctions * eigensystem.weights.weights).T
    return centered.values @ projectors


def select_M_by_pve(eigenvalues: Union[np.ndarray, Sequence[float]], alpha: float) -> int:
    """Smallest component count whose cumulative share of the given spectrum
    reaches `alpha` percent.

    The denominator is the sum over all supplied eigenvalues, so callers
    should pass the full computable spectrum.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ValueError("expected a nonempty 1-D eigenvalue vector")
    if np.any(lam < 0):
        raise ValueError("eigenvalues must be nonnegative")
    if not 0.0 < alpha <= 100.0:
        raise ValueError("alpha must lie in (0, 100]")
    partial = np.cumsum(lam)
    total = partial[-1]
    if total <= 0.0:
        raise ValueError("cannot select components from an all-zero spectrum")
    cumulative = 100.0 * partial / total
    return int(np.sum(cumulative < alpha) + 1)


class UnivariateFPCA(TransformerMixin, BaseEstimator):
    """Functional PCA of one feature observed on a dense common grid.

    Parameters
    ----------
    n_components : int, optional
        Number of components to retain. Mutually exclusive with `pve`.
        Defaults to the full computable spectrum ``min(N - 1, S)``.
    pve : float, optional
        Percentage of variance in (0, 100] to reach; the smallest component
        count achieving it is retained.
    grid : SampledGrid or array-like, optional
        Evaluation grid of the curves. Defaults to a uniform grid on [0, 1].

    Attributes
    ----------
    grid_ : SampledGrid
        Grid the model was fitted on.
    weights_ : QuadratureWeights
        Trapezoid weights used for all inner products.
    mean_ : ndarray of shape (n_points,)
        Pointwise training mean, subtracted before scoring.
    eigensystem_ : UnivariateEigenSystem
        Retained eigenpairs.
    eigenvalues_ : ndarray of shape (n_components_,)
        Retained eigenvalues, descending.
    eigenfunctions_ : ndarray of shape (n_components_, n_points)
        Retained eigenfunctions (rows).
    full_eigenvalues_ : ndarray
        The full computable spectrum, used for variance-share selection.
    n_components_ : int
        Number of retained components.
    """

    def __init__(
        self,
        n_components: Optional[int] = None,
        pve: Optional[float] = None,
        grid: Optional[Union[SampledGrid, np.ndarray]] = None,
    ) -> None:
        self.n_components = n_components
        self.pve = pve
        self.grid = grid

    def _resolve_grid(self, n_points: int) -> SampledGrid:
        if self.grid is None:
            return SampledGrid.uniform(n_points)
        grid = self.grid
        if not isinstance(grid, SampledGrid):
            grid = SampledGrid(np.asarray(grid, dtype=float))
        if grid.size != n_points:
            raise ValueError(
                f"grid has {grid.size} points but curves have {n_points}"
            )
        return grid

    def fit(self, X: np.ndarray, y: None = None) -> "UnivariateFPCA":
        """Fit mean, covariance, and eigenstructure from an (N, S) matrix."""
        if self.n_components is not None and self.pve is not None:
            raise ValueError("set either n_components or pve, not both")
        x = np.asarray(X, dtype=float)
        if x.ndim != 2:
            raise ValueError("X must be an (n_obs, n_points) matrix")
        if x.shape[0] < 2:
            raise ValueError("fitting needs at least 2 observations")
        grid = self._resolve_grid(x.shape[1])
        weights = trapezoid_weights(grid)
        mean = x.mean(axis=0)
        centered = UnivariateFunctionalSample(grid=grid, values=x - mean)
        cov = estimate_covariance(centered)
        rank_bound = min(x.shape[0] - 1, grid.size)
        full = eigendecompose_covariance(cov, weights, rank_bound, max_rank=rank_bound)
        if self.pve is not None:
            k = select_M_by_pve(full.eigenvalues, self.pve)
        elif self.n_components is None:
            k = rank_bound
        else:
            k = int(self.n_components)
            if not 1 <= k <= rank_bound:
                raise ValueError(
                    f"n_components must lie in [1, {rank_bound}] "
                    f"(min(N - 1, S)), got {k}"
                )
        self.grid_ = grid
        self.weights_ = weights
        self.mean_ = mean
        self.full_eigenvalues_ = full.eigenvalues
        self.eigensystem_ = full.truncated(k)
        self.eigenvalues_ = self.eigensystem_.eigenvalues
        self.eigenfunctions_ = self.eigensystem_.eigenfunctions
        self.n_components_ = k
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Scores of (new) curves against the fitted eigenfunctions."""
        check_is_fitted(self, "eigensystem_")
        x = np.asarray(X, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.grid_.size:
            raise ValueError(
                f"X must be (n_obs, {self.grid_.size}) to match the fitted grid"
            )
        centered = UnivariateFunctionalSample(grid=self.grid_, values=x - self.mean_)
        return uni_scores(centered, self.eigensystem_)

    def inverse_transform(self, scores: np.ndarray) -> np.ndarray:
        """Reconstruct curves from scores: mean plus the truncated expansion."""
        check_is_fitted(self, "eigensystem_")
        s = np.asarray(scores, dtype=float)
        if s.ndim != 2 or s.shape[1] != self.n_components_:
            raise ValueError(
                f"scores must be (n_obs, {self.n_components_})"
            )
        return s @ self.eigenfunctions_ + self.mean_
