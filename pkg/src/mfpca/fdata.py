"""Containers and inner products for univariate and multivariate
functional samples observed on dense common grids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .numerics import QuadratureWeights, SampledGrid, _readonly

__all__ = [
    "UnivariateFunctionalSample",
    "MultivariateFunctionalSample",
    "MeanFunction",
    "inner_product_uni",
    "inner_product_multi",
    "center",
]


@dataclass(frozen=True)
class UnivariateFunctionalSample:
    """N curves of one functional feature sampled on a shared grid.

    `values` has one curve per row; column s holds the curve values at
    ``grid.points[s]``.
    """

    grid: SampledGrid
    values: np.ndarray
    feature_id: int = 0

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("curve values must form an (n_obs, n_points) matrix")
        if vals.shape[1] != self.grid.size:
            raise ValueError(
                f"curves have {vals.shape[1]} points but the grid has {self.grid.size}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("curve values must be finite")
        if self.feature_id < 0:
            raise ValueError("feature_id must be nonnegative")
        object.__setattr__(self, "values", _readonly(vals))

    @property
    def n_obs(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_points(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True)
class MultivariateFunctionalSample:
    """A vector of p functional features with a common observation count.

    Feature j may live on its own grid; all cross-feature coupling happens
    through scores, never through the grids.
    """

    features: Tuple[UnivariateFunctionalSample, ...]

    def __post_init__(self) -> None:
        feats = tuple(self.features)
        if not feats:
            raise ValueError("a multivariate sample needs at least one feature")
        n_obs = feats[0].n_obs
        for j, feat in enumerate(feats):
            if feat.n_obs != n_obs:
                raise ValueError(
                    f"feature {j} has {feat.n_obs} observations, expected {n_obs}"
                )
            if feat.feature_id != j:
                raise ValueError(
                    f"feature_id values must run 0..p-1 in order; "
                    f"got {feat.feature_id} at position {j}"
                )
        object.__setattr__(self, "features", feats)

    @classmethod
    def from_arrays(
        cls,
        values: Sequence[np.ndarray],
        grids: Optional[Sequence[Union[SampledGrid, np.ndarray]]] = None,
    ) -> "MultivariateFunctionalSample":
        """Build a sample from per-feature (n_obs, n_points_j) matrices.

        Grids default to uniform grids on [0, 1] matching each matrix width.
        """
        mats = [np.asarray(v, dtype=float) for v in values]
        if grids is None:
            grids = [SampledGrid.uniform(m.shape[1] if m.ndim == 2 else 0) for m in mats]
        if len(grids) != len(mats):
            raise ValueError("need exactly one grid per feature")
        feats = []
        for j, (mat, grid) in enumerate(zip(mats, grids)):
            if not isinstance(grid, SampledGrid):
                grid = SampledGrid(np.asarray(grid, dtype=float))
            feats.append(UnivariateFunctionalSample(grid=grid, values=mat, feature_id=j))
        return cls(features=tuple(feats))

    @property
    def n_obs(self) -> int:
        return self.features[0].n_obs

    @property
    def n_features(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class MeanFunction:
    """Per-feature pointwise mean curves on the features' grids."""

    grids: Tuple[SampledGrid, ...]
    values: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.grids) != len(self.values):
            raise ValueError("need one mean vector per grid")
        frozen = []
        for grid, vec in zip(self.grids, self.values):
            v = np.asarray(vec, dtype=float)
            if v.shape != grid.points.shape:
                raise ValueError("mean vector length must match its grid")
            if not np.all(np.isfinite(v)):
                raise ValueError("mean values must be finite")
            frozen.append(_readonly(v))
        object.__setattr__(self, "values", tuple(frozen))


def inner_product_uni(f: np.ndarray, g: np.ndarray, weights: QuadratureWeights) -> float:
    """Quadrature approximation of the L2 inner product of two curves."""
    fv = np.asarray(f, dtype=float)
    gv = np.asarray(g, dtype=float)
    if fv.shape != gv.shape or fv.ndim != 1:
        raise ValueError("inner product needs two 1-D vectors of equal length")
    if fv.size != weights.weights.size:
        raise ValueError(
            f"vectors of length {fv.size} do not match the grid of length "
            f"{weights.weights.size}"
        )
    return float(np.dot(fv * weights.weights, gv))


def inner_product_multi(
    f_blocks: Sequence[np.ndarray],
    g_blocks: Sequence[np.ndarray],
    weights: Sequence[QuadratureWeights],
) -> float:
    """Inner product in the product space: sum of per-feature inner products."""
    if len(f_blocks) != len(g_blocks) or len(f_blocks) != len(weights):
        raise ValueError("block counts must match across both functions and weights")
    total = 0.0
    for f, g, w in zip(f_blocks, g_blocks, weights):
        total += inner_product_uni(f, g, w)
    return total


def center(
    sample: MultivariateFunctionalSample,
) -> Tuple[MeanFunction, MultivariateFunctionalSample]:
    """Subtract the pointwise sample mean from every feature.

    Returns the estimated mean and the centered sample. Centering is a
    prerequisite of the covariance estimators, which assume zero-mean data.
    """
    if sample.n_obs < 2:
        raise ValueError("centering needs at least 2 observations")
    means = []
    centered = []
    for feat in sample.features:
        mu = feat.values.mean(axis=0)
        means.append(mu)
        centered.append(
            UnivariateFunctionalSample(
                grid=feat.grid, values=feat.values - mu, feature_id=feat.feature_id
            )
        )
    grids = tuple(feat.grid for feat in sample.features)
    return (
        MeanFunction(grids=grids, values=tuple(means)),
        MultivariateFunctionalSample(features=tuple(centered)),
    )
