"""The multivariate combination step: concatenated score matrices, the
small-covariance eigenproblem, multivariate eigenfunctions and scores, and
variance-explained reporting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .fdata import MultivariateFunctionalSample, UnivariateFunctionalSample, center
from .numerics import QuadratureWeights, SampledGrid, _readonly, sym_eig, trapezoid_weights
from .univariate import (
    UnivariateEigenSystem,
    eigendecompose_covariance,
    estimate_covariance,
    select_M_by_pve,
    uni_scores,
)

__all__ = [
    "TruncationSpec",
    "ScoreMatrix",
    "MultivariateEigenSystem",
    "VarianceReport",
    "assemble_scores",
    "score_covariance",
    "mfpca_combine",
    "multivariate_scores",
    "variance_report",
    "truncate_reliable",
    "MultivariateFPCA",
]


@dataclass(frozen=True)
class TruncationSpec:
    """Per-feature univariate truncation counts.

    `total` components can be combined from these, but only the first
    `reliable` (the minimum across features) carry enough univariate
    information to be trusted.
    """

    per_feature: Tuple[int, ...]

    def __post_init__(self) -> None:
        counts = tuple(int(m) for m in self.per_feature)
        if not counts or any(m < 1 for m in counts):
            raise ValueError("every per-feature truncation must be at least 1")
        object.__setattr__(self, "per_feature", counts)

    @property
    def total(self) -> int:
        return int(sum(self.per_feature))

    @property
    def reliable(self) -> int:
        return int(min(self.per_feature))


@dataclass(frozen=True)
class ScoreMatrix:
    """Horizontally concatenated univariate scores with block bookkeeping.

    Column k of `values` belongs to ``blocks[k] = (feature_id, index within
    that feature's truncation)``; features appear in order, components
    within a feature in eigenvalue order.
    """

    values: np.ndarray
    truncation: TruncationSpec

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("scores must form an (n_obs, total) matrix")
        if vals.shape[1] != self.truncation.total:
            raise ValueError(
                f"score matrix has {vals.shape[1]} columns but the truncation "
                f"totals {self.truncation.total}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "values", _readonly(vals))

    @property
    def n_obs(self) -> int:
        return int(self.values.shape[0])

    @property
    def blocks(self) -> Tuple[Tuple[int, int], ...]:
        layout = []
        for j, m_j in enumerate(self.truncation.per_feature):
            layout.extend((j, i) for i in range(m_j))
        return tuple(layout)

    def feature_slice(self, feature_id: int) -> slice:
        """Column slice of one feature's block."""
        starts = np.cumsum((0,) + self.truncation.per_feature)
        return slice(int(starts[feature_id]), int(starts[feature_id + 1]))


def assemble_scores(per_feature_scores: Sequence[np.ndarray]) -> ScoreMatrix:
    """Concatenate per-feature (N, M_j) score matrices in feature order."""
    mats = [np.asarray(s, dtype=float) for s in per_feature_scores]
    if not mats:
        raise ValueError("need scores for at least one feature")
    n_obs = mats[0].shape[0]
    for j, mat in enumerate(mats):
        if mat.ndim != 2:
            raise ValueError(f"feature {j} scores must be a 2-D matrix")
        if mat.shape[0] != n_obs:
            raise ValueError(
                f"feature {j} has {mat.shape[0]} rows, expected {n_obs}"
            )
    truncation = TruncationSpec(per_feature=tuple(m.shape[1] for m in mats))
    return ScoreMatrix(values=np.hstack(mats), truncation=truncation)


def score_covariance(scores: ScoreMatrix) -> np.ndarray:
    """Empirical covariance of the concatenated scores: ``Xi.T Xi / (N-1)``."""
    if scores.n_obs < 2:
        raise ValueError("score covariance needs at least 2 observations")
    xi = scores.values
    z = xi.T @ xi / (scores.n_obs - 1)
    return (z + z.T) / 2.0


@dataclass(frozen=True)
class MultivariateEigenSystem:
    """Multivariate eigenstructure assembled from univariate components.

    `coefficients[:, m]` is the unit vector expressing component m in the
    concatenated univariate score basis (same block layout as the score
    matrix); ``eigenfunctions[j][m]`` is component m's block on feature j's
    grid. Components beyond `reliable_count` are reported but should be
    treated as unreliable.
    """

    eigenvalues: np.ndarray
    coefficients: np.ndarray
    eigenfunctions: Tuple[np.ndarray, ...]
    grids: Tuple[SampledGrid, ...]
    weights: Tuple[QuadratureWeights, ...]
    truncation: TruncationSpec

    def __post_init__(self) -> None:
        vals = np.asarray(self.eigenvalues, dtype=float)
        coeff = np.asarray(self.coefficients, dtype=float)
        if vals.ndim != 1:
            raise ValueError("eigenvalues must form a 1-D vector")
        if np.any(np.diff(vals) > 0):
            raise ValueError("eigenvalues must be sorted in descending order")
        if coeff.shape != (self.truncation.total, vals.size):
            raise ValueError(
                "coefficient columns must pair with eigenvalues and rows with "
                "the truncation layout"
            )
        if len(self.eigenfunctions) != len(self.grids) or len(self.grids) != len(
            self.weights
        ):
            raise ValueError("need one eigenfunction block, grid, and weight set per feature")
        frozen = []
        for block, grid in zip(self.eigenfunctions, self.grids):
            b = np.asarray(block, dtype=float)
            if b.shape != (vals.size, grid.size):
                raise ValueError("eigenfunction blocks must be (n_components, n_points_j)")
            frozen.append(_readonly(b))
        object.__setattr__(self, "eigenvalues", _readonly(vals))
        object.__setattr__(self, "coefficients", _readonly(coeff))
        object.__setattr__(self, "eigenfunctions", tuple(frozen))

    @property
    def n_components(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def n_features(self) -> int:
        return len(self.eigenfunctions)

    @property
    def reliable_count(self) -> int:
        return min(self.truncation.reliable, self.n_components)

    def component(self, index: int) -> Tuple[np.ndarray, ...]:
        """Blocks of the `index`-th multivariate eigenfunction."""
        return tuple(block[index] for block in self.eigenfunctions)

    def truncated(self, n_components: int) -> "MultivariateEigenSystem":
        """Retain the first `n_components` components."""
        if not 1 <= n_components <= self.n_components:
            raise ValueError(
                f"cannot truncate to {n_components} of {self.n_components} components"
            )
        return MultivariateEigenSystem(
            eigenvalues=self.eigenvalues[:n_components],
            coefficients=self.coefficients[:, :n_components],
            eigenfunctions=tuple(b[:n_components] for b in self.eigenfunctions),
            grids=self.grids,
            weights=self.weights,
            truncation=self.truncation,
        )


def mfpca_combine(
    uni_systems: Sequence[UnivariateEigenSystem], scores: ScoreMatrix
) -> MultivariateEigenSystem:
    """Combine per-feature eigensystems and scores into the multivariate
    eigenstructure.

    Eigendecomposes the score covariance; each multivariate eigenfunction
    block is the coefficient-weighted combination of that feature's
    univariate eigenfunctions. Components are sign-oriented on their
    concatenated blocks, with coefficients flipped consistently so scores
    computed from them stay coherent.
    """
    systems = list(uni_systems)
    if tuple(s.n_components for s in systems) != scores.truncation.per_feature:
        raise ValueError(
            "score matrix block layout does not match the univariate truncations"
        )
    for j, system in enumerate(systems):
        if system.feature_id != j:
            raise ValueError("univariate systems must be ordered by feature_id")
    z = score_covariance(scores)
    eig = sym_eig(z, psd_clip=True)
    coeff = np.array(eig.eigenvectors)
    blocks = []
    start = 0
    for system in systems:
        m_j = system.n_components
        c_j = coeff[start : start + m_j, :]
        blocks.append(c_j.T @ system.eigenfunctions)
        start += m_j

    concatenated = np.hstack(blocks)
    leads = np.argmax(np.abs(concatenated), axis=1)
    signs = np.where(concatenated[np.arange(concatenated.shape[0]), leads] < 0, -1.0, 1.0)
    coeff *= signs[None, :]
    blocks = [signs[:, None] * b for b in blocks]

    return MultivariateEigenSystem(
        eigenvalues=eig.eigenvalues,
        coefficients=coeff,
        eigenfunctions=tuple(blocks),
        grids=tuple(s.grid for s in systems),
        weights=tuple(s.weights for s in systems),
        truncation=scores.truncation,
    )


def multivariate_scores(
    scores: ScoreMatrix, system: MultivariateEigenSystem
) -> np.ndarray:
    """Multivariate scores: univariate score rows times each coefficient
    vector."""
    if scores.truncation.per_feature != system.truncation.per_feature:
        raise ValueError("score matrix and eigensystem block layouts differ")
    return scores.values @ system.coefficients


@dataclass(frozen=True)
class VarianceReport:
    """Variance shares of a retained spectrum and component counts per level.

    `component_pve` and `cumulative_pve` are percentages over the retained
    eigenvalues; ``npc[alpha]`` is the smallest component count whose
    cumulative share reaches `alpha` percent.
    """

    component_pve: np.ndarray
    cumulative_pve: np.ndarray
    npc: Dict[float, int]

    def __post_init__(self) -> None:
        comp = np.asarray(self.component_pve, dtype=float)
        cum = np.asarray(self.cumulative_pve, dtype=float)
        if comp.shape != cum.shape or comp.ndim != 1:
            raise ValueError("component and cumulative shares must align")
        if np.any(comp < 0) or np.any(np.diff(cum) < 0):
            raise ValueError("variance shares must be nonnegative and cumulative")
        if abs(cum[-1] - 100.0) > 1e-8:
            raise ValueError("cumulative shares must end at 100")
        object.__setattr__(self, "component_pve", _readonly(comp))
        object.__setattr__(self, "cumulative_pve", _readonly(cum))


def variance_report(
    eigenvalues: Union[np.ndarray, Sequence[float]],
    alphas: Sequence[float],
) -> VarianceReport:
    """Percentage of variance explained over a retained spectrum, plus the
    component count needed for each requested level.

    The denominator is the sum of the supplied (retained) eigenvalues only;
    when the truncation discards variance this is exactly the quantity whose
    optimism the replication studies measure. Eigenvalues within round-off
    of zero are clamped before the shares are formed.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ValueError("expected a nonempty 1-D eigenvalue vector")
    top = float(lam.max())
    if np.any(lam < -1e-10 * max(top, 0.0)):
        raise ValueError("eigenvalues must be nonnegative up to round-off")
    lam = np.clip(lam, 0.0, None)
    partial = np.cumsum(lam)
    total = partial[-1]
    if total <= 0.0:
        raise ValueError("cannot report variance for an all-zero spectrum")
    component = 100.0 * lam / total
    cumulative = 100.0 * partial / total
    npc: Dict[float, int] = {}
    for alpha in alphas:
        a = float(alpha)
        if not 0.0 < a <= 100.0:
            raise ValueError("alpha levels must lie in (0, 100]")
        npc[a] = int(np.sum(cumulative < a) + 1)
    return VarianceReport(component_pve=component, cumulative_pve=cumulative, npc=npc)


def truncate_reliable(system: MultivariateEigenSystem) -> MultivariateEigenSystem:
    """Keep only the reliable components (the minimum univariate truncation)."""
    return system.truncated(system.reliable_count)


class MultivariateFPCA(TransformerMixin, BaseEstimator):
    """Two-step multivariate functional PCA for features on different grids.

    Each feature gets a univariate FPCA; the concatenated univariate scores
    are decomposed once more, and the multivariate eigenfunctions are
    assembled as combinations of the univariate ones.

    Parameters
    ----------
    n_components : int or sequence of int, optional
        Univariate truncation per feature (an int is broadcast to all
        features). Defaults to the full computable spectrum per feature.
        Mutually exclusive with `pve`.
    pve : float, optional
        Percentage of variance in (0, 100]; each feature independently
        retains the smallest count reaching it.
    grids : sequence of SampledGrid or array-like, optional
        One evaluation grid per feature. Defaults to uniform grids on [0, 1].

    Attributes
    ----------
    mean_ : MeanFunction
        Per-feature training means.
    uni_systems_ : list of UnivariateEigenSystem
        Retained univariate eigenpairs per feature.
    uni_full_eigenvalues_ : list of ndarray
        Full computable univariate spectra (selection denominators).
    truncation_ : TruncationSpec
        Realized per-feature truncations.
    system_ : MultivariateEigenSystem
        Combined eigenstructure with all ``truncation_.total`` components.
    eigenvalues_ : ndarray
        Multivariate eigenvalues, descending.
    scores_ : ndarray of shape (n_obs, total)
        Multivariate scores of the training sample.
    reliable_count_ : int
        Number of components within the reliable truncation.
    """

    def __init__(
        self,
        n_components: Optional[Union[int, Sequence[int]]] = None,
        pve: Optional[float] = None,
        grids: Optional[Sequence[Union[SampledGrid, np.ndarray]]] = None,
    ) -> None:
        self.n_components = n_components
        self.pve = pve
        self.grids = grids

    def _as_sample(self, X) -> MultivariateFunctionalSample:
        if isinstance(X, MultivariateFunctionalSample):
            return X
        if isinstance(X, np.ndarray) and X.ndim == 2:
            X = [X]
        return MultivariateFunctionalSample.from_arrays(list(X), grids=self.grids)

    def _truncation_for(self, full_spectra, rank_bounds) -> Tuple[int, ...]:
        p = len(full_spectra)
        if self.n_components is not None and self.pve is not None:
            raise ValueError("set either n_components or pve, not both")
        if self.pve is not None:
            return tuple(select_M_by_pve(lam, self.pve) for lam in full_spectra)
        if self.n_components is None:
            return tuple(rank_bounds)
        if np.isscalar(self.n_components):
            requested = [int(self.n_components)] * p
        else:
            requested = [int(m) for m in self.n_components]
            if len(requested) != p:
                raise ValueError(
                    f"n_components lists one truncation per feature; "
                    f"got {len(requested)} for {p} features"
                )
        for j, (m, bound) in enumerate(zip(requested, rank_bounds)):
            if not 1 <= m <= bound:
                raise ValueError(
                    f"feature {j}: truncation must lie in [1, {bound}] "
                    f"(min(N - 1, S)), got {m}"
                )
        return tuple(requested)

    def fit(self, X, y: None = None) -> "MultivariateFPCA":
        """Fit the two-step decomposition on a multivariate sample.

        `X` may be a :class:`MultivariateFunctionalSample` or a sequence of
        per-feature (n_obs, n_points_j) matrices.
        """
        sample = self._as_sample(X)
        mean, centered = center(sample)
        n_obs = sample.n_obs
        full_systems = []
        for feat in centered.features:
            weights = trapezoid_weights(feat.grid)
            cov = estimate_covariance(feat)
            rank_bound = min(n_obs - 1, feat.grid.size)
            full_systems.append(
                eigendecompose_covariance(
                    cov, weights, rank_bound, max_rank=rank_bound,
                    feature_id=feat.feature_id,
                )
            )
        rank_bounds = [s.n_components for s in full_systems]
        counts = self._truncation_for([s.eigenvalues for s in full_systems], rank_bounds)
        uni_systems = [s.truncated(m) for s, m in zip(full_systems, counts)]
        per_feature_scores = [
            uni_scores(feat, sys_j) for feat, sys_j in zip(centered.features, uni_systems)
        ]
        score_matrix = assemble_scores(per_feature_scores)
        system = mfpca_combine(uni_systems, score_matrix)

        self.mean_ = mean
        self.uni_systems_ = uni_systems
        self.uni_full_eigenvalues_ = [s.eigenvalues for s in full_systems]
        self.truncation_ = score_matrix.truncation
        self.score_matrix_ = score_matrix
        self.system_ = system
        self.eigenvalues_ = system.eigenvalues
        self.coefficients_ = system.coefficients
        self.eigenfunctions_ = system.eigenfunctions
        self.scores_ = multivariate_scores(score_matrix, system)
        self.reliable_count_ = system.reliable_count
        self.n_obs_ = n_obs
        return self

    def transform(self, X) -> np.ndarray:
        """Multivariate scores of (new) observations under the fitted model."""
        check_is_fitted(self, "system_")
        sample = self._as_sample(X)
        if sample.n_features != len(self.uni_systems_):
            raise ValueError(
                f"expected {len(self.uni_systems_)} features, got {sample.n_features}"
            )
        per_feature = []
        for feat, sys_j, mu in zip(
            sample.features, self.uni_systems_, self.mean_.values
        ):
            centered = UnivariateFunctionalSample(
                grid=feat.grid, values=feat.values - mu, feature_id=feat.feature_id
            )
            per_feature.append(uni_scores(centered, sys_j))
        return assemble_scores(per_feature).values @ self.system_.coefficients

    def variance_report(self, alphas: Sequence[float]) -> VarianceReport:
        """Variance shares of the fitted multivariate spectrum."""
        check_is_fitted(self, "system_")
        return variance_report(self.eigenvalues_, alphas)
