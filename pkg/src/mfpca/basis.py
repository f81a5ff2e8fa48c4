"""Orthonormal basis construction: Fourier systems, the split multivariate
system used by the simulation engine, and B-spline least-squares smoothing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.interpolate import BSpline

from .fdata import UnivariateFunctionalSample
from .numerics import (
    QuadratureWeights,
    SampledGrid,
    _readonly,
    gram_matrix,
    trapezoid_weights,
)

__all__ = [
    "fourier_basis",
    "SplitSystemSpec",
    "MultivariateBasisSystem",
    "split_system",
    "bspline_design",
    "smooth_to_basis",
]


def fourier_basis(
    n_functions: int, grid: SampledGrid, *, max_functions: int = 101
) -> np.ndarray:
    """First `n_functions` elements of the Fourier system on the grid's span.

    Ordering is constant, then sine before cosine for each frequency:
    ``1/sqrt(T), sqrt(2/T) sin(2 pi t/T), sqrt(2/T) cos(2 pi t/T), ...``.
    Each row is one function sampled on the grid; L2 norms are 1 up to
    quadrature error.
    """
    if n_functions < 1:
        raise ValueError("n_functions must be at least 1")
    if n_functions > max_functions:
        raise ValueError(
            f"n_functions={n_functions} exceeds the configured maximum "
            f"{max_functions}"
        )
    t = grid.points - grid.points[0]
    span = grid.span
    rows: List[np.ndarray] = [np.full(grid.size, 1.0 / np.sqrt(span))]
    k = 1
    amp = np.sqrt(2.0 / span)
    while len(rows) < n_functions:
        rows.append(amp * np.sin(2.0 * np.pi * k * t / span))
        if len(rows) < n_functions:
            rows.append(amp * np.cos(2.0 * np.pi * k * t / span))
        k += 1
    return np.array(rows)


@dataclass(frozen=True)
class SplitSystemSpec:
    """Layout of a split multivariate system on an interval [0, total_length].

    `cuts` are the interior segment boundaries, strictly increasing inside
    (0, total_length); feature j occupies the j-th segment. `signs` holds
    one +/-1 orientation per feature, `grids` the per-feature evaluation
    grids.
    """

    total_length: float
    cuts: np.ndarray
    signs: Tuple[int, ...]
    grids: Tuple[SampledGrid, ...]

    def __post_init__(self) -> None:
        cuts = np.asarray(self.cuts, dtype=float)
        if cuts.ndim != 1:
            raise ValueError("cuts must form a 1-D array")
        if self.total_length <= 0:
            raise ValueError("total_length must be positive")
        if cuts.size and (
            np.any(cuts <= 0.0)
            or np.any(cuts >= self.total_length)
            or np.any(np.diff(cuts) <= 0)
        ):
            raise ValueError(
                "cuts must be strictly increasing inside (0, total_length)"
            )
        signs = tuple(int(s) for s in self.signs)
        if len(signs) != cuts.size + 1:
            raise ValueError("need exactly one sign per segment (len(cuts) + 1)")
        if any(s not in (-1, 1) for s in signs):
            raise ValueError("signs must be +1 or -1")
        if len(self.grids) != len(signs):
            raise ValueError("need exactly one grid per feature")
        object.__setattr__(self, "cuts", _readonly(cuts))
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "grids", tuple(self.grids))

    @property
    def n_features(self) -> int:
        return len(self.signs)

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate(([0.0], self.cuts, [self.total_length]))


@dataclass(frozen=True)
class MultivariateBasisSystem:
    """An orthonormal multivariate function system with one block per feature.

    ``blocks[j]`` holds the j-th block of every function as an
    (n_functions, n_points_j) matrix. `gram_defect` records how far the
    system was from orthonormality before the final correction.
    """

    blocks: Tuple[np.ndarray, ...]
    grids: Tuple[SampledGrid, ...]
    weights: Tuple[QuadratureWeights, ...]
    gram_defect: float

    def __post_init__(self) -> None:
        if not self.blocks or len(self.blocks) != len(self.grids):
            raise ValueError("need one block matrix per grid")
        n_functions = self.blocks[0].shape[0]
        frozen = []
        for block, grid in zip(self.blocks, self.grids):
            b = np.asarray(block, dtype=float)
            if b.ndim != 2 or b.shape != (n_functions, grid.size):
                raise ValueError("block shapes must be (n_functions, n_points_j)")
            frozen.append(_readonly(b))
        object.__setattr__(self, "blocks", tuple(frozen))

    @property
    def n_functions(self) -> int:
        return int(self.blocks[0].shape[0])

    @property
    def n_features(self) -> int:
        return len(self.blocks)

    def function(self, index: int) -> List[np.ndarray]:
        """Blocks of the `index`-th multivariate function."""
        return [block[index] for block in self.blocks]

    def gram(self) -> np.ndarray:
        """Gram matrix of the system under the product-space inner product."""
        total = np.zeros((self.n_functions, self.n_functions))
        for block, w in zip(self.blocks, self.weights):
            total += gram_matrix(block, w)
        return total


def split_system(
    basis_values: np.ndarray,
    master_grid: SampledGrid,
    spec: SplitSystemSpec,
) -> MultivariateBasisSystem:
    """Split an orthonormal basis on [0, T] into a p-feature orthonormal system.

    Feature j's block of function m is the restriction of the m-th basis
    function to the j-th segment, rescaled onto that feature's grid (values
    linearly interpolated from the master grid) and flipped by the feature's
    sign. Rescaling a segment onto the unit interval divides its L2 mass by
    the segment length, so each block carries a sqrt(segment length) factor
    to keep the system orthonormal in the product space. Any residual
    deviation (quadrature and interpolation error) is removed by modified
    Gram-Schmidt under the discrete product-space inner product, and
    `gram_defect` records the deviation before that correction.
    """
    psi = np.asarray(basis_values, dtype=float)
    if psi.ndim != 2:
        raise ValueError("basis values must form an (n_functions, n_points) matrix")
    if psi.shape[1] != master_grid.size:
        raise ValueError("basis values must be sampled on the master grid")
    bounds = spec.boundaries
    blocks = []
    for j in range(spec.n_features):
        grid = spec.grids[j]
        seg = bounds[j + 1] - bounds[j]
        position = (grid.points - grid.points[0]) / grid.span
        mapped = bounds[j] + position * seg
        block = np.empty((psi.shape[0], grid.size))
        for m in range(psi.shape[0]):
            block[m] = np.interp(mapped, master_grid.points, psi[m])
        blocks.append(spec.signs[j] * np.sqrt(seg) * block)

    weights = tuple(trapezoid_weights(g) for g in spec.grids)
    # One concatenated weighted vector per function: the product-space inner
    # product is an ordinary weighted dot product on this layout.
    flat = np.hstack(blocks)
    w_flat = np.concatenate([w.weights for w in weights])
    gram = (flat * w_flat) @ flat.T
    defect = float(np.abs(gram - np.eye(flat.shape[0])).max())

    for m in range(flat.shape[0]):
        for k in range(m):
            flat[m] -= np.dot(flat[m] * w_flat, flat[k]) * flat[k]
        norm = np.sqrt(np.dot(flat[m] * w_flat, flat[m]))
        if norm <= 0.0 or not np.isfinite(norm):
            raise ValueError(
                "basis functions are linearly dependent under the discrete "
                "inner product; reduce n_functions or refine the grids"
            )
        flat[m] /= norm

    out_blocks = []
    start = 0
    for grid in spec.grids:
        out_blocks.append(flat[:, start : start + grid.size])
        start += grid.size
    return MultivariateBasisSystem(
        blocks=tuple(out_blocks),
        grids=spec.grids,
        weights=weights,
        gram_defect=defect,
    )


def bspline_design(grid: SampledGrid, n_basis: int, degree: int = 3) -> np.ndarray:
    """Design matrix of a B-spline basis with equally spaced interior knots.

    Row s holds the `n_basis` basis function values at ``grid.points[s]``.
    Boundary knots are repeated degree+1 times (clamped), so the rows form
    a partition of unity.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if n_basis < degree + 1:
        raise ValueError(
            f"n_basis={n_basis} is too small for degree {degree}; "
            f"need at least degree + 1 = {degree + 1}"
        )
    lo, hi = float(grid.points[0]), float(grid.points[-1])
    n_inner = n_basis - degree - 1
    inner = np.linspace(lo, hi, n_inner + 2)[1:-1]
    knots = np.concatenate(
        [np.full(degree + 1, lo), inner, np.full(degree + 1, hi)]
    )
    design = BSpline.design_matrix(grid.points, knots, degree, extrapolate=False)
    return design.toarray()


def smooth_to_basis(
    sample: UnivariateFunctionalSample, design: np.ndarray
) -> UnivariateFunctionalSample:
    """Replace each curve by its least-squares projection onto a basis.

    The fitted values are re-evaluated on the sample's own grid, so the
    output is a drop-in replacement for the input. Applying the projection
    twice changes nothing.
    """
    d = np.asarray(design, dtype=float)
    if d.ndim != 2 or d.shape[0] != sample.n_points:
        raise ValueError(
            f"design matrix rows ({d.shape[0] if d.ndim == 2 else 'n/a'}) "
            f"must match the sample grid length ({sample.n_points})"
        )
    coef, _, rank, _ = np.linalg.lstsq(d, sample.values.T, rcond=None)
    if rank < d.shape[1]:
        raise ValueError(
            f"design matrix is rank deficient (rank {rank} < {d.shape[1]})"
        )
    fitted = (d @ coef).T
    return UnivariateFunctionalSample(
        grid=sample.grid, values=fitted, feature_id=sample.feature_id
    )
