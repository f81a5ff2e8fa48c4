"""Shared numerical primitives: evaluation grids, trapezoid quadrature,
Gram matrices, and dense symmetric eigendecomposition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "SampledGrid",
    "QuadratureWeights",
    "SymmetricEigenResult",
    "trapezoid_weights",
    "sym_eig",
    "gram_matrix",
    "canonical_sign",
]

ArrayLike = Union[np.ndarray, Sequence[float]]


def _readonly(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SampledGrid:
    """Strictly increasing evaluation grid shared by the curves of one feature.

    Parameters
    ----------
    points : array-like of shape (n_points,)
        Strictly increasing, finite grid values in domain units. At least
        two points are required.
    """

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1:
            raise ValueError("grid points must form a 1-D array")
        if pts.size < 2:
            raise ValueError(f"a grid needs at least 2 points, got {pts.size}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", _readonly(pts))

    @classmethod
    def uniform(cls, n_points: int, start: float = 0.0, stop: float = 1.0) -> "SampledGrid":
        """Equally spaced grid with `n_points` points on [start, stop]."""
        return cls(np.linspace(start, stop, n_points))

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def span(self) -> float:
        return float(self.points[-1] - self.points[0])


@dataclass(frozen=True)
class QuadratureWeights:
    """Integration weights aligned to a :class:`SampledGrid`.

    The weights discretize the L2 inner product on the grid's domain:
    ``sum(w * f * g)`` approximates the integral of ``f * g``.
    """

    grid: SampledGrid
    weights: np.ndarray
    rule: str = "trapezoid"

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != self.grid.points.shape:
            raise ValueError(
                f"weights (length {w.size}) must align with the grid "
                f"(length {self.grid.size})"
            )
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("quadrature weights must be finite and positive")
        span = self.grid.span
        if abs(float(w.sum()) - span) > 1e-12 * span:
            raise ValueError("quadrature weights must sum to the grid span")
        if self.rule != "trapezoid":
            raise ValueError(f"unsupported quadrature rule {self.rule!r}")
        object.__setattr__(self, "weights", _readonly(w))


@dataclass(frozen=True)
class SymmetricEigenResult:
    """Full spectrum of a symmetric matrix, eigenvalues sorted descending.

    ``eigenvectors[:, k]`` is the unit eigenvector paired with
    ``eigenvalues[k]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.eigenvalues, dtype=float)
        vecs = np.asarray(self.eigenvectors, dtype=float)
        if vals.ndim != 1 or vecs.ndim != 2 or vecs.shape[1] != vals.size:
            raise ValueError("eigenvalues and eigenvector columns must align")
        if np.any(np.diff(vals) > 0):
            raise ValueError("eigenvalues must be sorted in descending order")
        object.__setattr__(self, "eigenvalues", _readonly(vals))
        object.__setattr__(self, "eigenvectors", _readonly(vecs))


def trapezoid_weights(grid: SampledGrid) -> QuadratureWeights:
    """Composite trapezoid weights for a (possibly non-uniform) grid.

    End points receive half their neighbouring spacing, interior points the
    mean of the two adjacent spacings; the weights sum to the grid span.
    """
    pts = grid.points
    w = np.empty(pts.size)
    w[0] = (pts[1] - pts[0]) / 2.0
    w[-1] = (pts[-1] - pts[-2]) / 2.0
    w[1:-1] = (pts[2:] - pts[:-2]) / 2.0
    return QuadratureWeights(grid=grid, weights=w)


def sym_eig(matrix: ArrayLike, psd_clip: bool = False) -> SymmetricEigenResult:
    """Eigendecomposition of a symmetric matrix, spectrum sorted descending.

    Parameters
    ----------
    matrix : array-like of shape (n, n)
        Symmetric up to round-off; it is symmetrized as ``(A + A.T) / 2``
        before solving.
    psd_clip : bool, default=False
        When True, negative eigenvalues within round-off of zero
        (``>= -1e-10 * max|A|``) are clamped to 0. Larger negative
        eigenvalues are always reported as-is.

    Returns
    -------
    SymmetricEigenResult
        Descending eigenvalues with orthonormal eigenvector columns. Ties
        keep the solver's original ordering.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.size == 0:
        raise ValueError("cannot decompose an empty matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    scale = float(np.abs(a).max())
    if float(np.abs(a - a.T).max()) > 1e-10 * max(1.0, scale):
        raise ValueError("matrix is not symmetric within tolerance")
    sym = (a + a.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    if psd_clip:
        floor = -1e-10 * scale
        vals = np.where((vals < 0.0) & (vals >= floor), 0.0, vals)
    return SymmetricEigenResult(eigenvalues=vals, eigenvectors=vecs)


def gram_matrix(funcs: ArrayLike, weights: QuadratureWeights) -> np.ndarray:
    """Matrix of pairwise quadrature inner products ``G[i, j] = <f_i, f_j>``.

    `funcs` holds one function per row, sampled on the weights' grid.
    """
    f = np.atleast_2d(np.asarray(funcs, dtype=float))
    if f.ndim != 2:
        raise ValueError("functions must form a 2-D array (one row per function)")
    if f.shape[1] != weights.weights.size:
        raise ValueError(
            f"functions have {f.shape[1]} points but the grid has "
            f"{weights.weights.size}"
        )
    return (f * weights.weights) @ f.T


def canonical_sign(values: ArrayLike) -> np.ndarray:
    """Orient a function so its largest-magnitude entry is positive.

    Returns `values` or its negation; among entries tied for the largest
    absolute value, the earliest one decides. Eigenfunctions are only
    defined up to sign, so this fixes a reproducible representative.
    """
    f = np.asarray(values, dtype=float)
    if f.ndim != 1:
        raise ValueError("expected a 1-D function vector")
    if not np.all(np.isfinite(f)):
        raise ValueError("function values must be finite")
    if not np.any(f != 0.0):
        raise ValueError("cannot orient an identically zero function")
    lead = int(np.argmax(np.abs(f)))
    return -f if f[lead] < 0.0 else f
