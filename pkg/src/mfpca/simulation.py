"""Karhunen-Loeve data generation on randomly split domains, eigenvalue
error metrics, and the replication studies for truncation effects."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .basis import MultivariateBasisSystem, SplitSystemSpec, fourier_basis, split_system
from .fdata import MultivariateFunctionalSample, center
from .numerics import SampledGrid, _readonly, sym_eig, trapezoid_weights
from .univariate import (
    eigendecompose_covariance,
    estimate_covariance,
    select_M_by_pve,
    uni_scores,
)
from .multivariate import assemble_scores, score_covariance, variance_report

__all__ = [
    "exponential_eigenvalues",
    "SimulationConfig",
    "SimulatedDataset",
    "ReplicationResult",
    "StudyReport",
    "draw_cuts",
    "simulate_dataset",
    "eigenvalue_errors",
    "run_error_study",
    "run_npc_study",
]

logger = logging.getLogger(__name__)

_TAG_CUTS = 0
_TAG_SIGNS = 1
_TAG_SCORES = 2

QUANTILE_LABELS = ("min", "q1", "median", "q3", "max")
_QUANTILE_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)


def exponential_eigenvalues(count: int) -> np.ndarray:
    """Exponentially decaying variances ``exp(-(m + 1) / 2)``, m = 1..count."""
    if count < 1:
        raise ValueError("count must be at least 1")
    m = np.arange(1, count + 1)
    return np.exp(-(m + 1) / 2.0)


@dataclass(frozen=True)
class SimulationConfig:
    """Data-generating configuration for one replication cell.

    Curves are truncated Karhunen-Loeve expansions over a split orthonormal
    system with `n_components` functions; scores are independent Gaussians
    with the exponentially decaying variances of
    :func:`exponential_eigenvalues`. All features share the same number of
    sampling points on [0, 1].
    """

    n_obs: int
    n_points: int
    n_features: int = 5
    n_components: int = 50
    base_seed: int = 0
    total_length: float = 1.0
    min_segment_fraction: float = 0.02
    master_grid_factor: int = 20

    def __post_init__(self) -> None:
        if self.n_obs < 2:
            raise ValueError("n_obs must be at least 2")
        if self.n_points < 2:
            raise ValueError("n_points must be at least 2")
        if self.n_features < 1:
            raise ValueError("n_features must be at least 1")
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        if self.total_length <= 0:
            raise ValueError("total_length must be positive")
        if not 0.0 <= self.min_segment_fraction * self.n_features < 1.0:
            raise ValueError(
                "min_segment_fraction too large: the guard must leave room "
                "for all segments"
            )
        if self.master_grid_factor < 1:
            raise ValueError("master_grid_factor must be at least 1")

    def true_eigenvalues(self) -> np.ndarray:
        return exponential_eigenvalues(self.n_components)


def _stream(base_seed: int, replication: int, tag: int) -> np.random.Generator:
    # Keyed derivation: the same (seed, replication, purpose) triple yields
    # the same stream no matter where or in which order it is consumed.
    return np.random.default_rng(
        np.random.SeedSequence(base_seed, spawn_key=(replication, tag))
    )


def draw_cuts(
    n_features: int,
    total_length: float,
    rng: np.random.Generator,
    min_segment_fraction: float = 0.02,
) -> np.ndarray:
    """Sorted uniform cut points splitting [0, total_length] into one segment
    per feature.

    Draws are rejected until every segment (including the two boundary
    segments) is at least ``min_segment_fraction * total_length`` long, so
    no feature's grid degenerates onto a near-empty piece of the domain.
    """
    if n_features < 1:
        raise ValueError("n_features must be at least 1")
    if total_length <= 0:
        raise ValueError("total_length must be positive")
    if not 0.0 <= min_segment_fraction * n_features < 1.0:
        raise ValueError("min_segment_fraction leaves no room for the segments")
    if n_features == 1:
        return np.empty(0)
    floor = min_segment_fraction * total_length
    attempts = 0
    while True:
        attempts += 1
        cuts = np.sort(rng.uniform(0.0, total_length, n_features - 1))
        segments = np.diff(np.concatenate(([0.0], cuts, [total_length])))
        if segments.min() >= floor:
            if attempts > 1:
                logger.debug("draw_cuts accepted after %d attempts", attempts)
            return cuts


@dataclass(frozen=True)
class SimulatedDataset:
    """One simulated multivariate sample plus the truth that generated it."""

    sample: MultivariateFunctionalSample
    basis: MultivariateBasisSystem
    eigenvalues: np.ndarray
    cuts: np.ndarray
    signs: Tuple[int, ...]


def simulate_dataset(config: SimulationConfig, replication: int) -> SimulatedDataset:
    """Draw one replication of the Karhunen-Loeve model.

    Cut points, block signs, and Gaussian scores come from separate streams
    derived from ``(config.base_seed, replication, purpose)``, so the same
    pair reproduces the same dataset bit for bit.
    """
    rng_cuts = _stream(config.base_seed, replication, _TAG_CUTS)
    rng_signs = _stream(config.base_seed, replication, _TAG_SIGNS)
    rng_scores = _stream(config.base_seed, replication, _TAG_SCORES)

    cuts = draw_cuts(
        config.n_features,
        config.total_length,
        rng_cuts,
        config.min_segment_fraction,
    )
    signs = tuple(int(s) for s in 2 * rng_signs.integers(0, 2, config.n_features) - 1)

    grids = tuple(SampledGrid.uniform(config.n_points) for _ in range(config.n_features))
    master = SampledGrid.uniform(
        config.master_grid_factor * config.n_points + 1, 0.0, config.total_length
    )
    psi = fourier_basis(config.n_components, master)
    spec = SplitSystemSpec(
        total_length=config.total_length, cuts=cuts, signs=signs, grids=grids
    )
    system = split_system(psi, master, spec)

    true_values = config.true_eigenvalues()
    scores = rng_scores.standard_normal((config.n_obs, config.n_components))
    scores *= np.sqrt(true_values)
    sample = MultivariateFunctionalSample.from_arrays(
        [scores @ block for block in system.blocks], grids=grids
    )
    return SimulatedDataset(
        sample=sample,
        basis=system,
        eigenvalues=_readonly(true_values),
        cuts=_readonly(cuts),
        signs=signs,
    )


def eigenvalue_errors(
    true_values: np.ndarray, estimated: np.ndarray, count: int
) -> np.ndarray:
    """Relative squared eigenvalue errors by rank:
    ``(true - estimated)^2 / true^2`` for the first `count` components."""
    t = np.asarray(true_values, dtype=float)
    e = np.asarray(estimated, dtype=float)
    if count < 1 or count > t.size or count > e.size:
        raise ValueError(
            f"count must lie in [1, min({t.size}, {e.size})], got {count}"
        )
    t = t[:count]
    e = e[:count]
    return (t - e) ** 2 / t**2


@dataclass(frozen=True)
class ReplicationResult:
    """Outcome of analysing one simulated dataset under one truncation.

    For the fixed-truncation error study, `errors` holds the per-rank
    relative squared eigenvalue errors and `alpha`/`npc` are None. For the
    variance-explained study, `alpha` is the selection level, `truncations`
    the per-feature counts it chose, and `npc` the selected number of
    multivariate components.
    """

    replication: int
    n_obs: int
    n_points: int
    cuts: np.ndarray
    signs: Tuple[int, ...]
    truncations: Tuple[int, ...]
    rank_bound: int
    estimated_eigenvalues: np.ndarray
    errors: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    npc: Optional[int] = None


def _full_univariate(sample: MultivariateFunctionalSample):
    """Full-rank univariate spectra and scores per feature of a raw sample."""
    _, centered = center(sample)
    spectra: List[np.ndarray] = []
    scores: List[np.ndarray] = []
    for feat in centered.features:
        weights = trapezoid_weights(feat.grid)
        bound = min(sample.n_obs - 1, feat.grid.size)
        system = eigendecompose_covariance(
            estimate_covariance(feat), weights, bound, max_rank=bound,
            feature_id=feat.feature_id,
        )
        spectra.append(system.eigenvalues)
        scores.append(uni_scores(feat, system))
    rank_bound = min(s.size for s in spectra)
    return spectra, scores, rank_bound


def _combined_eigenvalues(scores: Sequence[np.ndarray], counts: Sequence[int]) -> np.ndarray:
    """Multivariate spectrum for a given per-feature truncation, reusing
    full-rank univariate scores (truncation keeps leading columns)."""
    xi = assemble_scores([s[:, :m] for s, m in zip(scores, counts)])
    return sym_eig(score_covariance(xi), psd_clip=True).eigenvalues


def _error_replication(
    config: SimulationConfig,
    replication: int,
    truncations: Sequence[int],
    m_max: int,
) -> List[ReplicationResult]:
    data = simulate_dataset(config, replication)
    spectra, scores, rank_bound = _full_univariate(data.sample)
    results = []
    for m_uni in truncations:
        effective = min(int(m_uni), rank_bound)
        counts = (effective,) * config.n_features
        estimated = _combined_eigenvalues(scores, counts)
        errors = eigenvalue_errors(data.eigenvalues, estimated, m_max)
        results.append(
            ReplicationResult(
                replication=replication,
                n_obs=config.n_obs,
                n_points=config.n_points,
                cuts=data.cuts,
                signs=data.signs,
                truncations=counts,
                rank_bound=rank_bound,
                estimated_eigenvalues=estimated,
                errors=errors,
            )
        )
    return results


def _npc_replication(
    config: SimulationConfig,
    replication: int,
    alphas: Sequence[float],
) -> List[ReplicationResult]:
    data = simulate_dataset(config, replication)
    spectra, scores, rank_bound = _full_univariate(data.sample)
    results = []
    for alpha in alphas:
        counts = tuple(select_M_by_pve(lam, alpha) for lam in spectra)
        estimated = _combined_eigenvalues(scores, counts)
        selected = variance_report(estimated, (alpha,)).npc[float(alpha)]
        results.append(
            ReplicationResult(
                replication=replication,
                n_obs=config.n_obs,
                n_points=config.n_points,
                cuts=data.cuts,
                signs=data.signs,
                truncations=counts,
                rank_bound=rank_bound,
                estimated_eigenvalues=estimated,
                alpha=float(alpha),
                npc=selected,
            )
        )
    return results


@dataclass(frozen=True)
class StudyReport:
    """Aggregated replication study results.

    For an eigenvalue-error study, ``error_cells[(N, S, M_uni)]`` holds a
    (m_max, 5) array of per-rank quantiles in :data:`QUANTILE_LABELS` order.
    For a selection study, ``npc_cells[(N, S)][alpha][npc]`` counts how many
    replications selected `npc` components, and `true_npc` gives the count
    the true spectrum needs per level.
    """

    kind: str
    meta: Dict[str, object]
    error_cells: Optional[Dict[Tuple[int, int, int], np.ndarray]] = None
    npc_cells: Optional[Dict[Tuple[int, int], Dict[float, Dict[int, int]]]] = None
    true_npc: Optional[Dict[float, int]] = None
    replications: Optional[Tuple[ReplicationResult, ...]] = None

    def rows(self) -> List[Dict[str, object]]:
        """Long-format rows, one per cell statistic."""
        out: List[Dict[str, object]] = []
        if self.kind == "eigenvalue-errors":
            assert self.error_cells is not None
            for (n_obs, n_points, m_uni) in sorted(self.error_cells):
                table = self.error_cells[(n_obs, n_points, m_uni)]
                for m in range(table.shape[0]):
                    for q, label in enumerate(QUANTILE_LABELS):
                        out.append(
                            {
                                "N": n_obs,
                                "S": n_points,
                                "M_j": m_uni,
                                "m": m + 1,
                                "quantile": label,
                                "value": float(table[m, q]),
                            }
                        )
        elif self.kind == "npc-selection":
            assert self.npc_cells is not None and self.true_npc is not None
            for (n_obs, n_points) in sorted(self.npc_cells):
                per_alpha = self.npc_cells[(n_obs, n_points)]
                for alpha in sorted(per_alpha):
                    for npc in sorted(per_alpha[alpha]):
                        out.append(
                            {
                                "N": n_obs,
                                "S": n_points,
                                "alpha": float(alpha),
                                "npc": npc,
                                "count": per_alpha[alpha][npc],
                                "true_npc": self.true_npc[alpha],
                            }
                        )
        else:
            raise ValueError(f"unknown study kind {self.kind!r}")
        return out

    def fieldnames(self) -> List[str]:
        if self.kind == "eigenvalue-errors":
            return ["N", "S", "M_j", "m", "quantile", "value"]
        return ["N", "S", "alpha", "npc", "count", "true_npc"]

    def to_json_dict(self) -> Dict[str, object]:
        """Nested JSON-ready structure keyed by N, then S, then arm/level."""
        body: Dict[str, object] = {}
        if self.kind == "eigenvalue-errors":
            assert self.error_cells is not None
            for (n_obs, n_points, m_uni) in sorted(self.error_cells):
                table = self.error_cells[(n_obs, n_points, m_uni)]
                cell = (
                    body.setdefault(f"N={n_obs}", {})
                    .setdefault(f"S={n_points}", {})
                    .setdefault(f"M_j={m_uni}", {})
                )
                for m in range(table.shape[0]):
                    cell[str(m + 1)] = {
                        label: float(table[m, q])
                        for q, label in enumerate(QUANTILE_LABELS)
                    }
        else:
            assert self.npc_cells is not None and self.true_npc is not None
            for (n_obs, n_points) in sorted(self.npc_cells):
                per_alpha = self.npc_cells[(n_obs, n_points)]
                cell = body.setdefault(f"N={n_obs}", {}).setdefault(
                    f"S={n_points}", {}
                )
                for alpha in sorted(per_alpha):
                    cell[f"alpha={alpha:g}"] = {
                        str(npc): per_alpha[alpha][npc]
                        for npc in sorted(per_alpha[alpha])
                    }
            body["true_npc"] = {
                f"alpha={alpha:g}": count
                for alpha, count in sorted(self.true_npc.items())
            }
        return {"kind": self.kind, "meta": self.meta, "results": body}

    def write_csv(self, path, header_lines: Sequence[str] = ()) -> None:
        """Write the long-format rows as CSV, with `#`-prefixed header lines."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            writer = csv.DictWriter(
                fh, fieldnames=self.fieldnames(), lineterminator="\n"
            )
            writer.writeheader()
            for row in self.rows():
                writer.writerow(row)

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _base_meta(
    kind: str,
    n_values: Sequence[int],
    s_values: Sequence[int],
    replications: int,
    base_seed: int,
    n_features: int,
    n_components: int,
) -> Dict[str, object]:
    return {
        "version": __version__,
        "study": kind,
        "n_values": [int(n) for n in n_values],
        "s_values": [int(s) for s in s_values],
        "replications": int(replications),
        "base_seed": int(base_seed),
        "n_features": int(n_features),
        "n_components": int(n_components),
    }


def run_error_study(
    n_values: Sequence[int] = (25, 50, 100),
    s_values: Sequence[int] = (25, 50, 100),
    truncations: Sequence[int] = (5, 10),
    replications: int = 500,
    base_seed: int = 0,
    n_jobs: int = 1,
    m_max: int = 25,
    n_features: int = 5,
    n_components: int = 50,
    keep_replications: bool = False,
) -> StudyReport:
    """Replicate the fixed-truncation eigenvalue error study.

    For every (N, S) cell, each replication simulates a dataset once and
    analyses it under every truncation arm, so arms are compared on paired
    data. Emits per-rank quantiles of the relative squared errors of the
    first `m_max` multivariate eigenvalues.
    """
    if m_max > n_features * min(truncations):
        raise ValueError(
            "m_max exceeds the smallest number of estimable multivariate "
            "components across the truncation arms"
        )
    cells: Dict[Tuple[int, int, int], np.ndarray] = {}
    kept: List[ReplicationResult] = []
    runner = Parallel(n_jobs=n_jobs)
    for n_obs in n_values:
        for n_points in s_values:
            config = SimulationConfig(
                n_obs=int(n_obs),
                n_points=int(n_points),
                n_features=n_features,
                n_components=n_components,
                base_seed=base_seed,
            )
            per_rep = runner(
                delayed(_error_replication)(config, rep, tuple(truncations), m_max)
                for rep in range(replications)
            )
            for idx, m_uni in enumerate(truncations):
                errors = np.stack([results[idx].errors for results in per_rep])
                cells[(int(n_obs), int(n_points), int(m_uni))] = np.quantile(
                    errors, _QUANTILE_LEVELS, axis=0
                ).T
            if keep_replications:
                kept.extend(res for results in per_rep for res in results)
    meta = _base_meta(
        "eigenvalue-errors", n_values, s_values, replications, base_seed,
        n_features, n_components,
    )
    meta["truncations"] = [int(m) for m in truncations]
    meta["m_max"] = int(m_max)
    return StudyReport(
        kind="eigenvalue-errors",
        meta=meta,
        error_cells=cells,
        replications=tuple(kept) if keep_replications else None,
    )


def run_npc_study(
    n_values: Sequence[int] = (25, 50, 100),
    s_values: Sequence[int] = (25, 50, 100),
    alphas: Sequence[float] = (50.0, 70.0, 90.0, 95.0, 99.0),
    replications: int = 500,
    base_seed: int = 0,
    n_jobs: int = 1,
    n_features: int = 5,
    n_components: int = 50,
    keep_replications: bool = False,
) -> StudyReport:
    """Replicate the variance-explained component selection study.

    Per replication and level alpha, every feature keeps the smallest
    univariate count reaching alpha percent of its variance; the selected
    number of multivariate components is then read off the combined
    spectrum's cumulative shares. Counts are tabulated per (N, S, alpha).
    """
    true_npc = variance_report(exponential_eigenvalues(n_components), alphas).npc
    cells: Dict[Tuple[int, int], Dict[float, Dict[int, int]]] = {}
    kept: List[ReplicationResult] = []
    runner = Parallel(n_jobs=n_jobs)
    for n_obs in n_values:
        for n_points in s_values:
            config = SimulationConfig(
                n_obs=int(n_obs),
                n_points=int(n_points),
                n_features=n_features,
                n_components=n_components,
                base_seed=base_seed,
            )
            per_rep = runner(
                delayed(_npc_replication)(config, rep, tuple(alphas))
                for rep in range(replications)
            )
            counts: Dict[float, Dict[int, int]] = {float(a): {} for a in alphas}
            for results in per_rep:
                for res in results:
                    bucket = counts[res.alpha]
                    bucket[res.npc] = bucket.get(res.npc, 0) + 1
            cells[(int(n_obs), int(n_points))] = counts
            if keep_replications:
                kept.extend(res for results in per_rep for res in results)
    meta = _base_meta(
        "npc-selection", n_values, s_values, replications, base_seed,
        n_features, n_components,
    )
    meta["alphas"] = [float(a) for a in alphas]
    return StudyReport(
        kind="npc-selection",
        meta=meta,
        npc_cells=cells,
        true_npc=true_npc,
        replications=tuple(kept) if keep_replications else None,
    )
