"""Canadian weather case study: ingest the 35-station daily dataset,
smooth with a small B-spline basis, and compare truncation scenarios."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .basis import bspline_design, smooth_to_basis
from .fdata import MultivariateFunctionalSample, inner_product_multi
from .multivariate import MultivariateFPCA
from .numerics import SampledGrid, _readonly, trapezoid_weights

__all__ = [
    "WeatherDataset",
    "ScenarioResult",
    "load_weather",
    "run_scenario",
    "align_scenario_signs",
    "export_table",
    "export_eigenfunctions",
]

N_STATIONS = 35
N_DAYS = 365
TEMPERATURE_BOUNDS = (-60.0, 50.0)
FEATURE_NAMES = ("temperature", "precipitation")
SMOOTHING_BASIS_SIZE = 10

PathLike = Union[str, Path]


@dataclass(frozen=True)
class WeatherDataset:
    """Daily temperature (Celsius) and precipitation (millimetres) averages
    for 35 stations on a day-of-year grid.

    The grid is the day number 1..365, so integrals (and therefore
    eigenvalues) are in per-day units.
    """

    station_ids: Tuple[str, ...]
    station_names: Tuple[str, ...]
    latitude: np.ndarray
    longitude: np.ndarray
    day_grid: SampledGrid
    temperature: np.ndarray
    precipitation: np.ndarray

    def __post_init__(self) -> None:
        if len(self.station_ids) != N_STATIONS or len(self.station_names) != N_STATIONS:
            raise ValueError(f"expected exactly {N_STATIONS} stations")
        if self.day_grid.size != N_DAYS:
            raise ValueError(f"expected a {N_DAYS}-day grid")
        temp = np.asarray(self.temperature, dtype=float)
        prec = np.asarray(self.precipitation, dtype=float)
        for name, mat in (("temperature", temp), ("precipitation", prec)):
            if mat.shape != (N_STATIONS, N_DAYS):
                raise ValueError(
                    f"{name} matrix must be {N_STATIONS}x{N_DAYS}, got {mat.shape}"
                )
        lo, hi = TEMPERATURE_BOUNDS
        if temp.min() < lo or temp.max() > hi:
            raise ValueError(f"temperature values outside [{lo}, {hi}]")
        if prec.min() < 0:
            raise ValueError("precipitation values must be nonnegative")
        object.__setattr__(self, "temperature", _readonly(temp))
        object.__setattr__(self, "precipitation", _readonly(prec))
        object.__setattr__(self, "latitude", _readonly(np.asarray(self.latitude, float)))
        object.__setattr__(self, "longitude", _readonly(np.asarray(self.longitude, float)))

    def to_sample(self) -> MultivariateFunctionalSample:
        """Two-feature functional sample: temperature first, precipitation second."""
        return MultivariateFunctionalSample.from_arrays(
            [self.temperature, self.precipitation],
            grids=[self.day_grid, self.day_grid],
        )


def _bundled(name: str):
    return resources.files("mfpca.data").joinpath(name)


def _read_matrix_csv(path: PathLike, value_name: str, bounds=None) -> Tuple[List[str], np.ndarray]:
    """Parse a weather-style matrix CSV: a header of station ids over
    N_DAYS rows of floats. Errors name the file and offending cell."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        if len(header) != N_STATIONS:
            raise ValueError(
                f"{path}: expected {N_STATIONS} station columns, got {len(header)}"
            )
        rows = []
        for i, row in enumerate(reader):
            if len(row) != N_STATIONS:
                raise ValueError(
                    f"{path}: row {i + 2} has {len(row)} values, expected {N_STATIONS}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                bad = next(v for v in row if not _is_float(v))
                raise ValueError(
                    f"{path}: row {i + 2} contains a non-numeric value {bad!r}"
                ) from None
    if len(rows) != N_DAYS:
        raise ValueError(f"{path}: expected {N_DAYS} data rows, got {len(rows)}")
    matrix = np.array(rows).T  # stations x days
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"{path}: {value_name} values must be finite")
    if bounds is not None:
        lo, hi = bounds
        offenders = np.argwhere((matrix < lo) | (matrix > hi))
        if offenders.size:
            st, day = offenders[0]
            raise ValueError(
                f"{path}: {value_name} out of range [{lo}, {hi}] at "
                f"row {day + 2}, column {header[st]!r}: {matrix[st, day]}"
            )
    return header, matrix


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _read_stations_csv(path: PathLike) -> Tuple[List[str], List[str], np.ndarray, np.ndarray]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        if header != ["id", "name", "latitude", "longitude"]:
            raise ValueError(
                f"{path}: expected header id,name,latitude,longitude, got {header}"
            )
        ids, names, lat, lon = [], [], [], []
        for i, row in enumerate(reader):
            if len(row) != 4:
                raise ValueError(f"{path}: row {i + 2} has {len(row)} fields, expected 4")
            ids.append(row[0])
            names.append(row[1])
            if not (_is_float(row[2]) and _is_float(row[3])):
                raise ValueError(f"{path}: row {i + 2} has non-numeric coordinates")
            lat.append(float(row[2]))
            lon.append(float(row[3]))
    if len(ids) != N_STATIONS:
        raise ValueError(f"{path}: expected {N_STATIONS} stations, got {len(ids)}")
    return ids, names, np.array(lat), np.array(lon)


def load_weather(
    temperature_path: Optional[PathLike] = None,
    precipitation_path: Optional[PathLike] = None,
    stations_path: Optional[PathLike] = None,
) -> WeatherDataset:
    """Load and validate the weather dataset (the bundled copy by default).

    All three files must agree on the station identifiers and their order.
    """
    temperature_path = temperature_path or _bundled("temperature.csv")
    precipitation_path = precipitation_path or _bundled("precipitation.csv")
    stations_path = stations_path or _bundled("stations.csv")

    temp_ids, temperature = _read_matrix_csv(
        temperature_path, "temperature", bounds=TEMPERATURE_BOUNDS
    )
    prec_ids, precipitation = _read_matrix_csv(
        precipitation_path, "precipitation", bounds=(0.0, np.inf)
    )
    ids, names, lat, lon = _read_stations_csv(stations_path)
    if temp_ids != ids:
        raise ValueError(
            f"{temperature_path}: station columns do not match {stations_path}"
        )
    if prec_ids != ids:
        raise ValueError(
            f"{precipitation_path}: station columns do not match {stations_path}"
        )
    return WeatherDataset(
        station_ids=tuple(ids),
        station_names=tuple(names),
        latitude=lat,
        longitude=lon,
        day_grid=SampledGrid.uniform(N_DAYS, 1.0, float(N_DAYS)),
        temperature=temperature,
        precipitation=precipitation,
    )


@dataclass(frozen=True)
class ScenarioResult:
    """Leading multivariate components of one truncation scenario.

    `eigenfunctions[j]` stacks the reported components' blocks for feature j
    (temperature first). `scores` holds all estimable multivariate scores of
    the stations. `fewer_than_requested` flags scenarios whose truncation
    admits fewer components than asked for.
    """

    scenario_id: int
    truncations: Tuple[int, int]
    eigenvalues: np.ndarray
    eigenfunctions: Tuple[np.ndarray, np.ndarray]
    scores: np.ndarray
    day_grid: SampledGrid
    fewer_than_requested: bool


def run_scenario(
    data: WeatherDataset,
    m_temperature: int,
    m_precipitation: int,
    scenario_id: int = 1,
    n_report: int = 4,
) -> ScenarioResult:
    """Smooth, decompose, and report the first components of one scenario.

    Both features are projected onto a cubic B-spline basis with
    :data:`SMOOTHING_BASIS_SIZE` functions before the decomposition; the
    first ``min(n_report, M_1 + M_2)`` multivariate components are reported.
    """
    if m_temperature < 1 or m_precipitation < 1:
        raise ValueError("both truncations must be at least 1")
    design = bspline_design(data.day_grid, SMOOTHING_BASIS_SIZE, degree=3)
    sample = data.to_sample()
    smoothed = [smooth_to_basis(feat, design) for feat in sample.features]

    model = MultivariateFPCA(
        n_components=(m_temperature, m_precipitation),
        grids=(data.day_grid, data.day_grid),
    )
    model.fit([feat.values for feat in smoothed])

    total = model.truncation_.total
    n_out = min(n_report, total)
    fewer = n_out < n_report
    if fewer:
        warnings.warn(
            f"scenario {scenario_id}: only {n_out} multivariate components "
            f"are estimable with truncations "
            f"({m_temperature}, {m_precipitation})",
            stacklevel=2,
        )
    reported = model.system_.truncated(n_out)
    return ScenarioResult(
        scenario_id=scenario_id,
        truncations=(m_temperature, m_precipitation),
        eigenvalues=reported.eigenvalues,
        eigenfunctions=(reported.eigenfunctions[0], reported.eigenfunctions[1]),
        scores=model.scores_,
        day_grid=data.day_grid,
        fewer_than_requested=fewer,
    )


def align_scenario_signs(
    reference: ScenarioResult, other: ScenarioResult
) -> ScenarioResult:
    """Flip `other`'s components to best match `reference` for comparison.

    Component m is negated when its product-space inner product with the
    reference component m is negative. Only comparable components (present
    in both results) are touched.
    """
    weights = [trapezoid_weights(other.day_grid)] * 2
    n_common = min(reference.eigenvalues.size, other.eigenvalues.size)
    temp = np.array(other.eigenfunctions[0])
    prec = np.array(other.eigenfunctions[1])
    scores = np.array(other.scores)
    for m in range(n_common):
        ip = inner_product_multi(
            [reference.eigenfunctions[0][m], reference.eigenfunctions[1][m]],
            [temp[m], prec[m]],
            weights,
        )
        if ip < 0:
            temp[m] *= -1.0
            prec[m] *= -1.0
            if m < scores.shape[1]:
                scores[:, m] *= -1.0
    return ScenarioResult(
        scenario_id=other.scenario_id,
        truncations=other.truncations,
        eigenvalues=other.eigenvalues,
        eigenfunctions=(temp, prec),
        scores=scores,
        day_grid=other.day_grid,
        fewer_than_requested=other.fewer_than_requested,
    )


def export_table(
    results: Sequence[ScenarioResult], path: PathLike, header_lines: Sequence[str] = ()
) -> None:
    """Write scenario eigenvalues as CSV rows (scenario, rank, eigenvalue)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario", "rank", "eigenvalue"])
        for result in results:
            for rank, value in enumerate(result.eigenvalues, start=1):
                writer.writerow([result.scenario_id, rank, float(value)])


def export_eigenfunctions(
    results: Sequence[ScenarioResult], path: PathLike, header_lines: Sequence[str] = ()
) -> None:
    """Write eigenfunction curves as long-format CSV rows
    (scenario, component, feature, day, value), ready for plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario", "component", "feature", "day", "value"])
        for result in results:
            days = result.day_grid.points
            for m in range(result.eigenvalues.size):
                for feature_name, block in zip(FEATURE_NAMES, result.eigenfunctions):
                    for day, value in zip(days, block[m]):
                        writer.writerow(
                            [
                                result.scenario_id,
                                m + 1,
                                feature_name,
                                int(day),
                                float(value),
                            ]
                        )
