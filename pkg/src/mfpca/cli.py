"""Command line entry points: the two replication studies, the weather
case study, and a general decomposition pipeline for CSV samples."""

from __future__ import annotations

import configparser
import csv
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
from click.core import ParameterSource

from . import __version__
from .basis import bspline_design, smooth_to_basis
from .fdata import MultivariateFunctionalSample
from .multivariate import MultivariateFPCA, variance_report
from .numerics import SampledGrid
from .simulation import run_error_study, run_npc_study
from .weather import export_eigenfunctions, export_table, load_weather, run_scenario

# Parameters that never influence computed results; they stay out of the
# provenance header so reports are byte-identical across thread counts.
_NON_RESULT_PARAMS = {"out", "threads", "config"}


def _merged_params(ctx: click.Context) -> Dict[str, object]:
    """Apply config-file values beneath explicit flags and return the params.

    The config file is INI-style with one section per command; keys are the
    long option names. Flags always win over file values.
    """
    params = dict(ctx.params)
    path = params.get("config")
    if path is None:
        return params
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise click.ClickException(f"cannot read config file {path}: {exc}")
    except configparser.Error as exc:
        raise click.ClickException(f"cannot parse config file {path}: {exc}")
    section = ctx.command.name
    if not parser.has_section(section):
        return params
    options = {}
    for param in ctx.command.params:
        if not isinstance(param, click.Option) or param.name == "config":
            continue
        flag = next((o for o in param.opts if o.startswith("--")), f"--{param.name}")
        options[flag.lstrip("-")] = param
    for key, raw in parser.items(section):
        if key not in options:
            raise click.UsageError(
                f"unknown config key {key!r} in [{section}]; valid keys: "
                + ", ".join(sorted(options))
            )
        param = options[key]
        if ctx.get_parameter_source(param.name) == ParameterSource.DEFAULT:
            params[param.name] = _convert_config_value(param, raw)
    return params


def _convert_config_value(param: click.Option, raw: str):
    values = [v.strip() for v in raw.split(",") if v.strip()] if param.multiple else None
    try:
        if param.multiple:
            return tuple(param.type.convert(v, param, None) for v in values)
        return param.type.convert(raw.strip(), param, None)
    except click.ClickException as exc:
        raise click.UsageError(
            f"config key {param.name!r}: {exc.format_message()}"
        ) from None


def _provenance(command: str, params: Dict[str, object]) -> List[str]:
    parts = [f"mfpca {__version__}", f"command={command}"]
    for key in sorted(params):
        if key in _NON_RESULT_PARAMS or params[key] is None:
            continue
        value = params[key]
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        parts.append(f"{key}={value}")
    return [" ".join(parts)]


def _out_dir(params: Dict[str, object]) -> Path:
    out = Path(str(params.get("out") or "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise click.ClickException(f"cannot create output directory {out}: {exc}")
    return out


def _default_threads() -> int:
    return os.cpu_count() or 1


@click.group(invoke_without_command=True)
@click.version_option(__version__, prog_name="mfpca")
@click.pass_context
def main(ctx: click.Context) -> None:
    """Multivariate functional PCA toolkit.

    Runs the truncation replication studies, the Canadian weather case
    study, and a general decomposition pipeline over CSV samples.
    """
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        ctx.exit(2)


def _study_options(command):
    decorators = [
        click.option("--n", "n_values", multiple=True, type=int, default=(25, 50, 100),
                     show_default=True, help="Observation counts of the study grid."),
        click.option("--s", "s_values", multiple=True, type=int, default=(25, 50, 100),
                     show_default=True, help="Sampling-point counts of the study grid."),
        click.option("--reps", type=int, default=500, show_default=True,
                     help="Replications per grid cell."),
        click.option("--seed", type=int, default=0, show_default=True,
                     help="Base seed; all randomness derives from it."),
        click.option("--threads", type=int, default=_default_threads,
                     help="Parallel workers (results do not depend on this)."),
        click.option("--out", type=click.Path(file_okay=False), default=".",
                     show_default=True, help="Output directory."),
        click.option("--config", type=click.Path(dir_okay=False), default=None,
                     help="INI config file with one section per command."),
    ]
    for decorator in reversed(decorators):
        command = decorator(command)
    return command


@main.command("simulate-errors")
@click.option("--mj", "truncations", multiple=True, type=int, default=(5, 10),
              show_default=True,
              help="Uniform univariate truncation per study arm (repeatable).")
@click.option("--m-max", type=int, default=25, show_default=True,
              help="Number of leading multivariate eigenvalues to score.")
@_study_options
@click.pass_context
def simulate_errors(ctx: click.Context, **_: object) -> None:
    """Replicate the fixed-truncation eigenvalue error study."""
    params = _merged_params(ctx)
    header = _provenance("simulate-errors", params)
    out = _out_dir(params)
    try:
        report = run_error_study(
            n_values=params["n_values"],
            s_values=params["s_values"],
            truncations=params["truncations"],
            replications=params["reps"],
            base_seed=params["seed"],
            n_jobs=params["threads"],
            m_max=params["m_max"],
        )
        report.write_csv(out / "eigenvalue_errors.csv", header_lines=header)
        report.write_json(out / "eigenvalue_errors.json")
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {out / 'eigenvalue_errors.csv'} and {out / 'eigenvalue_errors.json'}")


@main.command("simulate-npc")
@click.option("--alpha", "alphas", multiple=True, type=float,
              default=(50.0, 70.0, 90.0, 95.0, 99.0), show_default=True,
              help="Variance-explained levels in percent (repeatable).")
@_study_options
@click.pass_context
def simulate_npc(ctx: click.Context, **_: object) -> None:
    """Replicate the variance-explained component selection study."""
    params = _merged_params(ctx)
    header = _provenance("simulate-npc", params)
    out = _out_dir(params)
    try:
        report = run_npc_study(
            n_values=params["n_values"],
            s_values=params["s_values"],
            alphas=params["alphas"],
            replications=params["reps"],
            base_seed=params["seed"],
            n_jobs=params["threads"],
        )
        report.write_csv(out / "npc_selection.csv", header_lines=header)
        report.write_json(out / "npc_selection.json")
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {out / 'npc_selection.csv'} and {out / 'npc_selection.json'}")


@main.command("weather")
@click.option("--temperature", type=click.Path(dir_okay=False), default=None,
              help="Temperature CSV (defaults to the bundled dataset).")
@click.option("--precipitation", type=click.Path(dir_okay=False), default=None,
              help="Precipitation CSV (defaults to the bundled dataset).")
@click.option("--stations", type=click.Path(dir_okay=False), default=None,
              help="Station metadata CSV (defaults to the bundled dataset).")
@click.option("--out", type=click.Path(file_okay=False), default=".",
              show_default=True, help="Output directory.")
@click.option("--config", type=click.Path(dir_okay=False), default=None,
              help="INI config file with one section per command.")
@click.pass_context
def weather(ctx: click.Context, **_: object) -> None:
    """Run the two weather truncation scenarios and export their results."""
    params = _merged_params(ctx)
    header = _provenance("weather", params)
    out = _out_dir(params)
    try:
        data = load_weather(
            temperature_path=params["temperature"],
            precipitation_path=params["precipitation"],
            stations_path=params["stations"],
        )
        scenario_1 = run_scenario(data, 2, 2, scenario_id=1)
        scenario_2 = run_scenario(data, 4, 4, scenario_id=2)
        export_table([scenario_1, scenario_2], out / "table2.csv", header_lines=header)
        export_eigenfunctions(
            [scenario_1, scenario_2], out / "eigenfunctions.csv", header_lines=header
        )
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    for result in (scenario_1, scenario_2):
        values = ", ".join(f"{v:.1f}" for v in result.eigenvalues)
        click.echo(f"scenario {result.scenario_id} eigenvalues: {values}")
    click.echo(f"wrote {out / 'table2.csv'} and {out / 'eigenfunctions.csv'}")


def _read_feature_csv(path: str) -> Tuple[List[str], np.ndarray]:
    """Read one feature of a generalized weather-style sample.

    The header names the observations; each subsequent row holds their
    values at one grid point. Returns the observation ids and the
    (n_obs, n_points) value matrix.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            ids = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        if len(ids) < 2:
            raise ValueError(f"{path}: need at least 2 observation columns")
        rows = []
        for i, row in enumerate(reader):
            if len(row) != len(ids):
                raise ValueError(
                    f"{path}: row {i + 2} has {len(row)} values, expected {len(ids)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValueError(f"{path}: row {i + 2} contains a non-numeric value") from None
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 grid rows")
    matrix = np.array(rows).T
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"{path}: values must be finite")
    return ids, matrix


def _parse_truncations(text: Optional[str], n_features: int) -> Optional[Tuple[int, ...]]:
    if text is None:
        return None
    try:
        counts = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise click.UsageError(f"--mj expects comma-separated integers, got {text!r}")
    if len(counts) == 1:
        counts = counts * n_features
    if len(counts) != n_features:
        raise click.UsageError(
            f"--mj lists {len(counts)} truncations for {n_features} input features"
        )
    return counts


def _write_rows(path: Path, header_lines: Sequence[str], fieldnames: Sequence[str],
                rows: Sequence[Dict[str, object]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


@main.command("mfpca-run")
@click.option("--input", "inputs", multiple=True, required=True,
              type=click.Path(dir_okay=False),
              help="One CSV per feature (weather-style schema).")
@click.option("--mj", default=None,
              help="Comma-separated univariate truncations, one per feature "
                   "(a single value is broadcast). Defaults to the full spectrum.")
@click.option("--smooth", type=int, default=None,
              help="Pre-smooth each feature with this many cubic B-splines.")
@click.option("--alpha", "alphas", multiple=True, type=float,
              default=(50.0, 70.0, 90.0, 95.0, 99.0), show_default=True,
              help="Levels for the component-count report (repeatable).")
@click.option("--out", type=click.Path(file_okay=False), default=".",
              show_default=True, help="Output directory.")
@click.option("--config", type=click.Path(dir_okay=False), default=None,
              help="INI config file with one section per command.")
@click.pass_context
def mfpca_run(ctx: click.Context, **_: object) -> None:
    """Decompose a multivariate functional sample given as CSV files.

    Each input file holds one feature: a header of observation names over
    one row per grid point. The grid is taken to be the row index, matching
    the weather files' day-of-year numbering.
    """
    params = _merged_params(ctx)
    header = _provenance("mfpca-run", params)
    out = _out_dir(params)
    inputs = params["inputs"]
    try:
        features = []
        obs_ids: Optional[List[str]] = None
        for path in inputs:
            ids, matrix = _read_feature_csv(path)
            if obs_ids is None:
                obs_ids = ids
            elif ids != obs_ids:
                raise ValueError(
                    f"{path}: observation columns do not match {inputs[0]}"
                )
            features.append(matrix)
        grids = [SampledGrid.uniform(mat.shape[1], 1.0, float(mat.shape[1]))
                 for mat in features]
        smooth = params["smooth"]
        if smooth is not None:
            sample = MultivariateFunctionalSample.from_arrays(features, grids=grids)
            features = [
                smooth_to_basis(feat, bspline_design(feat.grid, smooth, degree=3)).values
                for feat in sample.features
            ]
        truncations = _parse_truncations(params["mj"], len(features))
        model = MultivariateFPCA(n_components=truncations, grids=grids)
        model.fit(features)

        reliable = model.reliable_count_
        def unreliable(component: int) -> bool:
            return component >= reliable

        eig_rows = [
            {"rank": m + 1, "eigenvalue": float(v), "unreliable": unreliable(m)}
            for m, v in enumerate(model.eigenvalues_)
        ]
        _write_rows(out / "eigenvalues.csv", header,
                    ["rank", "eigenvalue", "unreliable"], eig_rows)

        variance_rows = []
        npc_rows = []
        scopes = (
            ("all", model.eigenvalues_),
            ("reliable", model.eigenvalues_[:reliable]),
        )
        for scope, spectrum in scopes:
            report = variance_report(spectrum, params["alphas"])
            for m in range(spectrum.size):
                variance_rows.append(
                    {
                        "scope": scope,
                        "component": m + 1,
                        "eigenvalue": float(spectrum[m]),
                        "pve": float(report.component_pve[m]),
                        "cumulative_pve": float(report.cumulative_pve[m]),
                        "unreliable": scope == "all" and unreliable(m),
                    }
                )
            for alpha, npc in report.npc.items():
                npc_rows.append({"scope": scope, "alpha": alpha, "npc": npc})
        _write_rows(out / "variance.csv", header,
                    ["scope", "component", "eigenvalue", "pve", "cumulative_pve",
                     "unreliable"], variance_rows)
        _write_rows(out / "npc.csv", header, ["scope", "alpha", "npc"], npc_rows)

        func_rows = []
        for m in range(model.eigenvalues_.size):
            for j, block in enumerate(model.eigenfunctions_):
                for s, value in enumerate(block[m]):
                    func_rows.append(
                        {
                            "component": m + 1,
                            "feature": j + 1,
                            "grid_index": s + 1,
                            "value": float(value),
                            "unreliable": unreliable(m),
                        }
                    )
        _write_rows(out / "eigenfunctions.csv", header,
                    ["component", "feature", "grid_index", "value", "unreliable"],
                    func_rows)

        score_rows = []
        assert obs_ids is not None
        for n, obs in enumerate(obs_ids):
            for m in range(model.scores_.shape[1]):
                score_rows.append(
                    {
                        "observation": obs,
                        "component": m + 1,
                        "value": float(model.scores_[n, m]),
                        "unreliable": unreliable(m),
                    }
                )
        _write_rows(out / "scores.csv", header,
                    ["observation", "component", "value", "unreliable"], score_rows)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(
        f"wrote eigenvalues.csv, variance.csv, npc.csv, eigenfunctions.csv, "
        f"scores.csv to {out}"
    )


if __name__ == "__main__":
    main()
