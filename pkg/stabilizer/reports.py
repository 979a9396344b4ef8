"""
Plain-text artifacts written by the management commands. Data files carry
no wall-clock content; the timestamp lives only in the metadata file.
"""
import logging
import os
from typing import Dict, List, Optional

import numpy as np
from django.utils import timezone

from .parsers.config_parser import render_config
from .randfield import ExplainedVariance, KLExpansion, confidence_band, gershgorin_check
from .solver import Experiment, TimeSeries

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.12e'


def _path(directory: str, name: str) -> str:
    os.makedirs(directory, exist_ok=True)
    return os.path.join(directory, name)


def write_table(path: str, header: List[str], columns: List[np.ndarray]) -> str:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt=FLOAT_FORMAT, delimiter=',', header=','.join(header), comments='')
    logger.debug(f"Wrote {data.shape[0]} rows to {path}")
    return path


def write_kl_report(directory: str, kl: KLExpansion, explained: ExplainedVariance) -> List[str]:
    """eigenvalues.csv, eigenfunctions.csv and explained_variance.csv"""
    M = kl.M
    written = [
        write_table(
            _path(directory, 'eigenvalues.csv'),
            ['index', 'eigenvalue'],
            [np.arange(1, M + 1), kl.eigenvalues],
        ),
        write_table(
            _path(directory, 'eigenfunctions.csv'),
            ['x'] + [f'phi_{m}' for m in range(1, M + 1)],
            [kl.nodes] + list(kl.eigenfunctions),
        ),
        write_table(
            _path(directory, 'explained_variance.csv'),
            ['x', 'ratio'],
            [explained.nodes, explained.pointwise],
        ),
    ]
    with open(_path(directory, 'explained_total.txt'), 'w', encoding='utf-8') as handle:
        handle.write(f"total_ratio = {explained.total:.12e}\n")
    written.append(os.path.join(directory, 'explained_total.txt'))
    return written


def certificate_text(experiment: Experiment) -> str:
    return experiment.system.summary() + experiment.certificate.as_text()


def write_certificate(directory: str, experiment: Experiment) -> str:
    path = _path(directory, 'certificate.txt')
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(certificate_text(experiment))
    return path


def timeseries_columns(series: TimeSeries):
    header = ['t', 'L', 'L_normalized']
    columns = [series.times, series.lyapunov, series.normalized]
    if series.envelope is not None:
        header.append('envelope')
        columns.append(series.envelope)
    means = np.array(series.stress_mean)
    variances = np.array(series.stress_variance)
    for i in range(series.grid.cells):
        header += [f'sigma_mean_{i}', f'sigma_var_{i}']
        columns += [means[:, i], variances[:, i]]
    return header, columns


def write_timeseries(directory: str, series: TimeSeries) -> List[str]:
    header, columns = timeseries_columns(series)
    return [
        write_table(_path(directory, 'timeseries.csv'), header, columns),
        write_table(
            _path(directory, 'actuation.csv'),
            ['t', 'velocity_left', 'velocity_right'],
            [series.times, series.actuation_left, series.actuation_right],
        ),
    ]


def write_stress_strain(directory: str, strain: np.ndarray, stress: np.ndarray) -> str:
    return write_table(_path(directory, 'stress_strain.csv'), ['strain', 'stress'], [strain, stress])


def write_metadata(directory: str, experiment: Experiment, command: str, extra: Optional[Dict[str, str]] = None) -> str:
    """Timestamp line, then the config echo, then the certificate report"""
    path = _path(directory, 'metadata.txt')
    lines = [f"# generated {timezone.now().isoformat()} by {command}"]
    for key, value in (extra or {}).items():
        lines.append(f"# {key} = {value}")
    lines.append("")
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write("\n".join(lines) + "\n")
        handle.write(render_config(experiment.config))
        handle.write("\n")
        handle.write("".join(f"# {line}\n" for line in certificate_text(experiment).splitlines()))
    return path


def read_config_echo(path: str) -> str:
    """Config portion of a metadata file: every line that is not a comment"""
    with open(path, 'r', encoding='utf-8') as handle:
        return "".join(line for line in handle if not line.startswith('#'))


def write_sweep_summary(directory: str, parameter: str, rows: List[dict]) -> str:
    path = _path(directory, 'sweep_summary.csv')
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(f"{parameter},status,margin,decay_rate,final_L_normalized,error\n")
        for row in rows:
            numbers = [
                '' if row.get(key) is None else FLOAT_FORMAT % row[key]
                for key in ('margin', 'decay_rate', 'final_normalized')
            ]
            error = (row.get('error') or '').replace(',', ';').replace('\n', ' ')
            handle.write(f"{row['value']},{row['status']},{','.join(numbers)},{error}\n")
    return path


def write_field_band(directory: str, field, kl: KLExpansion, level: float = 0.95) -> str:
    """Conditioned mean with its pointwise confidence band and the diagonal dominance flag"""
    x = kl.nodes
    lower, upper = confidence_band(field, x, level)
    dominant = gershgorin_check(field.mean, kl, x)
    return write_table(
        _path(directory, 'field_band.csv'),
        ['x', 'mean', 'lower', 'upper', 'diagonally_dominant'],
        [x, field.mean(x), lower, upper, dominant.astype(float)],
    )
