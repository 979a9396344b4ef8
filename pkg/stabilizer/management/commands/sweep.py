import logging
import os
from concurrent.futures import ThreadPoolExecutor

from django.core.exceptions import ValidationError
from django.db import transaction

from stabilizer.exceptions import NumericalError
from stabilizer.management.base import ExperimentCommand, error_text
from stabilizer.models import RunStatus, SweepPoint
from stabilizer.parsers.config_parser import ExperimentConfigParser
from stabilizer.reports import write_metadata, write_sweep_summary, write_timeseries
from stabilizer.solver import run as run_simulation

logger = logging.getLogger(__name__)


def run_point(config_text: str, name: str, parameter: str, value: str, directory: str) -> dict:
    """One independent simulation of a sweep; never raises for per-value failures"""
    row = {'value': value, 'status': RunStatus.FAILED, 'margin': None, 'decay_rate': None, 'final_normalized': None, 'error': None}
    parser = ExperimentConfigParser()
    config = parser.parse_text(config_text, name, {parameter: value})
    if config is None:
        row['error'] = '; '.join(parser.errors)
        return row
    try:
        result = run_simulation(config)
        write_timeseries(directory, result.series)
        write_metadata(directory, result.experiment, 'sweep', {parameter: value})
    except (ValidationError, NumericalError) as e:
        row['error'] = error_text(e)
        logger.warning(f"Sweep point {parameter}={value} failed: {row['error']}")
        return row
    except Exception as e:
        row['error'] = f"{type(e).__name__}: {e}"
        logger.exception(f"Sweep point {parameter}={value} failed unexpectedly")
        return row

    certificate = result.experiment.certificate
    row.update(
        status=RunStatus.COMPLETED,
        margin=certificate.margin,
        decay_rate=certificate.mu,
        final_normalized=result.series.final_normalized,
    )
    return row


class Command(ExperimentCommand):
    help = 'Run one simulation per value of a config parameter, concurrently'
    command_name = 'sweep'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--parameter',
            type=str,
            default=None,
            help="Swept parameter as block.key, e.g. material.desired_stress"
        )
        parser.add_argument(
            '--values',
            type=str,
            default=None,
            help='Comma separated values of the swept parameter'
        )

    def overrides(self, options) -> dict:
        overrides = {}
        if options.get('parameter') is not None:
            overrides['sweep.parameter'] = options['parameter']
            overrides['sweep.values'] = options.get('values') or ''
        elif options.get('values') is not None:
            overrides['sweep.values'] = options['values']
        return overrides

    def run_experiment(self, config, run, output_dir, options):
        if config.sweep is None:
            raise ValidationError("sweep.parameter: a [sweep] block or --parameter is required")
        parameter, values = config.sweep.parameter, config.sweep.values
        workers = min(self.workers(options), len(values))
        self.stdout.write(f"Sweeping {parameter} over {len(values)} value(s) with {workers} worker(s)")

        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    run_point, run.config_text, config.name, parameter, value,
                    os.path.join(output_dir, f"{index:03d}_{value}"),
                )
                for index, value in enumerate(values)
            ]
            rows = [future.result() for future in futures]

        with transaction.atomic():
            run.points.all().delete()
            SweepPoint.objects.bulk_create([
                SweepPoint(
                    run=run,
                    parameter=parameter,
                    value=row['value'],
                    position=index,
                    status=row['status'],
                    margin=row['margin'],
                    decay_rate=row['decay_rate'],
                    final_normalized_lyapunov=row['final_normalized'],
                    error_message=row['error'],
                )
                for index, row in enumerate(rows)
            ])

        write_sweep_summary(output_dir, parameter, rows)
        failed = 0
        for row in rows:
            if row['status'] == RunStatus.COMPLETED:
                self.stdout.write(
                    f"{parameter} = {row['value']}: margin {row['margin']:.6g}, mu {row['decay_rate']:.6g}, "
                    f"final L {row['final_normalized']:.6e}"
                )
            else:
                failed += 1
                self.stdout.write(self.style.ERROR(f"{parameter} = {row['value']}: failed ({row['error']})"))
        self.stdout.write(f"Sweep complete: {len(rows) - failed} succeeded, {failed} failed")
