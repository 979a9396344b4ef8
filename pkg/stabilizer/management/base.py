import hashlib
import logging
import os

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from stabilizer.exceptions import NumericalError
from stabilizer.models import ExperimentRun, RunStatus
from stabilizer.parsers.config_parser import ExperimentConfigParser

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_NO_GUARANTEE = 4
EXIT_UNEXPECTED = 5


def error_text(error: Exception) -> str:
    if isinstance(error, ValidationError):
        return '; '.join(error.messages)
    return str(error)


class ExperimentCommand(BaseCommand):
    """
    Shared handling for commands driven by an experiment config file:
    parsing, duplicate detection, the run registry and the exit-code contract.
    Subclasses set `command_name` and implement `run_experiment`.
    """
    command_name = ''

    def add_arguments(self, parser):
        parser.add_argument(
            'config_path',
            type=str,
            help='Path to the experiment config file'
        )
        parser.add_argument(
            '--output-dir',
            type=str,
            default=None,
            help='Directory for the written artifacts'
        )
        parser.add_argument(
            '--workers',
            type=int,
            default=None,
            help='Maximum number of concurrent runs'
        )
        parser.add_argument(
            '--dry-run',
            action='store_true',
            help='Parse and validate the config without computing anything'
        )
        parser.add_argument(
            '--force',
            action='store_true',
            help='Run again even if this config was already processed'
        )

    def overrides(self, options) -> dict:
        return {}

    def handle(self, *args, **options):
        path = options['config_path']
        if not os.path.isfile(path):
            raise CommandError(f"Config file not found: {path}", returncode=EXIT_VALIDATION)

        overrides = self.overrides(options)
        parser = ExperimentConfigParser()
        config, file_hash = parser.parse_file(path, overrides)
        for warning in parser.warnings:
            self.stdout.write(self.style.WARNING(f"  - {warning}"))
        if config is None:
            for error in parser.errors:
                self.stdout.write(self.style.ERROR(f"  - {error}"))
            raise CommandError(
                f"Invalid config {path}: {len(parser.errors)} error(s)", returncode=EXIT_VALIDATION
            )

        config_hash = self._config_hash(file_hash, overrides)
        if not options['force']:
            existing = ExperimentRun.objects.filter(config_hash=config_hash, command=self.command_name).first()
            if existing:
                self.stdout.write(
                    self.style.WARNING(
                        f"Config {config.name} already processed by {self.command_name} on {existing.started_at}. "
                        "Use --force to run again."
                    )
                )
                return

        if options['dry_run']:
            self.stdout.write(f"Dry run: config {config.name} is valid")
            return

        output_dir = self._output_dir(config, options)
        with open(path, 'r', encoding='utf-8') as handle:
            config_text = handle.read()
        run, _ = ExperimentRun.objects.update_or_create(
            config_hash=config_hash,
            command=self.command_name,
            defaults={
                'name': config.name,
                'config_text': config_text,
                'status': RunStatus.RUNNING,
                'started_at': timezone.now(),
                'output_dir': output_dir,
                'error_message': None,
            }
        )

        self.stdout.write(f"Running {self.command_name} for {config.name}...")
        try:
            self.run_experiment(config, run, output_dir, options)
        except (ValidationError, NumericalError) as e:
            returncode = EXIT_VALIDATION if isinstance(e, ValidationError) else EXIT_NUMERICAL
            run.status = RunStatus.FAILED
            run.error_message = error_text(e)
            run.save()
            logger.error(f"{self.command_name} failed for {config.name}: {run.error_message}")
            raise CommandError(run.error_message, returncode=returncode)
        except CommandError as e:
            run.status = RunStatus.FAILED
            run.error_message = str(e)
            run.save()
            raise
        except Exception as e:
            run.status = RunStatus.FAILED
            run.error_message = f"{type(e).__name__}: {e}"
            run.save()
            logger.exception(f"{self.command_name} failed unexpectedly for {config.name}")
            raise CommandError(run.error_message, returncode=EXIT_UNEXPECTED)

        run.status = RunStatus.COMPLETED
        run.save()
        self.stdout.write(self.style.SUCCESS(f"Artifacts written to {output_dir}"))
        self.finish(run)

    def run_experiment(self, config, run: ExperimentRun, output_dir: str, options):
        raise NotImplementedError

    def finish(self, run: ExperimentRun):
        """Hook for commands whose exit code depends on the computed result"""

    def record_experiment(self, run: ExperimentRun, experiment):
        certificate = experiment.certificate
        run.basis_size = experiment.basis.size
        run.lambda_min = experiment.system.lambda_min
        run.margin = certificate.margin
        run.decay_rate = certificate.mu
        run.certificate_valid = certificate.valid

    def workers(self, options) -> int:
        workers = options.get('workers') or settings.STABILIZER_DEFAULT_WORKERS
        if workers < 1:
            raise CommandError("--workers must be at least 1", returncode=EXIT_VALIDATION)
        return workers

    def _config_hash(self, file_hash: str, overrides: dict) -> str:
        if not overrides:
            return file_hash
        text = file_hash + ''.join(f"\n{k}={v}" for k, v in sorted(overrides.items()))
        return hashlib.sha256(text.encode('utf-8')).hexdigest()

    def _output_dir(self, config, options) -> str:
        if options.get('output_dir'):
            return options['output_dir']
        if config.output.directory:
            return config.output.directory
        return os.path.join(settings.STABILIZER_OUTPUT_DIR, config.name, self.command_name)
