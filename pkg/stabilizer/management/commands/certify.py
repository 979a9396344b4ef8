from django.core.management.base import CommandError

from stabilizer.management.base import EXIT_NO_GUARANTEE, ExperimentCommand
from stabilizer.material import kappa_for_rate, rate_estimate
from stabilizer.reports import certificate_text, write_certificate, write_metadata, write_stress_strain
from stabilizer.solver import assemble_experiment


class Command(ExperimentCommand):
    help = 'Assemble the Galerkin system and report its Lyapunov stability certificate'
    command_name = 'certify'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--gain-report',
            action='store_true',
            help='Also report the gain choice for the rate 2|sensitivity|'
        )

    def run_experiment(self, config, run, output_dir, options):
        experiment = assemble_experiment(config)
        write_certificate(output_dir, experiment)
        write_metadata(output_dir, experiment, self.command_name)
        if experiment.curve is not None:
            write_stress_strain(output_dir, *experiment.curve)
        self.record_experiment(run, experiment)

        self.stdout.write(certificate_text(experiment))
        material = config.material
        estimate = rate_estimate(experiment.sensitivity, config.stability.mu_hat, material.elastic_modulus, config.grid.length)
        self.stdout.write(f"deterministic_rate_estimate = {estimate:.12e}")
        if options.get('gain_report'):
            choice = kappa_for_rate(experiment.sensitivity, material.elastic_modulus, config.grid.length)
            self.stdout.write(choice.as_text())

    def finish(self, run):
        if not run.certificate_valid:
            raise CommandError(
                f"Dissipativity condition fails (margin {run.margin:.6g})", returncode=EXIT_NO_GUARANTEE
            )
        if run.decay_rate <= 0:
            raise CommandError(
                f"Certificate computed but guarantees no decay (mu = {run.decay_rate:.6g})", returncode=EXIT_NO_GUARANTEE
            )
        self.stdout.write(self.style.SUCCESS(f"Certificate valid: mu = {run.decay_rate:.6g}"))
