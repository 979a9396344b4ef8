from stabilizer.management.base import ExperimentCommand
from stabilizer.reports import certificate_text, write_metadata, write_stress_strain, write_timeseries
from stabilizer.solver import run as run_simulation


class Command(ExperimentCommand):
    help = 'Simulate the stochastic Galerkin system under boundary feedback'
    command_name = 'simulate'

    def run_experiment(self, config, run, output_dir, options):
        result = run_simulation(config)
        experiment, series = result.experiment, result.series

        write_timeseries(output_dir, series)
        write_metadata(output_dir, experiment, self.command_name, {'samples': str(len(series))})
        if experiment.curve is not None:
            write_stress_strain(output_dir, *experiment.curve)
        self.record_experiment(run, experiment)
        run.final_normalized_lyapunov = series.final_normalized

        self.stdout.write(certificate_text(experiment))
        if not experiment.certificate.guarantees_decay:
            self.stdout.write(self.style.WARNING("No decay guarantee for this configuration"))
        self.stdout.write(f"final_L_normalized = {series.final_normalized:.12e}")
