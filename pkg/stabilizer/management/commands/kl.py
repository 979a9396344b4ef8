from django.core.exceptions import ValidationError

from stabilizer.management.base import ExperimentCommand
from stabilizer.material import sensitivity_from_config
from stabilizer.reports import write_field_band, write_kl_report
from stabilizer.solver import decompose_field, make_basis, make_grid


class Command(ExperimentCommand):
    help = 'Karhunen-Loeve decomposition of the configured random sensitivity field'
    command_name = 'kl'

    def run_experiment(self, config, run, output_dir, options):
        if config.random_field is None:
            raise ValidationError("field.kernel: a [field] block is required for the KL decomposition")

        grid = make_grid(config)
        basis = make_basis(config)
        sensitivity, _ = sensitivity_from_config(config.material)
        source, kl, explained = decompose_field(config, basis, grid, sensitivity)

        write_kl_report(output_dir, kl, explained)
        write_field_band(output_dir, source, kl)
        run.basis_size = basis.size

        self.stdout.write(f"eigenvalues = {', '.join(f'{d:.6e}' for d in kl.eigenvalues)}")
        self.stdout.write(f"explained_total = {explained.total:.6f}")
