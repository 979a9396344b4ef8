import hashlib
import logging
import math
from dataclasses import fields, is_dataclass
from typing import Callable, Dict, List, Optional, Tuple

from django.core.exceptions import ValidationError

from stabilizer.config import (
    BasisConfig,
    CurveConfig,
    ExperimentConfig,
    FieldConfig,
    GridConfig,
    InitialConfig,
    InitialCoordinates,
    MaterialConfig,
    OutputConfig,
    Profile,
    SensitivityKind,
    StabilityConfig,
    SweepConfig,
)
from stabilizer.gpc import IndexSetKind, PolynomialFamily, default_node_count, index_set_cardinality, _index_set_cap
from stabilizer.randfield import KernelKind

logger = logging.getLogger(__name__)


def _finite(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"must be finite, got {value}")
    return value


def _float_list(text: str) -> Tuple[float, ...]:
    parts = [p.strip() for p in text.split(',')]
    if parts == ['']:
        return ()
    return tuple(_finite(p) for p in parts)


def _text_list(text: str) -> Tuple[str, ...]:
    return tuple(p.strip() for p in text.split(',') if p.strip())


def _boolean(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ('true', 'yes', 'on', '1'):
        return True
    if lowered in ('false', 'no', 'off', '0'):
        return False
    raise ValueError(f"expected true or false, got '{text}'")


def _choice(choices) -> Callable[[str], str]:
    def convert(text: str) -> str:
        value = text.strip().lower()
        if value not in choices.values:
            raise ValueError(f"expected one of {', '.join(choices.values)}, got '{text}'")
        return value
    return convert


def _optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ('', 'auto', 'none') else int(text)


CURVE_KEYS = {
    'u0': _finite, 'temperature': _finite, 'omega0': _finite, 'recovery_c': _finite,
    'rate_sensitivity': _finite, 'activation_energy': _finite, 'gas_constant': _finite,
    'strain_rate': _finite, 'sigma0': _finite, 'alpha': _finite, 'shear_modulus': _finite,
    'burgers_vector': _finite, 'rho_init': _finite, 'strain_end': _finite, 'strain_points': int,
    'critical_strain': _finite, 'saturation_strain': _finite, 'drx_kappa': _finite, 'drx_q': _finite,
}


class ExperimentConfigParser:
    """Parser for block/key-value experiment configuration files"""

    # block -> key -> converter
    SCHEMA = {
        'experiment': {'name': str},
        'basis': {
            'family': _choice(PolynomialFamily),
            'dimensions': int,
            'order': int,
            'index_set': _choice(IndexSetKind),
            'quadrature_nodes': _optional_int,
        },
        'field': {
            'kernel': _choice(KernelKind),
            'variance': _finite,
            'length_scale': _finite,
            'smoothness': _finite,
            'measurement_locations': _float_list,
            'measurement_values': _float_list,
            'quadrature_points': _optional_int,
        },
        'material': dict({
            'elastic_modulus': _finite,
            'desired_stress': _finite,
            'desired_velocity': _finite,
            'sensitivity': _choice(SensitivityKind),
            'sensitivity_factor': _finite,
            'sensitivity_value': _finite,
            'kappa_left': _finite,
            'kappa_right': _finite,
            'subtract_elastic': _boolean,
        }, **CURVE_KEYS),
        'stability': {
            'mu_hat': _finite,
            'h_plus': _float_list,
            'h_minus': _float_list,
            'optimize_scaling': _boolean,
        },
        'grid': {
            'length': _finite,
            'cells': int,
            'dx': _finite,
            'cfl': _finite,
            't_end': _finite,
        },
        'initial': {
            'coordinates': _choice(InitialCoordinates),
            'profile_plus': _choice(Profile),
            'profile_minus': _choice(Profile),
            'amplitude_plus': _finite,
            'amplitude_minus': _finite,
            'wavenumber': _finite,
        },
        'output': {
            'directory': str,
            'cadence': int,
        },
        'sweep': {
            'parameter': str,
            'values': _text_list,
        },
    }

    REQUIRED_BLOCKS = ('basis', 'material', 'stability', 'grid')

    # sweepable names beyond plain block.key pairs
    ALIASES = {'material.kappa': ('material.kappa_left', 'material.kappa_right')}

    def __init__(self):
        self.errors = []
        self.warnings = []

    def calculate_file_hash(self, filepath: str) -> str:
        """Calculate SHA256 hash of file for duplicate detection"""
        sha256_hash = hashlib.sha256()
        with open(filepath, "rb") as f:
            for byte_block in iter(lambda: f.read(4096), b""):
                sha256_hash.update(byte_block)
        return sha256_hash.hexdigest()

    def parse_file(self, filepath: str, overrides: Optional[Dict[str, str]] = None) -> Tuple[Optional[ExperimentConfig], str]:
        """
        Parse an experiment config file
        Returns: (config or None when errors were found, file_hash)
        """
        file_hash = self.calculate_file_hash(filepath)
        with open(filepath, 'r', encoding='utf-8') as file:
            text = file.read()
        default_name = filepath.replace('\\', '/').rsplit('/', 1)[-1].rsplit('.', 1)[0]
        config = self.parse_text(text, default_name, overrides)
        logger.info(f"Parsed {filepath} with {len(self.errors)} errors and {len(self.warnings)} warnings")
        return config, file_hash

    def parse_text(self, text: str, default_name: str = 'experiment', overrides: Optional[Dict[str, str]] = None) -> Optional[ExperimentConfig]:
        blocks = self._read_blocks(text)
        if overrides:
            self._apply_overrides(blocks, overrides)
        if self.errors:
            return None
        config = self._build(blocks, default_name)
        if self.errors:
            return None
        return config

    def validation_error(self) -> ValidationError:
        return ValidationError(list(self.errors))

    def _read_blocks(self, text: str) -> Dict[str, Dict[str, object]]:
        blocks: Dict[str, Dict[str, object]] = {}
        current = None

        for line_num, line in enumerate(text.splitlines(), start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue

            if line.startswith('[') and line.endswith(']'):
                name = line[1:-1].strip().lower()
                if name not in self.SCHEMA:
                    self.errors.append(f"Line {line_num}: Unknown block [{name}]")
                    current = None
                    continue
                if name in blocks:
                    self.errors.append(f"Line {line_num}: Duplicate block [{name}]")
                blocks.setdefault(name, {})
                current = name
                continue

            if '=' not in line:
                self.errors.append(f"Line {line_num}: Expected 'key = value', found '{line}'")
                continue

            if current is None:
                self.errors.append(f"Line {line_num}: Key outside of a known block")
                continue

            key, raw = (part.strip() for part in line.split('=', 1))
            value = self._convert(current, key.lower(), raw, line_num)
            if value is not None or key.lower() in self.SCHEMA[current]:
                if key.lower() in blocks[current]:
                    self.warnings.append(f"Line {line_num}: [{current}] {key} set twice, last value wins")
                blocks[current][key.lower()] = value

        return blocks

    def _convert(self, block: str, key: str, raw: str, line_num: Optional[int]) -> Optional[object]:
        where = f"Line {line_num}: " if line_num else ""
        converter = self.SCHEMA[block].get(key)
        if converter is None:
            self.errors.append(f"{where}Unknown key '{key}' in [{block}]")
            return None
        try:
            return converter(raw)
        except ValueError as e:
            self.errors.append(f"{where}{block}.{key}: invalid value '{raw}' ({e})")
            return None

    def _apply_overrides(self, blocks, overrides: Dict[str, str]):
        for name, raw in overrides.items():
            for target in self.ALIASES.get(name, (name,)):
                block, _, key = target.partition('.')
                if block not in self.SCHEMA or key not in self.SCHEMA[block]:
                    self.errors.append(f"Unknown parameter '{name}'")
                    continue
                value = self._convert(block, key, raw, None)
                blocks.setdefault(block, {})[key] = value

    def _build(self, blocks, default_name: str) -> Optional[ExperimentConfig]:
        for name in self.REQUIRED_BLOCKS:
            if name not in blocks:
                self.errors.append(f"Missing required block [{name}]")
        if self.errors:
            return None

        basis = self._section(BasisConfig, blocks['basis'], 'basis')
        random_field = self._section(FieldConfig, blocks['field'], 'field') if 'field' in blocks else None
        material = self._material(blocks['material'])
        stability = self._section(StabilityConfig, blocks['stability'], 'stability')
        grid = self._grid(blocks['grid'])
        initial = self._section(InitialConfig, blocks.get('initial', {}), 'initial')
        output = self._section(OutputConfig, blocks.get('output', {}), 'output')
        sweep = self._sweep(blocks['sweep']) if 'sweep' in blocks else None
        name = blocks.get('experiment', {}).get('name') or default_name
        if self.errors:
            return None

        config = ExperimentConfig(
            name=name,
            basis=basis,
            random_field=random_field,
            material=material,
            stability=stability,
            grid=grid,
            initial=initial,
            output=output,
            sweep=sweep,
        )
        self._validate(config)
        return None if self.errors else config

    def _section(self, cls, values: dict, block: str):
        known = {f.name for f in fields(cls)}
        try:
            return cls(**{k: v for k, v in values.items() if k in known})
        except TypeError as e:
            self.errors.append(f"[{block}] {e}")
            return None

    def _material(self, values: dict) -> Optional[MaterialConfig]:
        curve_values = {k: v for k, v in values.items() if k in CURVE_KEYS}
        plain = {k: v for k, v in values.items() if k not in CURVE_KEYS}
        kind = plain.get('sensitivity', SensitivityKind.PROPORTIONAL)
        curve = None
        if kind in (SensitivityKind.BERGSTROM, SensitivityKind.DRX):
            required = [f.name for f in fields(CurveConfig) if f.default is not None]
            missing = [k for k in required if k not in curve_values]
            if kind == SensitivityKind.DRX:
                missing += [k for k in ('critical_strain', 'saturation_strain', 'drx_kappa', 'drx_q') if k not in curve_values]
            if missing:
                self.errors.append(f"material: sensitivity = {kind} requires {', '.join(missing)}")
                return None
            curve = CurveConfig(**curve_values)
        elif curve_values:
            self.warnings.append(f"material: curve parameters ignored for sensitivity = {kind}")
        return MaterialConfig(curve=curve, **plain)

    def _grid(self, values: dict) -> Optional[GridConfig]:
        values = dict(values)
        dx = values.pop('dx', None)
        if dx is not None:
            length = values.get('length', GridConfig.length)
            cells = length / dx if dx > 0 else 0
            if dx <= 0 or abs(cells - round(cells)) > 1e-9 * max(cells, 1):
                self.errors.append(f"grid.dx: {dx} does not divide the length {length}")
                return None
            if 'cells' in values and values['cells'] != round(cells):
                self.errors.append("grid.cells: conflicts with grid.dx")
                return None
            values['cells'] = int(round(cells))
        return self._section(GridConfig, values, 'grid')

    def _sweep(self, values: dict) -> Optional[SweepConfig]:
        if 'parameter' not in values:
            self.errors.append("sweep.parameter: required")
            return None
        return SweepConfig(parameter=values['parameter'], values=tuple(values.get('values', ())))

    def _require(self, condition: bool, field_name: str, message: str):
        if not condition:
            self.errors.append(f"{field_name}: {message}")

    def _validate(self, config: ExperimentConfig):
        """Module preconditions checked before any computation starts"""
        basis = config.basis
        self._require(basis.dimensions >= 0, 'basis.dimensions', f"must be non-negative, got {basis.dimensions}")
        self._require(basis.order >= 0, 'basis.order', f"must be non-negative, got {basis.order}")
        M = max(basis.dimensions, 1)
        K = basis.order if basis.dimensions > 0 else 0
        if basis.quadrature_nodes is not None:
            self._require(
                basis.quadrature_nodes >= default_node_count(K), 'basis.quadrature_nodes',
                f"must be at least {default_node_count(K)} for order {K}",
            )
        size = index_set_cardinality(M, max(K, 0), basis.index_set) if K >= 0 else 0
        self._require(size <= _index_set_cap(), 'basis.index_set', f"{size} modes exceed the cap of {_index_set_cap()}")

        random_field = config.random_field
        if random_field is not None:
            self._require(random_field.variance > 0, 'field.variance', "must be positive")
            self._require(random_field.length_scale > 0, 'field.length_scale', "must be positive")
            if random_field.kernel == KernelKind.MATERN:
                self._require(
                    random_field.smoothness is not None and random_field.smoothness > 0,
                    'field.smoothness', "a positive smoothness is required for the matern kernel",
                )
            self._require(
                len(random_field.measurement_locations) == len(random_field.measurement_values),
                'field.measurement_values', "must have as many entries as measurement_locations",
            )
            self._require(
                len(set(random_field.measurement_locations)) == len(random_field.measurement_locations),
                'field.measurement_locations', "must be pairwise distinct",
            )
            self._require(
                all(0 <= x <= config.grid.length for x in random_field.measurement_locations),
                'field.measurement_locations', "must lie inside [0, length]",
            )
            if random_field.quadrature_points is not None:
                self._require(random_field.quadrature_points >= 4 * M, 'field.quadrature_points', f"must be at least 4M = {4 * M}")
            self._require(basis.family == PolynomialFamily.HERMITE, 'basis.family', "a Gaussian [field] needs the hermite family")
            self._require(K >= 1, 'basis.order', "a [field] needs order >= 1")

        material = config.material
        self._require(material.elastic_modulus > 0, 'material.elastic_modulus', "must be positive")
        self._require(material.kappa_left != -1, 'material.kappa_left', "must differ from -1")
        self._require(material.kappa_right != -1, 'material.kappa_right', "must differ from -1")
        if material.sensitivity == SensitivityKind.PROPORTIONAL:
            self._require(material.sensitivity_factor is not None, 'material.sensitivity_factor', "required")
        if material.sensitivity == SensitivityKind.CONSTANT:
            self._require(material.sensitivity_value is not None, 'material.sensitivity_value', "required")
        if material.curve is not None:
            for f in fields(CurveConfig):
                value = getattr(material.curve, f.name)
                self._require(value is None or value > 0, f"material.{f.name}", "must be positive")
            self._require(material.curve.strain_points >= 3, 'material.strain_points', "must be at least 3")

        stability = config.stability
        self._require(stability.mu_hat >= 0, 'stability.mu_hat', "must be non-negative")
        for name in ('h_plus', 'h_minus'):
            values = getattr(stability, name)
            self._require(len(values) in (1, size), f"stability.{name}", f"needs 1 or {size} entries")
            self._require(all(v > 0 for v in values), f"stability.{name}", "entries must be positive")

        grid = config.grid
        self._require(grid.length > 0, 'grid.length', "must be positive")
        self._require(grid.cells >= 1, 'grid.cells', "must be at least 1")
        self._require(0 < grid.cfl <= 1, 'grid.cfl', "must lie in (0, 1]")
        self._require(grid.t_end >= 0 and math.isfinite(grid.t_end), 'grid.t_end', "must be non-negative")

        self._require(config.initial.wavenumber >= 0, 'initial.wavenumber', "must be non-negative")
        self._require(config.output.cadence >= 0, 'output.cadence', "must be non-negative")

        if config.sweep is not None:
            self._require(len(config.sweep.values) > 0, 'sweep.values', "at least one value is required")
            self.check_parameter(config.sweep.parameter, 'sweep.parameter')

    def check_parameter(self, name: str, field_name: str = 'parameter') -> bool:
        targets = self.ALIASES.get(name, (name,))
        for target in targets:
            block, _, key = target.partition('.')
            if block not in self.SCHEMA or key not in self.SCHEMA[block] or block == 'sweep':
                self.errors.append(f"{field_name}: unknown parameter '{name}'")
                return False
        return True


def _format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ', '.join(_format_value(v) for v in value)
    return str(value)


def _render_block(name: str, section) -> List[str]:
    lines = [f"[{name}]"]
    for f in fields(section):
        value = getattr(section, f.name)
        if value is None or is_dataclass(value):
            continue
        lines.append(f"{f.name} = {_format_value(value)}")
    return lines


def render_config(config: ExperimentConfig) -> str:
    """Config echo that parses back to an equivalent config"""
    lines = ["[experiment]", f"name = {config.name}", ""]
    lines += _render_block('basis', config.basis) + [""]
    if config.random_field is not None:
        lines += _render_block('field', config.random_field) + [""]
    lines += _render_block('material', config.material)
    if config.material.curve is not None:
        lines += _render_block('material', config.material.curve)[1:]
    lines.append("")
    for name in ('stability', 'grid', 'initial', 'output'):
        lines += _render_block(name, getattr(config, name)) + [""]
    if config.sweep is not None:
        lines += _render_block('sweep', config.sweep) + [""]
    return "\n".join(lines)
