# Device parameter tables and config loading
# Frequencies in GHz (f, not 2*pi*f), times in ns, flux in units of the flux quantum

import json
import logging
import math
import os

from jsonschema import Draft7Validator, ValidationError
from jsonschema.exceptions import best_match

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised for malformed device or sweep config files."""


# ==================== BUILT-IN DEVICES ====================

# Three transmons in a chain, q1 and q2 flux-tunable; exchange coupling to q0
TUNABLE_QUBIT_DEVICE = {
    'scheme': 'tunable-qubits',
    'qubits': [
        {'name': 'q0', 'freq_ghz': 5.202, 'anharm_ghz': -0.2752, 'max_freq_ghz': 5.202},
        {'name': 'q1', 'freq_ghz': 5.708, 'anharm_ghz': -0.2611, 'max_freq_ghz': 5.708},
        {'name': 'q2', 'freq_ghz': 4.350, 'anharm_ghz': -0.2773, 'max_freq_ghz': 4.927},
    ],
    # bare |10>-|01> exchange; the |11>-|20> coupling is sqrt(2) times larger
    'coupling_ghz': [0.0038, 0.0038],
    'levels': 3,
    'sigma_ns': 1.0,
    'step_ns': 0.01,
}

# Same chip with q2 able to reach q0 for the exchange (iSWAP/DIV) resonance
DIV_TUNABLE_QUBIT_DEVICE = {
    **TUNABLE_QUBIT_DEVICE,
    'qubits': [
        TUNABLE_QUBIT_DEVICE['qubits'][0],
        TUNABLE_QUBIT_DEVICE['qubits'][1],
        {'name': 'q2', 'freq_ghz': 4.350, 'anharm_ghz': -0.2773, 'max_freq_ghz': 5.202},
    ],
}

# Three fixed qubits, two flux-modulated couplers (c1 between q0-q1, c2 between q0-q2)
TUNABLE_COUPLER_DEVICE = {
    'scheme': 'tunable-coupler',
    'qubits': [
        {'name': 'q0', 'freq_ghz': 4.8, 'anharm_ghz': -0.17},
        {'name': 'q1', 'freq_ghz': 4.225, 'anharm_ghz': -0.18},
        {'name': 'q2', 'freq_ghz': 4.35, 'anharm_ghz': -0.18},
    ],
    'couplers': [
        {'name': 'c1', 'max_freq_ghz': 7.8, 'anharm_ghz': -0.12},
        {'name': 'c2', 'max_freq_ghz': 8.0, 'anharm_ghz': -0.12},
    ],
    'coupling_ghz': {'q0-c1': 0.07, 'q0-c2': 0.07, 'q1-c1': 0.07, 'q2-c2': 0.07},
    'drives': [
        {'coupler': 'c1', 'bias_phi0': 0.275, 'amplitude_phi0': 0.08, 'detuning_ghz': 0.0, 'phase_rad': 0.0},
        {'coupler': 'c2', 'bias_phi0': 0.275, 'amplitude_phi0': 0.08, 'detuning_ghz': 0.0, 'phase_rad': 0.0},
    ],
    'plateau_time_ns': 355.0,
    'rise_ns': 25.0,
    'levels': 3,
    'step_ns': 0.002,
}

BUILTIN_DEVICES = {
    'tunable-qubits': TUNABLE_QUBIT_DEVICE,
    'div-tunable-qubits': DIV_TUNABLE_QUBIT_DEVICE,
    'tunable-coupler': TUNABLE_COUPLER_DEVICE,
}


# ==================== SCHEMAS ====================

_NAME = {'type': 'string'}
_NUMBER = {'type': 'number'}
_POSITIVE = {'type': 'number', 'exclusiveMinimum': 0, 'description': 'must be positive'}
_LEVELS = {'type': 'integer', 'minimum': 3, 'description': 'CZ-type gates need at least 3 levels'}


def _object(properties: dict, required: tuple = ()) -> dict:
    return {'type': 'object', 'properties': properties, 'required': list(required), 'additionalProperties': False}


def _exactly(items: dict, count: int, what: str) -> dict:
    return {'type': 'array', 'items': items, 'minItems': count, 'maxItems': count,
            'description': f'expected {count} {what}'}


QUBIT_SCHEMA = _object(
    {'name': _NAME, 'freq_ghz': _NUMBER, 'anharm_ghz': _NUMBER, 'max_freq_ghz': _NUMBER},
    ('name', 'freq_ghz', 'anharm_ghz'),
)

COUPLER_SCHEMA = _object(
    {'name': _NAME, 'max_freq_ghz': _NUMBER, 'anharm_ghz': _NUMBER},
    ('name', 'max_freq_ghz', 'anharm_ghz'),
)

DRIVE_SCHEMA = _object(
    {'coupler': _NAME, 'bias_phi0': _NUMBER, 'amplitude_phi0': _NUMBER, 'detuning_ghz': _NUMBER, 'phase_rad': _NUMBER},
    ('coupler', 'bias_phi0', 'amplitude_phi0'),
)

DEVICE_SCHEMAS = {
    'tunable-qubits': _object({
        'scheme': _NAME,
        'qubits': _exactly(QUBIT_SCHEMA, 3, 'qubits'),
        'coupling_ghz': _exactly(_NUMBER, 2, 'couplings [g1, g2]'),
        'levels': _LEVELS,
        'sigma_ns': _POSITIVE,
        'step_ns': _POSITIVE,
        'time_ns': _POSITIVE,
    }, ('scheme', 'qubits', 'coupling_ghz')),
    'tunable-coupler': _object({
        'scheme': _NAME,
        'qubits': _exactly(QUBIT_SCHEMA, 3, 'qubits'),
        'couplers': _exactly(COUPLER_SCHEMA, 2, 'couplers'),
        'coupling_ghz': {'type': 'object', 'additionalProperties': _NUMBER},
        'drives': {'type': 'array', 'items': DRIVE_SCHEMA},
        'plateau_time_ns': _POSITIVE,
        'rise_ns': _POSITIVE,
        'levels': _LEVELS,
        'step_ns': _POSITIVE,
    }, ('scheme', 'qubits', 'couplers', 'coupling_ghz', 'drives')),
}
DEVICE_SCHEMAS['div-tunable-qubits'] = DEVICE_SCHEMAS['tunable-qubits']

SWEEP_AXES = (
    'time_ns',
    'detuning1_ghz',
    'detuning2_ghz',
    'phase_diff_rad',
    'amplitude_phi0',
    'bias_phi0',
    'target_phi_rad',
)

AXIS_SCHEMA = _object({
    'name': {'enum': list(SWEEP_AXES), 'description': f"unknown axis (choose from {', '.join(SWEEP_AXES)})"},
    'start': _NUMBER,
    'stop': _NUMBER,
    'count': {'type': 'integer', 'minimum': 2, 'description': 'need at least 2 grid points'},
}, ('name', 'start', 'stop', 'count'))

OBSERVABLE_SCHEMA = _object({
    'kind': {'enum': ['population', 'fidelity'], 'description': "expected 'population' or 'fidelity'"},
    'initial': _NAME,
    'state': _NAME,
    'target': _NAME,
}, ('kind',))

SWEEP_SCHEMA = _object({
    'name': _NAME,
    'device': _NAME,
    'gate': _NAME,
    'axes': {'type': 'array', 'items': AXIS_SCHEMA, 'minItems': 1, 'maxItems': 3,
             'description': 'expected 1 to 3 axes'},
    'observables': {'type': 'array', 'items': OBSERVABLE_SCHEMA, 'minItems': 1,
                    'description': 'at least one observable is required'},
    'step_ns': _POSITIVE,
    'jobs': {'type': 'integer', 'minimum': 1, 'description': 'need at least 1 worker'},
    'check_convergence': {'type': 'boolean'},
}, ('name', 'device', 'gate', 'axes', 'observables'))


def _where(source: str, path) -> str:
    where = source
    for part in path:
        where += f"[{part}]" if isinstance(part, int) else f".{part}"
    return where


def _brief(value):
    return f"{len(value)} items" if isinstance(value, list) else repr(value)


def _message(error: ValidationError, source: str) -> str:
    where = _where(source, error.absolute_path)
    if error.validator == 'additionalProperties':
        unknown = sorted(set(error.instance) - set(error.schema.get('properties', {})))
        return f"{where}: unknown key(s) {', '.join(unknown)}"
    if error.validator == 'required':
        missing = [key for key in error.validator_value if key not in error.instance]
        return f"{where}: missing key '{missing[0]}'"
    if 'description' in error.schema and error.validator != 'type':
        return f"{where}: {error.schema['description']}, got {_brief(error.instance)}"
    if error.validator == 'type':
        return f"{where}: expected {error.validator_value}, got {error.instance!r}"
    return f"{where}: {error.message}"


def _normalise(value, schema: dict, where: str):
    """Numbers as float, integers as int, recursively; NaN and infinities are rejected."""
    kind = schema.get('type')
    if kind == 'number':
        if not math.isfinite(value):
            raise ConfigError(f"{where}: non-finite value {value!r}")
        return float(value)
    if kind == 'integer':
        return int(value)
    if kind == 'object':
        properties = schema.get('properties', {})
        extra = schema.get('additionalProperties')
        return {key: _normalise(item, properties.get(key, extra if isinstance(extra, dict) else {}), f"{where}.{key}")
                for key, item in value.items()}
    if kind == 'array':
        return [_normalise(item, schema.get('items', {}), f"{where}[{i}]") for i, item in enumerate(value)]
    return value


def validate_schema(data, schema: dict, source: str):
    """Check `data` against a JSON schema; returns a normalised copy."""
    error = best_match(Draft7Validator(schema).iter_errors(data))
    if error is not None:
        raise ConfigError(_message(error, source))
    return _normalise(data, schema, source)


# ==================== DEVICE CONFIGS ====================

def validate_device(data: dict, source: str = '<builtin>') -> dict:
    """Validate a device dict; returns a cleaned copy."""
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    scheme = data.get('scheme')
    if scheme not in DEVICE_SCHEMAS:
        raise ConfigError(f"{source}: scheme must be one of {', '.join(sorted(DEVICE_SCHEMAS))}, got {scheme!r}")
    clean = validate_schema(data, DEVICE_SCHEMAS[scheme], source)
    clean.setdefault('levels', 3)

    if scheme == 'tunable-coupler':
        names = {q['name'] for q in clean['qubits']} | {c['name'] for c in clean['couplers']}
        for key in clean['coupling_ghz']:
            pair = key.split('-')
            if len(pair) != 2 or not set(pair) <= names:
                raise ConfigError(f"{source}.coupling_ghz: unknown pair '{key}'")
        coupler_names = [c['name'] for c in clean['couplers']]
        if sorted(d['coupler'] for d in clean['drives']) != sorted(coupler_names):
            raise ConfigError(f"{source}.drives: need exactly one drive per coupler {coupler_names}")
        for d in clean['drives']:
            d.setdefault('detuning_ghz', 0.0)
            d.setdefault('phase_rad', 0.0)
        clean.setdefault('plateau_time_ns', 355.0)
        clean.setdefault('rise_ns', 25.0)
        clean.setdefault('step_ns', 0.002)
    else:
        clean.setdefault('sigma_ns', 1.0)
        clean.setdefault('step_ns', 0.01)
    return clean


def _read_json(path: str) -> dict:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from e


def load_device_config(path: str) -> dict:
    """Read and validate a device file."""
    data = validate_device(_read_json(path), path)
    logger.info(f"📦 Loaded {data['scheme']} device from {path}")
    return data


def builtin_device(name: str) -> dict:
    if name not in BUILTIN_DEVICES:
        raise ConfigError(f"unknown built-in device '{name}'")
    return validate_device(BUILTIN_DEVICES[name], name)


def resolve_device(ref: str, base_dir: str = '.') -> dict:
    """A built-in device name or a path relative to base_dir."""
    if ref in BUILTIN_DEVICES:
        return builtin_device(ref)
    path = ref if os.path.isabs(ref) else os.path.join(base_dir, ref)
    return load_device_config(path)



# ==================== SWEEP SPECS ====================

def validate_sweep(data: dict, source: str = '<inline>') -> dict:
    clean = validate_schema(data, SWEEP_SCHEMA, source)
    seen = set()
    for i, axis in enumerate(clean['axes']):
        if axis['name'] in seen:
            raise ConfigError(f"{source}.axes[{i}].name: axis '{axis['name']}' repeated")
        seen.add(axis['name'])

    for i, obs in enumerate(clean['observables']):
        if obs['kind'] == 'population':
            for key in ('initial', 'state'):
                if key not in obs:
                    raise ConfigError(f"{source}.observables[{i}]: population observable needs '{key}'")
        else:
            obs.setdefault('target', clean['gate'])
    clean.setdefault('check_convergence', True)
    return clean


def load_sweep_spec(path: str) -> dict:
    """Read and validate a sweep spec; the device reference is resolved relative to the spec file."""
    data = validate_sweep(_read_json(path), path)
    data['device_config'] = resolve_device(data['device'], os.path.dirname(os.path.abspath(path)))
    logger.info(f"📦 Loaded sweep '{data['name']}' ({len(data['axes'])} axes) from {path}")
    return data
