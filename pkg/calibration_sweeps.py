# Calibration sweeps
# Grids over pulse parameters, chevron-tip location and phase-ridge scans

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

import device_data as dd
import pulse_simulator as ps

logger = logging.getLogger(__name__)

# Observables outside [0, 1] by more than this are clamped and flagged
CLAMP_TOL = 1e-9
# Per-axis point count used with --fine-grid
FINE_GRID_COUNT = 101
CSV_DIGITS = 6
# Sweep axis that only changes the target, never the propagation
PHI_AXIS = 'target_phi_rad'


@dataclass(frozen=True)
class Axis:
    name: str
    values: tuple

    @classmethod
    def linspace(cls, name: str, start: float, stop: float, count: int) -> 'Axis':
        return cls(name, tuple(float(v) for v in np.linspace(start, stop, count)))


@dataclass(frozen=True)
class Observable:
    kind: str
    initial: str = ''
    state: str = ''
    target: str = ''

    @property
    def label(self) -> str:
        if self.kind == 'population':
            return f"P({self.state}<-{self.initial})"
        return f"F({self.target})"

    @property
    def is_return(self) -> bool:
        return self.kind == 'population' and self.initial == self.state


@dataclass(frozen=True)
class SweepSpec:
    name: str
    device_config: dict
    gate: str
    axes: tuple
    observables: tuple
    step: Optional[float] = None
    base_point: Optional[ps.OperatingPoint] = None
    check_convergence: bool = True

    @classmethod
    def from_config(cls, cfg: dict, fine_grid: bool = False) -> 'SweepSpec':
        """From a validated sweep dict (device_data.load_sweep_spec)."""
        axes = tuple(Axis.linspace(a['name'], a['start'], a['stop'], FINE_GRID_COUNT if fine_grid else a['count'])
                     for a in cfg['axes'])
        observables = tuple(Observable(o['kind'], o.get('initial', ''), o.get('state', ''), o.get('target', ''))
                            for o in cfg['observables'])
        return cls(cfg['name'], cfg['device_config'], cfg['gate'], axes, observables, cfg.get('step_ns'),
                   check_convergence=cfg.get('check_convergence', True))

    @property
    def grid_shape(self) -> tuple:
        return tuple(len(a.values) for a in self.axes)

    @property
    def axis_names(self) -> tuple:
        return tuple(a.name for a in self.axes)

    def config_hash(self) -> str:
        payload = {'device': self.device_config, 'gate': self.gate, 'step': self.step,
                   'check_convergence': self.check_convergence,
                   'axes': [[a.name, list(a.values)] for a in self.axes],
                   'observables': [o.label for o in self.observables],
                   'base_point': self.base_point.to_dict() if self.base_point is not None else None}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode('utf-8')).hexdigest()

    def points(self):
        for index in np.ndindex(*self.grid_shape):
            yield index, {a.name: a.values[i] for a, i in zip(self.axes, index)}


@dataclass
class PointFailure:
    index: tuple
    reason: str


@dataclass
class SweepResult:
    spec: SweepSpec
    values: np.ndarray  # grid shape + (n_observables,)
    failures: list = field(default_factory=list)
    clamped: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def observable(self, key=0) -> np.ndarray:
        if isinstance(key, str):
            labels = [o.label for o in self.spec.observables]
            key = labels.index(key)
        return self.values[..., key]

    def argmax(self, key=0) -> dict:
        data = self.observable(key)
        if np.all(np.isnan(data)):
            return {}
        index = np.unravel_index(int(np.nanargmax(data)), data.shape)
        coords = {a.name: a.values[i] for a, i in zip(self.spec.axes, index)}
        return {'value': float(data[index]), **coords}

    def summary(self) -> dict:
        return {
            'name': self.spec.name,
            'gate': self.spec.gate,
            'grid': list(self.spec.grid_shape),
            'argmax': {o.label: self.argmax(k) for k, o in enumerate(self.spec.observables)},
            'failures': [{'index': list(f.index), 'reason': f.reason} for f in self.failures],
            'clamped': [list(i) for i in self.clamped],
            'provenance': dict(self.provenance),
        }


# ==================== POINT EVALUATION ====================

def _point_for(device, gate: str, coords: dict, base: ps.OperatingPoint = None) -> tuple:
    """Operating point and target phase for one grid coordinate."""
    point = base or ps.default_point(device, gate)
    detunings = list(point.detunings)
    phases = list(point.phases)
    if 'time_ns' in coords:
        point = replace(point, gate_time=coords['time_ns'])
    if 'detuning1_ghz' in coords:
        detunings[0] = ps.rad_per_ns(coords['detuning1_ghz'])
    if 'detuning2_ghz' in coords:
        detunings[1] = ps.rad_per_ns(coords['detuning2_ghz'])
    if 'phase_diff_rad' in coords:
        phases = [phases[1] + coords['phase_diff_rad'], phases[1]]
    if isinstance(device, ps.TunableCouplerDevice):
        if 'amplitude_phi0' in coords:
            point = replace(point, amplitudes=(coords['amplitude_phi0'],) * 2)
        if 'bias_phi0' in coords:
            point = replace(point, biases=(coords['bias_phi0'],) * 2)
    else:
        for axis in ('amplitude_phi0', 'bias_phi0', 'phase_diff_rad'):
            if axis in coords:
                raise dd.ConfigError(f"axis '{axis}' only applies to the tunable-coupler scheme")
    point = replace(point, detunings=tuple(detunings), phases=tuple(phases))
    return point, coords.get('target_phi_rad', ps.default_phi(device, point))


def _observable_rows(spec: SweepSpec, device, schedule, control: ps.StepControl, phis: Sequence[float]) -> list:
    shape = device.shape
    block = None
    populations = {}
    rows = []
    for phi in phis:
        row = []
        for obs in spec.observables:
            if obs.kind == 'fidelity':
                if block is None:
                    block = ps.gate_frame_block(device, schedule, control)
                row.append(ps.average_gate_fidelity(block, ps.target_operator(device, obs.target, phi)).fidelity)
                continue
            if obs.initial not in populations:
                start = np.zeros((shape.total, 1), dtype=complex)
                start[shape.index(ps.pad_digits(obs.initial, shape))] = 1.0
                populations[obs.initial] = np.abs(ps.propagate_device(device, schedule, control, initial=start)[:, 0]) ** 2
            row.append(float(populations[obs.initial][shape.index(ps.pad_digits(obs.state, shape))]))
        rows.append(row)
    return rows


def evaluate_point(spec: SweepSpec, coords: dict, phis: Sequence[float] = (None,)) -> list:
    """Observable rows at one propagation point, one row per target phase (None = the drive's own)."""
    device = ps.device_from_config(spec.device_config)
    control = ps.default_control(device, check_convergence=spec.check_convergence)
    if spec.step is not None:
        control = replace(control, step=spec.step)
    point, default_phi = _point_for(device, spec.gate, coords, spec.base_point)
    device, schedule = ps.build_schedule(device, spec.gate, point)
    phis = [default_phi if phi is None else phi for phi in phis]

    def evaluate(step_control):
        rows = _observable_rows(spec, device, schedule, step_control, phis)
        return rows, rows

    rows, _, _ = ps.converged(evaluate, control)
    return rows


def _groups(spec: SweepSpec):
    """(grid indices, coords, phis) per propagation; the target-phase axis never needs its own run."""
    names = spec.axis_names
    if PHI_AXIS not in names:
        for index, coords in spec.points():
            yield [index], coords, (None,)
        return
    k = names.index(PHI_AXIS)
    phis = spec.axes[k].values
    outer = [a for a in spec.axes if a.name != PHI_AXIS]
    for sub in np.ndindex(*(len(a.values) for a in outer)):
        coords = {a.name: a.values[i] for a, i in zip(outer, sub)}
        indices = [sub[:k] + (j,) + sub[k:] for j in range(len(phis))]
        yield indices, coords, phis


def _evaluate_safely(spec: SweepSpec, indices: list, coords: dict, phis) -> tuple:
    try:
        return indices, evaluate_point(spec, coords, phis), None
    except (ps.ConvergenceError, ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
        return indices, None, f"{type(e).__name__}: {e}"


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Evaluate every grid point; failed points become NaN with a recorded reason."""
    n_obs = len(spec.observables)
    values = np.full(spec.grid_shape + (n_obs,), np.nan)
    result = SweepResult(spec, values)
    groups = list(_groups(spec))
    _point_for(ps.device_from_config(spec.device_config), spec.gate, groups[0][1], spec.base_point)
    logger.info(f"📊 Sweep '{spec.name}': {values[..., 0].size} points x {n_obs} observables, "
                f"{len(groups)} propagations on {jobs} worker(s)")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_evaluate_safely, spec, *group) for group in groups]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_evaluate_safely(spec, *group) for group in groups]

    for indices, rows, reason in outcomes:
        if rows is None:
            for index in indices:
                result.failures.append(PointFailure(index, reason))
            logger.warning(f"⚠️ point {indices[0]} failed: {reason}")
            continue
        for index, row in zip(indices, rows):
            row = np.array(row, dtype=float)
            if np.any(row < -CLAMP_TOL) or np.any(row > 1 + CLAMP_TOL):
                result.clamped.append(index)
                logger.warning(f"⚠️ point {index}: observable outside [0, 1] clamped ({row.tolist()})")
            values[index] = np.clip(row, 0.0, 1.0)

    device = ps.device_from_config(spec.device_config)
    control = ps.default_control(device)
    result.provenance = {'config_hash': spec.config_hash(), 'method': control.method,
                         'step_ns': spec.step if spec.step is not None else control.step, 'jobs': jobs,
                         'check_convergence': spec.check_convergence}
    logger.info(f"✅ Sweep '{spec.name}' done ({len(result.failures)} failed, {len(result.clamped)} clamped)")
    return result


# ==================== CHEVRON ====================

@dataclass(frozen=True)
class ChevronTip:
    time: float
    detuning: float
    value: float
    edge: bool

    def to_dict(self) -> dict:
        return {'time_ns': self.time, 'detuning': self.detuning, 'return_population': self.value, 'edge': self.edge}


def chevron_tip(times: Sequence[float], detunings: Sequence[float], population: np.ndarray,
                is_return: bool = True, tol: float = 1e-9) -> ChevronTip:
    """Operating point from a (time, detuning) population map.

    The tip column is the detuning whose transfer peaks highest; the gate time is the first return
    maximum after that peak. Ties go to the smaller time, then the smaller |detuning|.
    """
    times = np.asarray(times, dtype=float)
    detunings = np.asarray(detunings, dtype=float)
    returned = np.asarray(population, dtype=float)
    if not is_return:
        returned = 1.0 - returned
    if returned.shape != (len(times), len(detunings)):
        raise ValueError(f"population map {returned.shape} does not match axes ({len(times)}, {len(detunings)})")
    transfer = 1.0 - np.nan_to_num(returned, nan=0.0)

    peak = transfer.max(axis=0)
    candidates = np.flatnonzero(peak >= peak.max() - tol)
    first = [int(np.flatnonzero(transfer[:, j] >= peak[j] - tol)[0]) for j in range(len(detunings))]
    col = int(min(candidates, key=lambda j: (first[j], abs(detunings[j]))))
    first_peak = first[col]

    after = np.nan_to_num(returned[first_peak:, col], nan=-np.inf)
    best = after.max()
    row = first_peak + int(np.flatnonzero(after >= best - tol)[0])

    edge = col in (0, len(detunings) - 1) or row == len(times) - 1 or first_peak == 0
    if edge:
        logger.warning(f"⚠️ chevron tip on the edge of the grid (t = {times[row]:.3f}, detuning = {detunings[col]:.4g})")
    return ChevronTip(float(times[row]), float(detunings[col]), float(returned[row, col]), bool(edge))


def find_chevron_tip(result: SweepResult, observable=0) -> ChevronTip:
    """Chevron tip of a time x detuning sweep."""
    names = result.spec.axis_names
    if 'time_ns' not in names or len(names) != 2:
        raise ValueError(f"chevron needs a time axis and one detuning axis, got {names}")
    t_axis = names.index('time_ns')
    d_axis = 1 - t_axis
    data = result.observable(observable)
    if t_axis == 1:
        data = data.T
    obs = result.spec.observables[observable if isinstance(observable, int) else
                                  [o.label for o in result.spec.observables].index(observable)]
    return chevron_tip(result.spec.axes[t_axis].values, result.spec.axes[d_axis].values, data, obs.is_return)


# ==================== PHASE RIDGE ====================

@dataclass
class PhiScan:
    phase_diffs: np.ndarray
    phis: np.ndarray
    fidelity: np.ndarray  # (len(phase_diffs), len(phis))

    @classmethod
    def from_result(cls, result: 'SweepResult', observable=0) -> 'PhiScan':
        """From a sweep over phase_diff_rad and target_phi_rad."""
        names = result.spec.axis_names
        if set(names) != {'phase_diff_rad', 'target_phi_rad'}:
            raise ValueError(f"phase ridge needs phase_diff_rad and target_phi_rad axes, got {names}")
        data = result.observable(observable)
        if names[0] == 'target_phi_rad':
            data = data.T
        axes = {a.name: np.array(a.values) for a in result.spec.axes}
        return cls(axes['phase_diff_rad'], axes['target_phi_rad'], np.nan_to_num(data, nan=0.0))

    @property
    def ridge(self) -> np.ndarray:
        """Best target phase for each phase difference."""
        return self.phis[np.argmax(self.fidelity, axis=1)]

    def ridge_fit(self) -> tuple:
        """(slope, offset) of the unwrapped ridge against the phase difference."""
        slope, offset = np.polyfit(self.phase_diffs, np.unwrap(self.ridge), 1)
        return float(slope), float(np.angle(np.exp(1j * offset)))

    def summary(self) -> dict:
        slope, offset = self.ridge_fit()
        return {'phase_diffs_rad': self.phase_diffs.tolist(), 'ridge_phi_rad': self.ridge.tolist(),
                'best_fidelity': self.fidelity.max(axis=1).tolist(), 'slope': slope, 'offset_rad': offset}


def phi_scan(device_config: dict, phase_diffs: Sequence[float], phis: Sequence[float], gate: str = 'cczs',
             point: ps.OperatingPoint = None, step: float = None, jobs: int = 1) -> PhiScan:
    """Fidelity against CCZS(phi) over (modulation phase difference, phi) around an operating point."""
    if device_config['scheme'] != 'tunable-coupler':
        raise dd.ConfigError("phase scans need the tunable-coupler scheme")
    spec = SweepSpec(f'{gate}-phi-scan', device_config, gate,
                     (Axis('phase_diff_rad', tuple(float(d) for d in phase_diffs)),
                      Axis(PHI_AXIS, tuple(float(p) for p in phis))),
                     (Observable('fidelity', target=gate),), step, point)
    return PhiScan.from_result(run_sweep(spec, jobs))


# ==================== OUTPUT ====================

def _fmt(value: float) -> str:
    return 'nan' if np.isnan(value) else f"{value:.{CSV_DIGITS}g}"


def write_sweep_csv(result: SweepResult, path: str):
    """One row per grid point: axis values, observables, failure reason."""
    reasons = {f.index: f.reason for f in result.failures}
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(list(result.spec.axis_names) + [o.label for o in result.spec.observables] + ['reason'])
        for index, coords in result.spec.points():
            writer.writerow([_fmt(coords[n]) for n in result.spec.axis_names]
                            + [_fmt(v) for v in result.values[index]]
                            + [reasons.get(index, '')])
    logger.info(f"💾 Wrote {path}")


def write_summary(summary: dict, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    logger.info(f"💾 Wrote {path}")


def write_traces_csv(times: np.ndarray, traces: dict, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['time_ns'] + [f"P({s})" for s in traces])
        for k, t in enumerate(times):
            writer.writerow([_fmt(t)] + [_fmt(traces[s][k]) for s in traces])
    logger.info(f"💾 Wrote {path}")
