# Pulse-level device simulation
# Transmon chains driven by frequency or flux pulses, propagated and scored against target gates

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import singledispatch
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, linalg, optimize, special

import device_data as dd
import gate_library as gl
import qudit_algebra as qa

logger = logging.getLogger(__name__)

TWO_PI = 2 * np.pi

# Fidelity changes at or above this flag a truncation problem
TRUNCATION_THRESHOLD = 5e-4


class ConvergenceError(RuntimeError):
    """Raised when step halving keeps changing results by more than the target."""


def rad_per_ns(freq_ghz: float) -> float:
    return TWO_PI * freq_ghz


def ghz(omega: float) -> float:
    return omega / TWO_PI


# ==================== SITES AND OPERATORS ====================

@dataclass(frozen=True)
class TransmonSite:
    """Angular frequencies in rad/ns; freq_max bounds flux tuning (None = fixed or unbounded)."""
    name: str
    freq: float
    anharm: float
    levels: int = 3
    freq_max: Optional[float] = None

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError(f"{self.name}: need at least 2 levels, got {self.levels}")

    def reachable(self, target: float) -> float:
        """Clip a tuning target to the sweet spot."""
        if self.freq_max is not None and target > self.freq_max + 1e-12:
            logger.warning(f"⚠️ {self.name}: target {ghz(target):.4f} GHz above maximum "
                           f"{ghz(self.freq_max):.4f} GHz, clipped")
            return self.freq_max
        return target


def lowering(levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, levels)), 1)


def number_diagonals(shape: qa.RegisterShape) -> np.ndarray:
    """Row s holds the level of site s for every basis index."""
    return np.array(np.unravel_index(np.arange(shape.total), shape.dims), dtype=float)


def _onsite(shape: qa.RegisterShape, freqs: Sequence[float], anharms: Sequence[float]) -> np.ndarray:
    n = number_diagonals(shape)
    diag = np.zeros(shape.total)
    for s in range(shape.n_sites):
        diag += freqs[s] * n[s] + 0.5 * anharms[s] * n[s] * (n[s] - 1)
    return np.diag(diag).astype(complex)


def _pair(shape: qa.RegisterShape, i: int, j: int, local_i: np.ndarray, local_j: np.ndarray) -> np.ndarray:
    return qa.embed_matrix(np.kron(local_i, local_j), shape.dims, (i, j))


# ==================== DEVICES ====================

@dataclass(frozen=True)
class TunableQubitDevice:
    """q0 fixed; q1 and q2 flux-tunable, exchange-coupled to q0. Frame rotates at q0's frequency."""
    sites: tuple
    couplings: tuple
    sigma: float = 1.0
    step: float = 0.01
    name: str = 'tunable-qubits'

    def __post_init__(self):
        if len(self.sites) != 3 or len(self.couplings) != 2:
            raise ValueError("tunable-qubit device needs three sites and two couplings")

    @property
    def shape(self) -> qa.RegisterShape:
        return qa.RegisterShape(tuple(s.levels for s in self.sites), tuple(s.name for s in self.sites))

    @property
    def qubit_sites(self) -> tuple:
        return (0, 1, 2)

    @property
    def lambdas(self) -> tuple:
        """|11>-|20> couplings, sqrt(2) times the bare exchange."""
        return tuple(np.sqrt(2) * g for g in self.couplings)

    def with_levels(self, levels: int) -> 'TunableQubitDevice':
        return replace(self, sites=tuple(replace(s, levels=levels) for s in self.sites))

    def resonance(self, kind: str) -> float:
        """'cz' tunes to the |11>-|20> resonance, 'iswap' to |10>-|01>."""
        q0 = self.sites[0]
        return q0.freq + q0.anharm if kind == 'cz' else q0.freq

    def static_hamiltonian(self) -> np.ndarray:
        shape = self.shape
        frame = self.sites[0].freq
        h = _onsite(shape, [s.freq - frame for s in self.sites], [s.anharm for s in self.sites])
        a0 = lowering(self.sites[0].levels)
        for j, g in zip((1, 2), self.couplings):
            aj = lowering(self.sites[j].levels)
            hop = g * _pair(shape, 0, j, a0.conj().T, aj)
            h += hop + hop.conj().T
        return h


@dataclass(frozen=True)
class FluxDrive:
    """Phi(t) = bias + amplitude * envelope(t) * cos(w t + phase); detuning shifts w from its estimate."""
    bias: float
    amplitude: float
    detuning: float = 0.0
    phase: float = 0.0


@dataclass(frozen=True)
class TunableCouplerDevice:
    """Three fixed qubits and two flux-modulated couplers with full transverse couplings (lab frame)."""
    qubits: tuple
    couplers: tuple
    couplings: tuple  # ((qubit index, coupler index), g)
    drives: tuple
    plateau: float = 355.0
    rise: float = 25.0
    step: float = 0.002
    name: str = 'tunable-coupler'

    def __post_init__(self):
        if len(self.qubits) != 3 or len(self.couplers) != 2 or len(self.drives) != 2:
            raise ValueError("tunable-coupler device needs three qubits, two couplers and two drives")

    @property
    def sites(self) -> tuple:
        return tuple(self.qubits) + tuple(self.couplers)

    @property
    def shape(self) -> qa.RegisterShape:
        return qa.RegisterShape(tuple(s.levels for s in self.sites), tuple(s.name for s in self.sites))

    @property
    def qubit_sites(self) -> tuple:
        return (0, 1, 2)

    def coupler_site(self, j: int) -> int:
        return 3 + j

    def with_levels(self, levels: int) -> 'TunableCouplerDevice':
        return replace(self, qubits=tuple(replace(s, levels=levels) for s in self.qubits),
                       couplers=tuple(replace(s, levels=levels) for s in self.couplers))

    def coupler_frequency(self, j: int, flux) -> np.ndarray:
        """w_c = w_c^0 sqrt|cos(pi Phi)| with Phi in flux quanta."""
        return self.couplers[j].freq * np.sqrt(np.abs(np.cos(np.pi * np.asarray(flux))))

    def idle_coupler_frequencies(self) -> tuple:
        return tuple(float(self.coupler_frequency(j, d.bias)) for j, d in enumerate(self.drives))

    def static_hamiltonian(self, coupler_freqs: Sequence[float] = None) -> np.ndarray:
        shape = self.shape
        coupler_freqs = self.idle_coupler_frequencies() if coupler_freqs is None else coupler_freqs
        freqs = [q.freq for q in self.qubits] + list(coupler_freqs)
        h = _onsite(shape, freqs, [s.anharm for s in self.sites])
        for (i, j), g in self.couplings:
            c = self.coupler_site(j)
            xi = lowering(shape.dims[i])
            xc = lowering(shape.dims[c])
            h += g * _pair(shape, i, c, xi + xi.T, xc + xc.T)
        return h


def device_from_config(cfg: dict):
    """Typed device from a validated device_data dict."""
    if cfg['scheme'] in ('tunable-qubits', 'div-tunable-qubits'):
        sites = tuple(TransmonSite(q['name'], rad_per_ns(q['freq_ghz']), rad_per_ns(q['anharm_ghz']), cfg['levels'],
                                   rad_per_ns(q['max_freq_ghz']) if 'max_freq_ghz' in q else None)
                      for q in cfg['qubits'])
        return TunableQubitDevice(sites, tuple(rad_per_ns(g) for g in cfg['coupling_ghz']),
                                  sigma=cfg['sigma_ns'], step=cfg['step_ns'], name=cfg['scheme'])
    qubits = tuple(TransmonSite(q['name'], rad_per_ns(q['freq_ghz']), rad_per_ns(q['anharm_ghz']), cfg['levels'])
                   for q in cfg['qubits'])
    couplers = tuple(TransmonSite(c['name'], rad_per_ns(c['max_freq_ghz']), rad_per_ns(c['anharm_ghz']), cfg['levels'],
                                  rad_per_ns(c['max_freq_ghz']))
                     for c in cfg['couplers'])
    qubit_index = {q.name: i for i, q in enumerate(qubits)}
    coupler_index = {c.name: j for j, c in enumerate(couplers)}
    couplings = []
    for key, g in cfg['coupling_ghz'].items():
        a, b = key.split('-')
        if a in coupler_index:
            a, b = b, a
        if a not in qubit_index or b not in coupler_index:
            raise dd.ConfigError(f"coupling '{key}' must join a qubit and a coupler")
        couplings.append(((qubit_index[a], coupler_index[b]), rad_per_ns(g)))
    drives = {d['coupler']: FluxDrive(d['bias_phi0'], d['amplitude_phi0'], rad_per_ns(d['detuning_ghz']),
                                      d['phase_rad'])
              for d in cfg['drives']}
    return TunableCouplerDevice(qubits, couplers, tuple(couplings), tuple(drives[c.name] for c in couplers),
                                plateau=cfg['plateau_time_ns'], rise=cfg['rise_ns'], step=cfg['step_ns'])


def builtin_device(name: str):
    return device_from_config(dd.builtin_device(name))


# ==================== PULSES ====================

PULSE_KINDS = ('rect-gauss', 'sin2')


@dataclass(frozen=True)
class PulseShape:
    """Unit-height envelope. rect-gauss: rectangle of `length` smoothed by a Gaussian of width sigma.
    sin2: sin^2 rise and fall of `rise` ns around a flat top; `length` includes both ramps."""
    kind: str
    length: float
    sigma: float = 1.0
    rise: float = 25.0

    def __post_init__(self):
        if self.kind not in PULSE_KINDS:
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        if self.length <= 0:
            raise ValueError(f"pulse length must be positive, got {self.length}")
        if self.kind == 'sin2' and self.length < 2 * self.rise:
            raise ValueError(f"sin2 pulse of {self.length} ns shorter than its two {self.rise} ns ramps")

    @property
    def window(self) -> tuple:
        if self.kind == 'rect-gauss':
            return -4 * self.sigma, self.length + 4 * self.sigma
        return 0.0, self.length

    @property
    def plateau(self) -> float:
        return self.length - 2 * self.rise if self.kind == 'sin2' else self.length

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == 'rect-gauss':
            w = np.sqrt(2) * self.sigma
            return 0.5 * (special.erf(t / w) - special.erf((t - self.length) / w))
        up = np.sin(np.pi * np.clip(t, 0, self.rise) / (2 * self.rise)) ** 2
        down = np.sin(np.pi * np.clip(self.length - t, 0, self.rise) / (2 * self.rise)) ** 2
        return np.where((t < 0) | (t > self.length), 0.0, np.minimum(up, down))


@dataclass(frozen=True)
class FrequencyOffset:
    """Tunable-qubit excursion: amplitude * envelope(t)."""
    amplitude: float
    pulse: PulseShape

    def __call__(self, t) -> np.ndarray:
        return self.amplitude * self.pulse(t)


@dataclass(frozen=True)
class FluxModulation:
    """Coupler frequency minus its idle value under the modulated flux."""
    max_freq: float
    drive: FluxDrive
    mod_freq: float
    pulse: PulseShape

    def frequency(self, flux) -> np.ndarray:
        return self.max_freq * np.sqrt(np.abs(np.cos(np.pi * np.asarray(flux))))

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        flux = self.drive.bias + self.drive.amplitude * self.pulse(t) * np.cos(self.mod_freq * t + self.drive.phase)
        return self.frequency(flux) - self.frequency(self.drive.bias)


@dataclass(frozen=True)
class DriveSchedule:
    """Diagonal, site-resolved frequency offsets over [start, end]."""
    offsets: tuple  # (site, callable)
    start: float
    end: float
    gate_time: float
    label: str = ''

    @property
    def duration(self) -> float:
        return self.end - self.start

    def offset_values(self, times: np.ndarray, numbers: np.ndarray) -> np.ndarray:
        """(len(times), dim) array of diagonal offsets."""
        values = np.zeros((len(times), numbers.shape[1]))
        for site, fn in self.offsets:
            values += np.outer(fn(times), numbers[site])
        return values


def idle_schedule(total_time: float) -> DriveSchedule:
    return DriveSchedule((), 0.0, float(total_time), float(total_time), 'idle')


# ==================== INTEGRATION ====================

INTEGRATORS = ('expm', 'split')


@dataclass(frozen=True)
class StepControl:
    step: float = 0.01
    method: str = 'expm'
    check_convergence: bool = True
    error_target: float = 1e-6
    max_halvings: int = 4

    def __post_init__(self):
        if self.method not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.method!r}")
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")


def _evolve(h0: np.ndarray, numbers: np.ndarray, schedule: DriveSchedule, initial: np.ndarray, step: float,
            method: str, record: Optional[Callable[[float, np.ndarray], None]] = None) -> np.ndarray:
    """Piecewise-constant propagation of the columns of `initial`."""
    n_steps = max(1, math.ceil(schedule.duration / step - 1e-9))
    dt = schedule.duration / n_steps
    mids = schedule.start + (np.arange(n_steps) + 0.5) * dt
    offsets = schedule.offset_values(mids, numbers) if schedule.offsets else None
    psi = np.array(initial, dtype=complex)
    static = None
    if method == 'split' or offsets is None:
        energies, vectors = linalg.eigh(h0)
        static = (vectors * np.exp(-1j * energies * dt)) @ vectors.conj().T
    base = np.diag(h0).copy()
    for k in range(n_steps):
        if offsets is None:
            psi = static @ psi
        elif method == 'split':
            half = np.exp(-0.5j * offsets[k] * dt)[:, None]
            psi = half * (static @ (half * psi))
        else:
            h = h0.copy()
            h[np.diag_indices_from(h)] = base + offsets[k]
            psi = qa.propagator(h, dt) @ psi
        if record is not None:
            record(schedule.start + (k + 1) * dt, psi)
    return psi


def propagate_device(device, schedule: DriveSchedule = None, control: StepControl = None,
                     total_time: float = None, initial: np.ndarray = None):
    """Full propagator (or the evolved `initial` columns) over the schedule window."""
    if schedule is None:
        if total_time is None:
            raise ValueError("need a schedule or a total time")
        schedule = idle_schedule(total_time)
    control = control or StepControl(step=device.step)
    shape = device.shape
    h0 = device.static_hamiltonian()
    numbers = number_diagonals(shape)
    columns = np.eye(shape.total, dtype=complex) if initial is None else initial

    result = _evolve(h0, numbers, schedule, columns, control.step, control.method)
    if control.check_convergence:
        step = control.step
        change = float('inf')
        for _ in range(control.max_halvings):
            finer = _evolve(h0, numbers, schedule, columns, step / 2, control.method)
            change = float(np.max(np.abs(finer - result)))
            logger.debug(f"🔄 step {step / 2:.5f} ns changed the propagator by {change:.2e}")
            result, step = finer, step / 2
            if change <= control.error_target:
                break
        else:
            raise ConvergenceError(f"propagator still changing by {change:.2e} at step {step:.5f} ns "
                                   f"(target {control.error_target:.1e})")

    if initial is not None:
        return result
    err = qa.unitarity_error(result)
    if err > qa.PROPAGATOR_TOL:
        logger.warning(f"⚠️ propagator unitarity error {err:.2e}")
    return qa.Operator(shape, result)


def converged(evaluate: Callable[[StepControl], tuple], control: StepControl) -> tuple:
    """Run `evaluate(control) -> (values, payload)`, halving the step until the values move by at most
    `error_target`. Returns (payload, control actually used, last change or None when unchecked)."""
    fixed = replace(control, check_convergence=False)
    values, payload = evaluate(fixed)
    if not control.check_convergence:
        return payload, fixed, None
    values = np.asarray(values, dtype=float)
    change = float('inf')
    for _ in range(control.max_halvings):
        finer = replace(fixed, step=fixed.step / 2)
        refined, refined_payload = evaluate(finer)
        refined = np.asarray(refined, dtype=float)
        change = float(np.max(np.abs(refined - values)))
        logger.debug(f"🔄 step {finer.step:.5f} ns moved the reported values by {change:.2e}")
        values, payload, fixed = refined, refined_payload, finer
        if change <= control.error_target:
            return payload, fixed, change
    raise ConvergenceError(f"reported values still changing by {change:.2e} at step {fixed.step:.5f} ns "
                           f"(target {control.error_target:.1e})")


def population_traces(device, schedule: DriveSchedule, initial: str, tracked: Sequence[str],
                      control: StepControl = None, samples: int = 200) -> tuple:
    """Bare-basis populations of `tracked` states along the trajectory from basis state `initial`."""
    control = control or StepControl(step=device.step)
    shape = device.shape
    start = np.zeros((shape.total, 1), dtype=complex)
    start[shape.index(pad_digits(initial, shape))] = 1.0
    idx = [shape.index(pad_digits(s, shape)) for s in tracked]
    n_steps = max(1, math.ceil(schedule.duration / control.step - 1e-9))
    every = max(1, n_steps // samples)
    times, rows = [schedule.start], [np.abs(start[idx, 0]) ** 2]
    counter = {'k': 0}

    def record(t, psi):
        counter['k'] += 1
        if counter['k'] % every == 0 or counter['k'] == n_steps:
            times.append(t)
            rows.append(np.abs(psi[idx, 0]) ** 2)

    _evolve(device.static_hamiltonian(), number_diagonals(shape), schedule, start, control.step,
            control.method, record)
    rows = np.array(rows)
    return np.array(times), {s: rows[:, i] for i, s in enumerate(tracked)}


def pad_digits(digits: str, shape: qa.RegisterShape) -> str:
    """Qubit digits extended with ground-state couplers."""
    digits = digits.strip('|>')
    return digits + '0' * (shape.n_sites - len(digits))


# ==================== DRESSED FRAME ====================

def dressed_basis(h0: np.ndarray) -> tuple:
    """Eigenpairs relabelled so column i is the eigenvector with most weight on bare state i."""
    energies, vectors = linalg.eigh(h0)
    weights = np.abs(vectors) ** 2
    _, cols = optimize.linear_sum_assignment(-weights)
    vectors = vectors[:, cols]
    energies = energies[cols]
    phases = np.exp(-1j * np.angle(np.diag(vectors)))
    return energies, vectors * phases[None, :]


def dressed_energy(device, digits: str, h0: np.ndarray = None) -> float:
    h0 = device.static_hamiltonian() if h0 is None else h0
    energies, _ = dressed_basis(h0)
    return float(energies[device.shape.index(pad_digits(digits, device.shape))])


def gate_frame_block(device, schedule: DriveSchedule, control: StepControl = None) -> np.ndarray:
    """Computational block of e^{i H_idle T} M in the dressed basis."""
    h0 = device.static_hamiltonian()
    energies, vectors = dressed_basis(h0)
    projector = qa.ComputationalProjector(device.shape, device.qubit_sites)
    comp = list(projector.indices)
    out = propagate_device(device, schedule, control, initial=vectors[:, comp])
    block = vectors[:, comp].conj().T @ out
    return block * np.exp(1j * energies[comp] * schedule.duration)[:, None]


# ==================== FIDELITY ====================

@dataclass
class FidelityReport:
    fidelity: float
    leakage: float
    gate_time: float
    phases: tuple
    fidelity_uncorrected: float
    target: str = ''
    populations: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'target': self.target,
            'fidelity': self.fidelity,
            'fidelity_uncorrected': self.fidelity_uncorrected,
            'leakage': self.leakage,
            'gate_time_ns': self.gate_time,
            'virtual_z_rad': list(self.phases),
            'populations': dict(self.populations),
            'settings': dict(self.settings),
            'flags': list(self.flags),
        }


def _qubit_bits(n: int) -> np.ndarray:
    n_qubits = int(round(np.log2(n)))
    if 2 ** n_qubits != n:
        raise qa.ShapeMismatchError(f"computational dimension {n} is not a power of two")
    return np.array(list(np.ndindex(*(2,) * n_qubits)), dtype=float)


def average_gate_fidelity(m, target: qa.Operator, projector: qa.ComputationalProjector = None,
                          optimize_phases: bool = True, gate_time: float = 0.0, name: str = '') -> FidelityReport:
    """F = (|Tr(M U^dag)|^2 + Tr(M^dag M)) / (n(n+1)), maximised over virtual-Z phases on each qubit."""
    if isinstance(m, qa.Operator):
        block = qa.project_computational(m, projector).matrix if projector is not None else m.matrix
    else:
        block = np.asarray(m, dtype=complex)
    u = target.matrix
    n = u.shape[0]
    if block.shape != (n, n):
        raise qa.ShapeMismatchError(f"block {block.shape} vs target {u.shape}")
    bits = _qubit_bits(n)
    overlap = np.diag(block @ u.conj().T)
    weight = float(np.real(np.trace(block.conj().T @ block)))

    def fidelity(z):
        return (abs(np.sum(np.exp(1j * (bits @ z)) * overlap)) ** 2 + weight) / (n * (n + 1))

    zero = np.zeros(bits.shape[1])
    uncorrected = float(fidelity(zero))
    best, best_z = uncorrected, zero
    if optimize_phases:
        starts = [zero]
        if abs(overlap[0]) > 1e-12:
            singles = [int(np.flatnonzero((bits == np.eye(bits.shape[1])[q]).all(axis=1))[0])
                       for q in range(bits.shape[1])]
            starts.append(np.array([-np.angle(overlap[k] / overlap[0]) for k in singles]))
        for z0 in starts:
            res = optimize.minimize(lambda z: -fidelity(z), z0, method='BFGS')
            if -res.fun > best:
                best, best_z = float(-res.fun), np.angle(np.exp(1j * res.x))
    leakage = 1.0 - weight / n
    return FidelityReport(min(best, 1.0), leakage, gate_time, tuple(float(z) for z in best_z),
                          min(uncorrected, 1.0), name)


# ==================== GATE PLANS ====================

@dataclass(frozen=True)
class GatePlan:
    """Which tunable elements move, toward which resonance, and what they should implement."""
    active: tuple
    kind: str
    trace_initial: str
    trace_states: tuple


QUBIT_GATES = {
    'cz01': GatePlan((1,), 'cz', '110', ('110', '200')),
    'cz02': GatePlan((2,), 'cz', '101', ('101', '200')),
    'cczs': GatePlan((1, 2), 'cz', '110', ('110', '200', '101')),
    'iswap01': GatePlan((1,), 'iswap', '010', ('010', '100')),
    'iswap02': GatePlan((2,), 'iswap', '001', ('001', '100')),
    'div': GatePlan((1, 2), 'iswap', '010', ('010', '100', '001')),
}

# coupler j modulates the transition that lifts q0 into |2>
COUPLER_GATES = {
    'cz01': GatePlan((0,), 'cz', '110', ('110', '200')),
    'cz02': GatePlan((1,), 'cz', '101', ('101', '200')),
    'cczs': GatePlan((0, 1), 'cz', '101', ('110', '200', '101')),
}
COUPLER_TRANSITIONS = {0: ('110', '200'), 1: ('101', '200')}


def gate_plan(device, gate: str) -> GatePlan:
    table = COUPLER_GATES if isinstance(device, TunableCouplerDevice) else QUBIT_GATES
    if gate not in table:
        raise ValueError(f"gate '{gate}' is not available on {device.name} (choose from {', '.join(table)})")
    return table[gate]


def target_operator(device, gate: str, phi: float = np.pi) -> qa.Operator:
    """Ideal three-qubit unitary for a device gate; any other name falls through to the named gates."""
    if isinstance(device, TunableQubitDevice) and gate in ('cczs', 'div'):
        g1, g2 = device.couplings
        if gate == 'div':
            return gl.div(gl.DivParams(float(np.arctan2(g2, g1)), np.pi / 2))
        theta = 2 * float(np.arctan2(g2, g1))
        return gl.cczs(gl.CczsParams(theta, phi, 0.0))
    table = {
        'cz01': lambda: gl.cz_pair(0, 1),
        'cz02': lambda: gl.cz_pair(0, 2),
        'cczs': lambda: gl.cczs(gl.CczsParams(np.pi / 2, phi, 0.0)),
        'iswap01': lambda: gl.iswap_pair(0, 1),
        'iswap02': lambda: gl.iswap_pair(0, 2),
        'div': lambda: gl.div(gl.DivParams(np.pi / 4, np.pi / 2)),
    }
    if gate in table:
        return table[gate]()
    op = gl.named_gate(gate)
    if op.dim != 8:
        raise ValueError(f"target '{gate}' is not a three-qubit gate")
    return op


# ==================== OPERATING POINTS ====================

@dataclass(frozen=True)
class OperatingPoint:
    """gate_time in ns (coupler: including ramps); detunings in rad/ns, entry k for q(k+1) or coupler c(k+1)."""
    gate_time: float
    detunings: tuple = (0.0, 0.0)
    phases: tuple = (0.0, 0.0)
    amplitudes: Optional[tuple] = None
    biases: Optional[tuple] = None

    def to_dict(self) -> dict:
        data = {'gate_time_ns': self.gate_time,
                'detunings_ghz': [ghz(d) for d in self.detunings],
                'phases_rad': list(self.phases)}
        if self.amplitudes is not None:
            data['amplitudes_phi0'] = list(self.amplitudes)
        if self.biases is not None:
            data['biases_phi0'] = list(self.biases)
        return data


def default_point(device, gate: str) -> OperatingPoint:
    plan = gate_plan(device, gate)
    if isinstance(device, TunableCouplerDevice):
        plateau = device.plateau if len(plan.active) == 1 else device.plateau / np.sqrt(2)
        detunings = tuple(d.detuning for d in device.drives)
        phases = tuple(d.phase for d in device.drives)
        return OperatingPoint(plateau + 2 * device.rise, detunings, phases)
    if plan.kind == 'cz':
        rate = np.sqrt(sum(device.lambdas[j - 1] ** 2 for j in plan.active))
        return OperatingPoint(float(np.pi / rate))
    rate = np.sqrt(sum(device.couplings[j - 1] ** 2 for j in plan.active))
    return OperatingPoint(float(np.pi / (2 * rate)))


def default_phi(device, point: OperatingPoint) -> float:
    """CCZS target phase a drive realises: pi, shifted by the modulation phase difference on the coupler device."""
    if isinstance(device, TunableCouplerDevice):
        return float(np.angle(-np.exp(1j * (point.phases[0] - point.phases[1]))))
    return float(np.pi)


def estimate_modulation_frequency(device: TunableCouplerDevice, coupler: int, transition: tuple = None,
                                  amplitude: float = None) -> float:
    """|E(upper) - E(lower)| of dressed states with the coupler at its period-averaged frequency (rad/ns)."""
    lower, upper = transition or COUPLER_TRANSITIONS[coupler]
    drive = device.drives[coupler]
    amplitude = drive.amplitude if amplitude is None else amplitude
    mean, _ = integrate.quad(lambda x: float(device.coupler_frequency(coupler, drive.bias + amplitude * np.cos(x))),
                             0.0, TWO_PI, limit=200)
    freqs = list(device.idle_coupler_frequencies())
    freqs[coupler] = mean / TWO_PI
    h0 = device.static_hamiltonian(freqs)
    return abs(dressed_energy(device, upper, h0) - dressed_energy(device, lower, h0))


@singledispatch
def build_schedule(device, gate: str, point: OperatingPoint):
    """(device, schedule) for a gate at an operating point; the device may carry updated flux biases."""
    raise TypeError(f"no pulse schedule for {type(device).__name__}")


@build_schedule.register
def _(device: TunableQubitDevice, gate: str, point: OperatingPoint):
    plan = gate_plan(device, gate)
    pulse = PulseShape('rect-gauss', point.gate_time, device.sigma)
    resonance = device.resonance(plan.kind)
    offsets = []
    for j in plan.active:
        site = device.sites[j]
        target = site.reachable(resonance + point.detunings[j - 1])
        offsets.append((j, FrequencyOffset(target - site.freq, pulse)))
    start, end = pulse.window
    return device, DriveSchedule(tuple(offsets), start, end, point.gate_time, gate)


@build_schedule.register
def _(device: TunableCouplerDevice, gate: str, point: OperatingPoint):
    plan = gate_plan(device, gate)
    drives = list(device.drives)
    for j in range(2):
        changes = {}
        if point.amplitudes is not None:
            changes['amplitude'] = point.amplitudes[j]
        if point.biases is not None:
            changes['bias'] = point.biases[j]
        drives[j] = replace(drives[j], detuning=point.detunings[j], phase=point.phases[j], **changes)
    device = replace(device, drives=tuple(drives))
    pulse = PulseShape('sin2', point.gate_time, rise=device.rise)
    offsets = []
    for j in plan.active:
        mod_freq = estimate_modulation_frequency(device, j) + device.drives[j].detuning
        offsets.append((device.coupler_site(j), FluxModulation(device.couplers[j].freq, device.drives[j],
                                                               mod_freq, pulse)))
    start, end = pulse.window
    return device, DriveSchedule(tuple(offsets), start, end, point.gate_time, gate)


def default_control(device, method: str = None, check_convergence: bool = True) -> StepControl:
    if method is None:
        method = 'split' if isinstance(device, TunableCouplerDevice) else 'expm'
    return StepControl(step=device.step, method=method, check_convergence=check_convergence)


# ==================== RUNS ====================

def simulate_gate(device, gate: str, point: OperatingPoint = None, control: StepControl = None,
                  phi: float = np.pi, target: str = None) -> FidelityReport:
    """Fidelity of one operating point plus the final populations of the gate's tracked states.

    With `control.check_convergence` the step is halved until F moves by at most `control.error_target`;
    the step used and the last change are recorded in the report settings.
    """
    point = point or default_point(device, gate)
    control = control or default_control(device)
    plan = gate_plan(device, gate)
    device, schedule = build_schedule(device, gate, point)
    name = target or gate
    target_op = target_operator(device, name, phi)
    shape = device.shape
    start = np.zeros((shape.total, 1), dtype=complex)
    start[shape.index(pad_digits(plan.trace_initial, shape))] = 1.0

    def evaluate(step_control):
        block = gate_frame_block(device, schedule, step_control)
        report = average_gate_fidelity(block, target_op, gate_time=point.gate_time, name=name)
        final = propagate_device(device, schedule, step_control, initial=start)[:, 0]
        report.populations = {f'{s}<-{plan.trace_initial}': float(abs(final[shape.index(pad_digits(s, shape))]) ** 2)
                              for s in plan.trace_states}
        return [report.fidelity], report

    report, used, change = converged(evaluate, control)
    report.settings = {'device': device.name, 'gate': gate, 'method': used.method, 'step_ns': used.step,
                       'check_convergence': control.check_convergence, 'halving_delta': change,
                       'phi_rad': phi, **point.to_dict()}
    logger.info(f"📊 {device.name} {gate} at {point.gate_time:.3f} ns: F = {report.fidelity:.5f} "
                f"(uncorrected {report.fidelity_uncorrected:.5f}), leakage {report.leakage:.2e}")
    return report


def coordinate_descent(objective: Callable[[np.ndarray], float], x0: Sequence[float], bounds: Sequence[tuple],
                       sweeps: int = 2, coarse: int = 0, xatol: float = 1e-3) -> tuple:
    """Maximise objective one coordinate at a time with bounded line searches; `coarse` grid points seed the first."""
    x = np.array(x0, dtype=float)
    best = objective(x)
    for sweep in range(sweeps):
        for i, (lo, hi) in enumerate(bounds):
            lo_i, hi_i = lo, hi
            if coarse and sweep == 0 and i == 0:
                grid = np.linspace(lo, hi, coarse)
                scores = []
                for value in grid:
                    trial = x.copy()
                    trial[i] = value
                    scores.append(objective(trial))
                k = int(np.argmax(scores))
                if scores[k] > best:
                    x[i], best = grid[k], scores[k]
                width = (hi - lo) / max(coarse - 1, 1)
                lo_i, hi_i = max(lo, x[i] - width), min(hi, x[i] + width)

            def line(value, i=i):
                trial = x.copy()
                trial[i] = value
                return -objective(trial)

            res = optimize.minimize_scalar(line, bounds=(lo_i, hi_i), method='bounded', options={'xatol': xatol})
            if -res.fun > best:
                x[i], best = res.x, -res.fun
        logger.info(f"🔄 calibration sweep {sweep + 1}/{sweeps}: F = {best:.5f} at {np.round(x, 4).tolist()}")
    return x, best


def calibrate(device, gate: str, point: OperatingPoint = None, control: StepControl = None, phi: float = np.pi,
              time_window: float = 3.0, detuning_window: float = None, sweeps: int = 2,
              coarse: int = 31) -> tuple:
    """Local search over gate time and resonance detunings around a starting point."""
    point = point or default_point(device, gate)
    # search points are not reported; simulate_gate checks the final one
    control = replace(control or default_control(device), check_convergence=False)
    plan = gate_plan(device, gate)
    if detuning_window is None:
        detuning_window = rad_per_ns(0.002 if isinstance(device, TunableQubitDevice) else 0.005)
    n_det = len(plan.active)
    det_index = list(plan.active) if isinstance(device, TunableCouplerDevice) else [j - 1 for j in plan.active]

    def to_point(x):
        detunings = list(point.detunings)
        for k, idx in enumerate(det_index):
            detunings[idx] = x[1 + k]
        return replace(point, gate_time=float(x[0]), detunings=tuple(detunings))

    def objective(x):
        p = to_point(x)
        d, schedule = build_schedule(device, gate, p)
        block = gate_frame_block(d, schedule, control)
        return average_gate_fidelity(block, target_operator(d, gate, phi)).fidelity

    x0 = [point.gate_time] + [point.detunings[idx] for idx in det_index]
    bounds = [(point.gate_time - time_window, point.gate_time + time_window)]
    bounds += [(x0[1 + k] - detuning_window, x0[1 + k] + detuning_window) for k in range(n_det)]
    x, best = coordinate_descent(objective, x0, bounds, sweeps=sweeps, coarse=coarse)
    best_point = to_point(x)
    logger.info(f"✅ calibrated {gate}: F = {best:.5f} at t_gate = {best_point.gate_time:.3f} ns")
    return best_point, best


def _run(device, gate: str, point, calibrate_first: bool, control, phi: float = np.pi, **search) -> tuple:
    point = point or default_point(device, gate)
    control = control or default_control(device)
    if calibrate_first:
        point, _ = calibrate(device, gate, point, control, phi, **search)
    report = simulate_gate(device, gate, point, control, phi)
    if calibrate_first:
        report.settings['calibrated'] = True
    return report, point


def run_cczs_tunable_qubits(device: TunableQubitDevice = None, gate: str = 'cczs', point: OperatingPoint = None,
                            calibrate_first: bool = False, control: StepControl = None, **search) -> FidelityReport:
    """CZ-type gates with q1/q2 tuned to the |11>-|20> resonance of q0."""
    device = device or builtin_device('tunable-qubits')
    if QUBIT_GATES[gate].kind != 'cz':
        raise ValueError(f"'{gate}' is not a CZ-type gate")
    return _run(device, gate, point, calibrate_first, control, **search)[0]


def run_div_tunable_qubits(device: TunableQubitDevice = None, gate: str = 'div', point: OperatingPoint = None,
                           calibrate_first: bool = False, control: StepControl = None, **search) -> FidelityReport:
    """Exchange gates with q1/q2 tuned onto q0; q2's maximum frequency must reach q0."""
    device = device or builtin_device('div-tunable-qubits')
    if QUBIT_GATES[gate].kind != 'iswap':
        raise ValueError(f"'{gate}' is not an exchange-type gate")
    return _run(device, gate, point, calibrate_first, control, **search)[0]


def run_cczs_tunable_coupler(device: TunableCouplerDevice = None, gate: str = 'cczs', point: OperatingPoint = None,
                             phi: float = None, calibrate_first: bool = False, control: StepControl = None,
                             check_truncation: bool = True, **search) -> FidelityReport:
    """Parametric flux modulation of one or both couplers; phi defaults to pi + (phase1 - phase2).

    The final point gets a 4-level truncation spot check unless `check_truncation` is off.
    """
    device = device or builtin_device('tunable-coupler')
    point = point or default_point(device, gate)
    if phi is None:
        phi = default_phi(device, point)
    search.setdefault('time_window', 25.0)
    search.setdefault('coarse', 11)
    report, point = _run(device, gate, point, calibrate_first, control, phi, **search)
    if check_truncation:
        check_report_truncation(device, gate, point, report, control, phi)
    return report


# ==================== TRUNCATION ====================

@dataclass(frozen=True)
class TruncationReport:
    levels: int
    fidelity: float
    fidelity_extended: float
    flagged: bool

    @property
    def change(self) -> float:
        return abs(self.fidelity_extended - self.fidelity)


def truncation_check(device, schedule: DriveSchedule, target: qa.Operator, control: StepControl = None,
                     levels: int = 4, threshold: float = TRUNCATION_THRESHOLD) -> TruncationReport:
    """Re-run a point with more levels per site; flags fidelity changes at or above threshold."""
    control = replace(control or StepControl(step=device.step), check_convergence=False)
    base = average_gate_fidelity(gate_frame_block(device, schedule, control), target).fidelity
    extended = average_gate_fidelity(gate_frame_block(device.with_levels(levels), schedule, control), target).fidelity
    flagged = abs(extended - base) >= threshold
    if flagged:
        logger.warning(f"⚠️ truncation: F moved from {base:.5f} to {extended:.5f} with {levels} levels")
    return TruncationReport(levels, base, extended, flagged)


def check_report_truncation(device, gate: str, point: OperatingPoint, report: FidelityReport,
                            control: StepControl = None, phi: float = np.pi, levels: int = 4,
                            threshold: float = TRUNCATION_THRESHOLD) -> TruncationReport:
    """Spot check a simulated point at the step it was reported with; flags the report on failure."""
    control = replace(control or default_control(device), step=report.settings.get('step_ns', device.step))
    device, schedule = build_schedule(device, gate, point)
    result = truncation_check(device, schedule, target_operator(device, gate, phi), control, levels, threshold)
    report.settings['truncation_levels'] = levels
    report.settings['truncation_change'] = result.change
    if result.flagged and 'truncation' not in report.flags:
        report.flags.append('truncation')
    return result
