# Effective dynamics
# Interaction-picture Hamiltonians for simultaneous CZ/iSWAP drives and their exact propagators

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import singledispatch
from math import comb
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

import gate_library as gl
import qudit_algebra as qa

logger = logging.getLogger(__name__)

QUTRITS3 = qa.RegisterShape((3, 3, 3), ('q0', 'q1', 'q2'))
DELTA_LEVELS = qa.RegisterShape((3,), ('delta',))
DICKE_PAIR = qa.RegisterShape((2,), ('dicke-pair',))


class ModelError(ValueError):
    """Raised for model parameters outside the model's domain."""


def _ket(shape: qa.RegisterShape, terms: dict) -> qa.StateVector:
    return qa.StateVector.superposition(shape, terms)


def excitation_number(shape: qa.RegisterShape) -> np.ndarray:
    """Diagonal of the total excitation operator (sum of site levels)."""
    return np.array([sum(shape.digits(i)) for i in range(shape.total)], dtype=float)


def _transition(dims: Sequence[int], couplings: dict) -> np.ndarray:
    """Sum of |row><col| entries with values; rows and cols are digit tuples."""
    shape = qa.RegisterShape(tuple(dims))
    h = np.zeros((shape.total, shape.total), dtype=complex)
    for (row, col), value in couplings.items():
        h[shape.index(row), shape.index(col)] += value
    return h


# ==================== CZ PAIR (LAMBDA + V SYSTEMS) ====================

@dataclass(frozen=True)
class CzPairModel:
    """Simultaneous |11>-|20> drives on (q0,q1) and (q0,q2); delta = E(11) - E(20)."""
    lambda1: complex
    lambda2: complex
    delta: float = 0.0
    shape: qa.RegisterShape = field(default=QUTRITS3, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'lambda1', complex(self.lambda1))
        object.__setattr__(self, 'lambda2', complex(self.lambda2))
        if self.omega == 0:
            raise ModelError("both couplings are zero")

    @property
    def omega(self) -> float:
        return float(np.hypot(abs(self.lambda1), abs(self.lambda2)))

    @property
    def drive(self) -> gl.PhysicalCzDrive:
        return gl.PhysicalCzDrive(self.lambda1, self.lambda2, self.delta)

    def gate_params(self) -> tuple:
        return gl.params_from_drive(self.drive)

    def t_gate(self) -> float:
        return gl.params_from_drive(self.drive)[1]

    # Lambda system: |101>, |110> coupled through |200>
    def bright_state(self) -> qa.StateVector:
        return _ket(self.shape, {'101': self.lambda2, '110': self.lambda1})

    def dark_state(self) -> qa.StateVector:
        return _ket(self.shape, {'101': np.conj(self.lambda1), '110': -np.conj(self.lambda2)})

    def excited_state(self) -> qa.StateVector:
        return qa.StateVector.basis(self.shape, '200')

    # V system: |111> coupled to |201> and |210>
    def v_bright_state(self) -> qa.StateVector:
        return _ket(self.shape, {'201': np.conj(self.lambda1), '210': np.conj(self.lambda2)})

    def v_dark_state(self) -> qa.StateVector:
        return _ket(self.shape, {'201': self.lambda2, '210': -self.lambda1})

    def v_excited_state(self) -> qa.StateVector:
        return qa.StateVector.basis(self.shape, '111')


# ==================== ISWAP PAIR ====================

@dataclass(frozen=True)
class IswapPairModel:
    """Simultaneous exchange of q0 with q1 (g1) and q2 (g2)."""
    g1: float
    g2: float
    shape: qa.RegisterShape = field(default=gl.QUBITS3, repr=False)

    def __post_init__(self):
        if self.omega == 0:
            raise ModelError("both couplings are zero")

    @property
    def omega(self) -> float:
        return float(np.hypot(self.g1, self.g2))

    def div_params(self, t: float) -> gl.DivParams:
        return gl.DivParams.from_couplings(self.g1, self.g2, t)

    def t_gate(self, varphi: float = np.pi / 2) -> float:
        return varphi / self.omega

    def bright_states(self) -> tuple:
        return (_ket(self.shape, {'010': self.g1, '001': self.g2}),
                _ket(self.shape, {'101': self.g1, '110': self.g2}))

    def dark_states(self) -> tuple:
        return (_ket(self.shape, {'010': self.g2, '001': -self.g1}),
                _ket(self.shape, {'101': self.g2, '110': -self.g1}))


# ==================== DICKE (N NEIGHBOURS) ====================

# Centre transitions driven by the collective coupling
CZ_TRANSITION = (1, 2)
ISWAP_TRANSITION = (0, 1)


@dataclass(frozen=True)
class DickeModel:
    """Centre qutrit q0 coupled to N qubit neighbours; `transition` is the centre (lower, upper) pair."""
    couplings: tuple
    transition: tuple = CZ_TRANSITION

    def __post_init__(self):
        couplings = tuple(complex(c) for c in self.couplings)
        if not couplings:
            raise ModelError("Dicke model needs at least one neighbour")
        if tuple(self.transition) not in (CZ_TRANSITION, ISWAP_TRANSITION):
            raise ModelError(f"unsupported centre transition {self.transition}")
        object.__setattr__(self, 'couplings', couplings)
        object.__setattr__(self, 'transition', tuple(self.transition))

    @classmethod
    def uniform(cls, n: int, lam: float, transition: tuple = CZ_TRANSITION) -> 'DickeModel':
        return cls((lam,) * n, transition)

    @property
    def n(self) -> int:
        return len(self.couplings)

    @property
    def symmetric(self) -> bool:
        return all(np.isclose(c, self.couplings[0], rtol=0, atol=1e-15) for c in self.couplings)

    @property
    def collective_coupling(self) -> float:
        return float(np.sqrt(sum(abs(c) ** 2 for c in self.couplings)))

    def shape(self, symmetric: bool = None) -> qa.RegisterShape:
        symmetric = self.symmetric if symmetric is None else symmetric
        if symmetric:
            return qa.RegisterShape((3, self.n + 1), ('q0', f'D{self.n}'))
        return qa.RegisterShape((3,) + (2,) * self.n, ('q0',) + tuple(f'q{j + 1}' for j in range(self.n)))

    def step_time(self, k: int) -> float:
        """Time for full transfer |upper>|D^k> -> |lower>|D^{k+1}>."""
        lam = abs(self.couplings[0])
        return np.pi / (2 * lam * collective_factor(self.n, k))


def collective_factor(n: int, k: int) -> float:
    """<D_N^k| J^- |D_N^{k+1}> = sqrt((N - k)(k + 1))"""
    if not 0 <= k <= n - 1:
        raise ModelError(f"k={k} outside 0..{n - 1}")
    return float(np.sqrt((n - k) * (k + 1)))


def dicke_amplitudes(n: int, k: int) -> np.ndarray:
    """|D_N^k> over the 2^N qubit basis."""
    if not 0 <= k <= n:
        raise ModelError(f"k={k} outside 0..{n}")
    weights = np.array([bin(i).count('1') == k for i in range(2 ** n)], dtype=complex)
    return weights / np.sqrt(comb(n, k))


def symmetric_embedding(n: int) -> np.ndarray:
    """Columns map |D_N^k> (k = 0..N) into the 2^N qubit basis."""
    return np.column_stack([dicke_amplitudes(n, k) for k in range(n + 1)])


def dicke_step(n: int, k: int, lam: float, t: float) -> qa.Operator:
    """cos(t lam G) - i sin(t lam G) sigma_x in basis {|1>|D^{k+1}>, |2>|D^k>}."""
    g = collective_factor(n, k)
    c, s = np.cos(t * lam * g), np.sin(t * lam * g)
    return qa.Operator(DICKE_PAIR, np.array([[c, -1j * s], [-1j * s, c]]), unitary=True)


# ==================== DELTA SYSTEM ====================

@dataclass(frozen=True)
class DeltaSystemModel:
    """Rotating-frame three-level system |1>=|101>, |2>=|200>, |3>=|110> with a direct 1-3 coupling."""
    alpha12: float
    alpha23: float
    alpha13: float
    delta1: float = 0.0
    delta3: float = 0.0
    phase: float = 0.0

    @property
    def omega(self) -> float:
        """Two-level frequency of the |B>, |2> pair for alpha12 = alpha23."""
        return float(np.sqrt((self.alpha13 / 2) ** 2 + 2 * self.alpha12 ** 2))

    @property
    def symmetric_resonant(self) -> bool:
        return (self.delta1 == 0 and self.delta3 == 0 and self.phase == 0
                and np.isclose(self.alpha12, self.alpha23, rtol=0, atol=1e-15))


def full_transfer_coupling(alpha13: float) -> float:
    """alpha12 = alpha23 giving complete |1> -> |3> transfer with no |2> population left.

    Transfer happens at Omega t = pi (alpha13 t = 4 pi / 3) and again at Omega t = 3 pi (t = 4 pi / alpha13).
    """
    return abs(alpha13) * np.sqrt(5 / 32)


def _delta_closed_form(model: DeltaSystemModel, t: float, m: int) -> np.ndarray:
    b = (-1) ** m * np.exp(-0.5j * model.alpha13 * t)
    d = np.exp(1j * model.alpha13 * t)
    return np.array([
        [(b + d) / 2, 0, (b - d) / 2],
        [0, b, 0],
        [(b - d) / 2, 0, (b + d) / 2],
    ], dtype=complex)


def delta_system_propagator(model: DeltaSystemModel, t: float) -> qa.Operator:
    """Bare-basis propagator; closed form when Omega t is a multiple of pi in the symmetric resonant case."""
    if model.symmetric_resonant and model.omega > 0:
        turns = model.omega * t / np.pi
        m = int(round(turns))
        if abs(turns - m) <= 1e-12 * max(1.0, turns):
            return qa.Operator(DELTA_LEVELS, _delta_closed_form(model, t, m), unitary=True)
    return qa.expm(build_hamiltonian(model), t)


def delta_transfer_probability(model: DeltaSystemModel, t: float) -> float:
    """|<3|U(t)|1>|^2"""
    return float(abs(delta_system_propagator(model, t).matrix[2, 0]) ** 2)


# ==================== HAMILTONIANS ====================

@singledispatch
def build_hamiltonian(model) -> qa.Operator:
    raise ModelError(f"no Hamiltonian for {type(model).__name__}")


@build_hamiltonian.register
def _(model: CzPairModel) -> qa.Operator:
    l1, l2 = model.lambda1, model.lambda2
    h = _transition((3, 3, 3), {
        (('1', '1', '0'), ('2', '0', '0')): l1,
        (('1', '1', '1'), ('2', '0', '1')): l1,
        (('1', '0', '1'), ('2', '0', '0')): l2,
        (('1', '1', '1'), ('2', '1', '0')): l2,
    })
    h = h + h.conj().T
    for digits in ('200', '201', '210'):
        idx = model.shape.index(digits)
        h[idx, idx] -= model.delta
    return qa.Operator(model.shape, h, hermitian=True)


@build_hamiltonian.register
def _(model: IswapPairModel) -> qa.Operator:
    raise_q0 = np.array([[0, 0], [1, 0]])
    lower = np.array([[0, 1], [0, 0]])
    h = model.g1 * np.kron(np.kron(raise_q0, lower), np.eye(2)) \
        + model.g2 * np.kron(np.kron(raise_q0, np.eye(2)), lower)
    h = h + h.conj().T
    return qa.Operator(model.shape, h, hermitian=True)


@build_hamiltonian.register
def _(model: DickeModel) -> qa.Operator:
    return dicke_hamiltonian(model)


@build_hamiltonian.register
def _(model: DeltaSystemModel) -> qa.Operator:
    h = np.zeros((3, 3), dtype=complex)
    h[0, 1] = model.alpha12
    h[1, 2] = model.alpha23
    h[0, 2] = model.alpha13 * np.exp(1j * model.phase)
    h = h + h.conj().T
    h[0, 0] += model.delta1
    h[2, 2] += model.delta3
    return qa.Operator(DELTA_LEVELS, h, hermitian=True)


def dicke_hamiltonian(model: DickeModel, symmetric: bool = None) -> qa.Operator:
    """|upper><lower|_0 sum_j lambda_j |0><1|_j + H.c., symmetric or full register."""
    symmetric = model.symmetric if symmetric is None else symmetric
    if symmetric and not model.symmetric:
        raise ModelError("symmetric representation needs equal couplings")
    lower, upper = model.transition
    shape = model.shape(symmetric)
    h = np.zeros((shape.total, shape.total), dtype=complex)
    if symmetric:
        lam = model.couplings[0]
        for k in range(model.n):
            row = shape.index((upper, k))
            col = shape.index((lower, k + 1))
            h[row, col] = lam * collective_factor(model.n, k)
    else:
        centre = np.zeros((3, 3))
        centre[upper, lower] = 1.0
        lowering = np.array([[0, 1], [0, 0]])
        for j, lam in enumerate(model.couplings):
            local = np.kron(centre, lowering)
            h += lam * qa.embed_matrix(local, shape.dims, (0, j + 1))
    h = h + h.conj().T
    return qa.Operator(shape, h, hermitian=True)


def dicke_excitation_number(model: DickeModel, symmetric: bool = None) -> np.ndarray:
    """Diagonal of centre level + neighbour excitations."""
    symmetric = model.symmetric if symmetric is None else symmetric
    return excitation_number(model.shape(symmetric))


# ==================== PROPAGATION ====================

def propagate(model, t: float) -> qa.Operator:
    """Exact e^{-iHt} for constant parameters."""
    if t < 0:
        raise ModelError(f"negative evolution time {t}")
    if isinstance(model, DeltaSystemModel):
        return delta_system_propagator(model, t)
    return qa.expm(build_hamiltonian(model), t)


def pulse_area(envelope: Callable[[float], float], t_end: float) -> float:
    """Integral of a dimensionless common envelope over [0, t_end]."""
    area, _ = integrate.quad(envelope, 0.0, t_end, limit=200)
    return float(area)


def propagate_with_envelope(model, envelope: Callable[[float], float], t_end: float) -> qa.Operator:
    """Propagator for couplings sharing one envelope, via pulse-area substitution."""
    if isinstance(model, CzPairModel) and model.delta != 0:
        raise ModelError("pulse-area substitution needs delta = 0")
    if isinstance(model, DeltaSystemModel):
        raise ModelError("pulse-area substitution is not defined for the Delta system")
    return qa.expm(build_hamiltonian(model), pulse_area(envelope, t_end))
