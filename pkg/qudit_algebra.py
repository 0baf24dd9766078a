# Qudit register algebra
# Dense states and operators over mixed-dimension registers of d-level sites

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.stats import unitary_group

logger = logging.getLogger(__name__)

# Tolerances for algebraic identities and propagator-vs-analytic comparisons
ALGEBRA_TOL = 1e-10
PROPAGATOR_TOL = 1e-8

# Significant digits used when serializing matrices
DUMP_DIGITS = 12


class ShapeMismatchError(ValueError):
    """Raised when register shapes or matrix dimensions do not compose."""


class NotHermitianError(ValueError):
    """Raised when a generator passed to expm is not hermitian."""


# ==================== REGISTER SHAPE ====================

@dataclass(frozen=True)
class RegisterShape:
    """Ordered per-site dimensions with site labels (q0, q1, q2, c1, c2, ...)."""
    dims: tuple
    labels: tuple = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise ShapeMismatchError("register needs at least one site")
        if any(d < 2 for d in dims):
            raise ShapeMismatchError(f"every site needs dimension >= 2, got {dims}")
        labels = tuple(self.labels) if self.labels else tuple(f"q{i}" for i in range(len(dims)))
        if len(labels) != len(dims):
            raise ShapeMismatchError(f"{len(labels)} labels for {len(dims)} sites")
        if len(set(labels)) != len(labels):
            raise ShapeMismatchError(f"duplicate site labels {labels}")
        object.__setattr__(self, 'dims', dims)
        object.__setattr__(self, 'labels', labels)

    @classmethod
    def uniform(cls, n_sites: int, dim: int, labels: Sequence[str] = ()) -> 'RegisterShape':
        return cls((dim,) * n_sites, tuple(labels))

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    @property
    def total(self) -> int:
        return int(np.prod(self.dims))

    @property
    def strides(self) -> tuple:
        """Index weight of each site; the last site varies fastest."""
        strides = []
        acc = 1
        for d in reversed(self.dims):
            strides.append(acc)
            acc *= d
        return tuple(reversed(strides))

    def site(self, key: Union[int, str]) -> int:
        """Resolve a site label or position to its position."""
        if isinstance(key, str):
            try:
                return self.labels.index(key)
            except ValueError:
                raise ShapeMismatchError(f"no site labelled {key!r} in {self.labels}") from None
        if not 0 <= key < self.n_sites:
            raise ShapeMismatchError(f"site {key} outside register of {self.n_sites} sites")
        return int(key)

    def index(self, digits: Union[str, Sequence[int]]) -> int:
        """Basis index of |d0 d1 ...>."""
        digits = _parse_digits(digits)
        if len(digits) != self.n_sites:
            raise ShapeMismatchError(f"{len(digits)} digits for {self.n_sites} sites")
        for d, dim in zip(digits, self.dims):
            if not 0 <= d < dim:
                raise ShapeMismatchError(f"level {d} outside site dimension {dim}")
        return int(sum(d * s for d, s in zip(digits, self.strides)))

    def digits(self, index: int) -> tuple:
        if not 0 <= index < self.total:
            raise ShapeMismatchError(f"index {index} outside register of dimension {self.total}")
        return tuple(int(d) for d in np.unravel_index(index, self.dims))

    def label(self, index: int) -> str:
        return '|' + ''.join(str(d) for d in self.digits(index)) + '>'

    def subshape(self, sites: Sequence[int]) -> 'RegisterShape':
        sites = [self.site(s) for s in sites]
        return RegisterShape(tuple(self.dims[s] for s in sites), tuple(self.labels[s] for s in sites))

    def with_dims(self, dim: int) -> 'RegisterShape':
        """Same labels, every site truncated to `dim` levels."""
        return RegisterShape((dim,) * self.n_sites, self.labels)


def _parse_digits(digits) -> tuple:
    if isinstance(digits, str):
        digits = digits.strip('|>⟩ ')
        return tuple(int(c) for c in digits)
    return tuple(int(d) for d in digits)


# ==================== STATES ====================

@dataclass(frozen=True, eq=False)
class StateVector:
    shape: RegisterShape
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.shape.total:
            raise ShapeMismatchError(f"{amps.size} amplitudes for register of dimension {self.shape.total}")
        amps.setflags(write=False)
        object.__setattr__(self, 'amplitudes', amps)

    @classmethod
    def basis(cls, shape: RegisterShape, digits) -> 'StateVector':
        amps = np.zeros(shape.total, dtype=complex)
        amps[shape.index(digits)] = 1.0
        return cls(shape, amps)

    @classmethod
    def superposition(cls, shape: RegisterShape, terms: dict) -> 'StateVector':
        """Normalized sum of {digits: amplitude} terms."""
        amps = np.zeros(shape.total, dtype=complex)
        for digits, amp in terms.items():
            amps[shape.index(digits)] += amp
        return cls(shape, amps).normalized()

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> 'StateVector':
        norm = self.norm
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.shape, self.amplitudes / norm)

    def amplitude(self, digits) -> complex:
        return complex(self.amplitudes[self.shape.index(digits)])

    def population(self, digits) -> float:
        return float(abs(self.amplitude(digits)) ** 2)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def overlap(self, other: 'StateVector') -> complex:
        """<self|other>"""
        _check_same_shape(self.shape, other.shape)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: 'StateVector') -> float:
        return float(abs(self.overlap(other)) ** 2)

    def support(self, tol: float = 1e-12) -> dict:
        """Nonzero amplitudes keyed by basis label."""
        return {self.shape.label(i): complex(a) for i, a in enumerate(self.amplitudes) if abs(a) > tol}


# ==================== OPERATORS ====================

@dataclass(frozen=True, eq=False)
class Operator:
    """Square matrix over a register. Flags are tri-state: True, False or None (unchecked)."""
    shape: RegisterShape
    matrix: np.ndarray
    hermitian: Optional[bool] = None
    unitary: Optional[bool] = None

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        dim = self.shape.total
        if mat.shape != (dim, dim):
            raise ShapeMismatchError(f"matrix of shape {mat.shape} for register of dimension {dim}")
        mat.setflags(write=False)
        object.__setattr__(self, 'matrix', mat)
        if self.unitary and unitarity_error(mat) > ALGEBRA_TOL:
            raise ValueError(f"operator flagged unitary has |U'U - I| = {unitarity_error(mat):.3e}")

    @classmethod
    def identity(cls, shape: RegisterShape) -> 'Operator':
        return cls(shape, np.eye(shape.total), hermitian=True, unitary=True)

    @classmethod
    def from_function(cls, shape: RegisterShape, entries: dict, **flags) -> 'Operator':
        """Build from {(bra_digits, ket_digits): value}."""
        mat = np.zeros((shape.total, shape.total), dtype=complex)
        for (row, col), value in entries.items():
            mat[shape.index(row), shape.index(col)] += value
        return cls(shape, mat, **flags)

    @property
    def dim(self) -> int:
        return self.shape.total

    def dag(self) -> 'Operator':
        return Operator(self.shape, self.matrix.conj().T, hermitian=self.hermitian, unitary=self.unitary)

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            return self.apply(other)
        _check_same_shape(self.shape, other.shape)
        both_unitary = True if (self.unitary and other.unitary) else None
        return Operator(self.shape, self.matrix @ other.matrix, unitary=both_unitary)

    def __add__(self, other: 'Operator') -> 'Operator':
        _check_same_shape(self.shape, other.shape)
        return Operator(self.shape, self.matrix + other.matrix)

    def __sub__(self, other: 'Operator') -> 'Operator':
        _check_same_shape(self.shape, other.shape)
        return Operator(self.shape, self.matrix - other.matrix)

    def scaled(self, factor: complex) -> 'Operator':
        return Operator(self.shape, factor * self.matrix)

    def apply(self, state: StateVector) -> StateVector:
        _check_same_shape(self.shape, state.shape)
        return StateVector(self.shape, self.matrix @ state.amplitudes)

    def entry(self, row, col) -> complex:
        return complex(self.matrix[self.shape.index(row), self.shape.index(col)])

    def is_hermitian(self, tol: float = ALGEBRA_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)

    def is_unitary(self, tol: float = ALGEBRA_TOL) -> bool:
        return unitarity_error(self.matrix) <= tol

    def checked(self) -> 'Operator':
        """Copy with both flags resolved."""
        return Operator(self.shape, self.matrix, hermitian=self.is_hermitian(), unitary=self.is_unitary())

    def max_deviation(self, other: 'Operator') -> float:
        _check_same_shape(self.shape, other.shape)
        return float(np.max(np.abs(self.matrix - other.matrix)))

    def phase_deviation(self, other: 'Operator') -> float:
        """Max entry deviation after aligning the global phase of `other`."""
        _check_same_shape(self.shape, other.shape)
        return global_phase_residual(self.matrix, other.matrix)

    def equals(self, other: 'Operator', tol: float = ALGEBRA_TOL) -> bool:
        return self.max_deviation(other) <= tol

    def equals_up_to_phase(self, other: 'Operator', tol: float = ALGEBRA_TOL) -> bool:
        return self.phase_deviation(other) <= tol


def _check_same_shape(a: RegisterShape, b: RegisterShape):
    if a.dims != b.dims:
        raise ShapeMismatchError(f"register dims {a.dims} and {b.dims} differ")


def unitarity_error(matrix: np.ndarray) -> float:
    """max |U'U - I|"""
    matrix = np.asarray(matrix)
    return float(np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0]))))


def global_phase_residual(a: np.ndarray, b: np.ndarray) -> float:
    """max |a - e^{ix} b| with x chosen by the phase of Tr(b'a)."""
    overlap = np.vdot(b, a)
    phase = overlap / abs(overlap) if abs(overlap) > 1e-300 else 1.0
    return float(np.max(np.abs(a - phase * b)))


# ==================== TENSOR STRUCTURE ====================

def kron(ops: Sequence[Operator]) -> Operator:
    """Tensor product; site order follows the list order."""
    if not ops:
        raise ShapeMismatchError("kron needs at least one operator")
    matrix = ops[0].matrix
    dims = list(ops[0].shape.dims)
    labels = list(ops[0].shape.labels)
    for op in ops[1:]:
        matrix = np.kron(matrix, op.matrix)
        dims.extend(op.shape.dims)
        labels.extend(op.shape.labels)
    if len(set(labels)) != len(labels):
        labels = [f"q{i}" for i in range(len(dims))]
    unitary = True if all(op.unitary for op in ops) else None
    return Operator(RegisterShape(tuple(dims), tuple(labels)), matrix, unitary=unitary)


def kron_states(states: Sequence[StateVector]) -> StateVector:
    amps = states[0].amplitudes
    dims = list(states[0].shape.dims)
    labels = list(states[0].shape.labels)
    for state in states[1:]:
        amps = np.kron(amps, state.amplitudes)
        dims.extend(state.shape.dims)
        labels.extend(state.shape.labels)
    if len(set(labels)) != len(labels):
        labels = [f"q{i}" for i in range(len(dims))]
    return StateVector(RegisterShape(tuple(dims), tuple(labels)), amps)


def embed_matrix(local: np.ndarray, dims: Sequence[int], sites: Sequence[int]) -> np.ndarray:
    """Place a matrix acting on `sites` (in that order) into the full register."""
    dims = tuple(dims)
    n = len(dims)
    sites = list(sites)
    if len(set(sites)) != len(sites):
        raise ShapeMismatchError(f"repeated sites {sites}")
    local_dim = int(np.prod([dims[s] for s in sites]))
    if local.shape != (local_dim, local_dim):
        raise ShapeMismatchError(f"local matrix {local.shape} does not fit sites {sites} of {dims}")
    rest = [s for s in range(n) if s not in sites]
    order = sites + rest
    rest_dim = int(np.prod([dims[s] for s in rest])) if rest else 1
    big = np.kron(local, np.eye(rest_dim))
    ordered_dims = [dims[s] for s in order]
    axes = [order.index(i) for i in range(n)]
    axes = axes + [n + a for a in axes]
    total = int(np.prod(dims))
    return big.reshape(ordered_dims + ordered_dims).transpose(axes).reshape(total, total)


def embed(op: Operator, shape: RegisterShape, sites: Sequence[Union[int, str]]) -> Operator:
    """Embed a k-site operator into `shape` on the given sites."""
    positions = [shape.site(s) for s in sites]
    local_dims = tuple(shape.dims[s] for s in positions)
    if local_dims != op.shape.dims:
        raise ShapeMismatchError(f"operator dims {op.shape.dims} do not match sites {local_dims}")
    matrix = embed_matrix(op.matrix, shape.dims, positions)
    return Operator(shape, matrix, hermitian=op.hermitian, unitary=op.unitary)


def truncate_levels(op: Operator, dim: int) -> Operator:
    """Restrict every site of `op` to its lowest `dim` levels."""
    if any(d < dim for d in op.shape.dims):
        raise ShapeMismatchError(f"cannot truncate {op.shape.dims} to {dim} levels")
    small = op.shape.with_dims(dim)
    keep = [op.shape.index(small.digits(i)) for i in range(small.total)]
    return Operator(small, op.matrix[np.ix_(keep, keep)])


def pad_levels(op: Operator, dim: int) -> Operator:
    """Lift an operator to `dim` levels per site; new levels are left invariant."""
    big = op.shape.with_dims(dim)
    matrix = np.eye(big.total, dtype=complex)
    keep = [big.index(op.shape.digits(i)) for i in range(op.shape.total)]
    matrix[np.ix_(keep, keep)] = op.matrix
    return Operator(big, matrix, unitary=op.unitary)


# ==================== EXPONENTIALS ====================

def expm(H: Operator, t: float, tol: float = ALGEBRA_TOL) -> Operator:
    """e^{-iHt} via the spectral decomposition of the hermitian generator."""
    scale = max(1.0, float(np.max(np.abs(H.matrix))))
    if not H.is_hermitian(tol * scale):
        raise NotHermitianError("expm requires a hermitian generator")
    return Operator(H.shape, propagator(H.matrix, t), unitary=True)


def propagator(h: np.ndarray, t: float) -> np.ndarray:
    """Raw e^{-iht} for a hermitian array."""
    h = 0.5 * (h + h.conj().T)
    energies, vectors = linalg.eigh(h)
    return (vectors * np.exp(-1j * energies * t)) @ vectors.conj().T


# ==================== COMPUTATIONAL SUBSPACE ====================

@dataclass(frozen=True)
class ComputationalProjector:
    """Qubit sites restricted to {0,1}; every other site pinned at level 0."""
    shape: RegisterShape
    qubit_sites: tuple = ()
    indices: tuple = field(init=False, repr=False)

    def __post_init__(self):
        sites = tuple(self.shape.site(s) for s in self.qubit_sites) if self.qubit_sites \
            else tuple(range(self.shape.n_sites))
        if len(set(sites)) != len(sites):
            raise ShapeMismatchError(f"repeated qubit sites {sites}")
        object.__setattr__(self, 'qubit_sites', tuple(sorted(sites)))
        indices = []
        for bits in np.ndindex(*(2,) * len(sites)):
            digits = [0] * self.shape.n_sites
            for site, bit in zip(self.qubit_sites, bits):
                digits[site] = bit
            indices.append(self.shape.index(digits))
        object.__setattr__(self, 'indices', tuple(indices))

    @property
    def n(self) -> int:
        return len(self.indices)

    @property
    def qubit_shape(self) -> RegisterShape:
        return RegisterShape((2,) * len(self.qubit_sites), tuple(self.shape.labels[s] for s in self.qubit_sites))

    @property
    def matrix(self) -> np.ndarray:
        proj = np.zeros((self.shape.total, self.shape.total))
        proj[self.indices, self.indices] = 1.0
        return proj


def project_computational(M_full: Operator, P: ComputationalProjector) -> Operator:
    """n x n block of M_full on the computational subspace (not unitary under leakage)."""
    _check_same_shape(M_full.shape, P.shape)
    idx = list(P.indices)
    return Operator(P.qubit_shape, M_full.matrix[np.ix_(idx, idx)])


def leakage_norm(U: Operator, P: ComputationalProjector) -> float:
    """max |(I - P) U P|"""
    _check_same_shape(U.shape, P.shape)
    inside = set(P.indices)
    outside = [i for i in range(U.dim) if i not in inside]
    if not outside:
        return 0.0
    return float(np.max(np.abs(U.matrix[np.ix_(outside, list(P.indices))])))


# ==================== RANDOM INPUTS ====================

def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (a + a.conj().T)
    return scale * h / np.linalg.norm(h, 2)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    return unitary_group.rvs(dim, random_state=rng)


def random_states(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure states as rows."""
    psi = rng.normal(size=(count, dim)) + 1j * rng.normal(size=(count, dim))
    return psi / np.linalg.norm(psi, axis=1, keepdims=True)


# ==================== SERIALIZATION ====================

def _round(x: float) -> float:
    return float(f"{x:.{DUMP_DIGITS}g}")


def _pairs(values: Iterable[complex]) -> list:
    return [[_round(v.real), _round(v.imag)] for v in values]


def operator_to_json(op: Operator) -> dict:
    return {
        'kind': 'operator',
        'dims': list(op.shape.dims),
        'labels': list(op.shape.labels),
        'entries': [_pairs(row) for row in op.matrix],
    }


def operator_from_json(data: dict) -> Operator:
    if data.get('kind') != 'operator':
        raise ShapeMismatchError(f"expected kind 'operator', got {data.get('kind')!r}")
    shape = RegisterShape(tuple(data['dims']), tuple(data.get('labels', ())))
    entries = np.array([[complex(re, im) for re, im in row] for row in data['entries']], dtype=complex)
    return Operator(shape, entries)


def state_to_json(state: StateVector) -> dict:
    return {
        'kind': 'state',
        'dims': list(state.shape.dims),
        'labels': list(state.shape.labels),
        'amplitudes': _pairs(state.amplitudes),
    }


def state_from_json(data: dict) -> StateVector:
    if data.get('kind') != 'state':
        raise ShapeMismatchError(f"expected kind 'state', got {data.get('kind')!r}")
    shape = RegisterShape(tuple(data['dims']), tuple(data.get('labels', ())))
    return StateVector(shape, [complex(re, im) for re, im in data['amplitudes']])
