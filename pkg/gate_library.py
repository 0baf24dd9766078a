# Gate library
# Closed-form CCZS and DIV families, the named gates they relate to, and identity checks between them

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional

import numpy as np

import qudit_algebra as qa

logger = logging.getLogger(__name__)

# |q0 q1 q2>, q0 is the middle (control) qubit of the chain
QUBITS3 = qa.RegisterShape((2, 2, 2), ('q0', 'q1', 'q2'))
OUTER_PAIR = qa.RegisterShape((2, 2), ('q1', 'q2'))
QUBIT = qa.RegisterShape((2,), ('q',))
PAIR = qa.RegisterShape((2, 2), ('a', 'b'))
DIV_BLOCK = qa.RegisterShape((3,), ('block',))

# Computational basis indices of the two DIV blocks
DIV_ONE_EXCITATION = ('010', '100', '001')
DIV_TWO_EXCITATIONS = ('101', '011', '110')


class GateParameterError(ValueError):
    """Raised for gate parameters outside their allowed domain."""


# ==================== PARAMETER TYPES ====================

@dataclass(frozen=True)
class CczsParams:
    theta: float
    phi: float
    gamma: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite([self.theta, self.phi, self.gamma])):
            raise GateParameterError(f"non-finite CCZS parameters {self}")
        if not -np.pi < self.gamma < np.pi:
            raise GateParameterError(f"gamma must lie strictly inside (-pi, pi), got {self.gamma}")


@dataclass(frozen=True)
class PhysicalCzDrive:
    """Couplings on |11>-|20> type transitions and the detuning delta = E(11) - E(20)."""
    lambda1: complex
    lambda2: complex
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'lambda1', complex(self.lambda1))
        object.__setattr__(self, 'lambda2', complex(self.lambda2))
        object.__setattr__(self, 'delta', float(self.delta))
        if self.omega == 0:
            raise GateParameterError("both couplings are zero")

    @property
    def omega(self) -> float:
        return float(np.hypot(abs(self.lambda1), abs(self.lambda2)))


@dataclass(frozen=True)
class DivParams:
    theta: float
    varphi: float

    @classmethod
    def from_couplings(cls, g1: float, g2: float, t: float) -> 'DivParams':
        """tan(theta) = g2/g1 and varphi = Omega t."""
        if g1 < 0 or g2 < 0:
            raise GateParameterError("couplings must be non-negative")
        omega = float(np.hypot(g1, g2))
        if omega == 0:
            raise GateParameterError("both couplings are zero")
        return cls(float(np.arctan2(g2, g1)), omega * t)


def _wrap(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = float(np.angle(np.exp(1j * angle)))
    return np.pi if np.isclose(wrapped, -np.pi, atol=1e-15) else wrapped


# ==================== CCZS FAMILY ====================

def u_czs(p: CczsParams) -> qa.Operator:
    """Outer-pair block applied when q0 is excited, basis |q1 q2>."""
    s, c = np.sin(p.theta / 2), np.cos(p.theta / 2)
    eg = np.exp(1j * p.gamma)
    off = 0.5 * (1 + eg) * np.sin(p.theta)
    matrix = np.array([
        [1, 0, 0, 0],
        [0, -eg * s ** 2 + c ** 2, off * np.exp(-1j * p.phi), 0],
        [0, off * np.exp(1j * p.phi), -eg * c ** 2 + s ** 2, 0],
        [0, 0, 0, -eg],
    ], dtype=complex)
    return qa.Operator(OUTER_PAIR, matrix, unitary=True)


def controlled_on_q0(on_block: qa.Operator, off_block: Optional[qa.Operator] = None) -> qa.Operator:
    """|0><0| x off_block + |1><1| x on_block on the three-qubit register."""
    off = np.eye(4) if off_block is None else off_block.matrix
    p0 = np.diag([1.0, 0.0])
    p1 = np.diag([0.0, 1.0])
    matrix = np.kron(p0, off) + np.kron(p1, on_block.matrix)
    return qa.Operator(QUBITS3, matrix, unitary=True)


def cczs(p: CczsParams) -> qa.Operator:
    return controlled_on_q0(u_czs(p))


def cczs_with_stray_coupling(p: CczsParams, beta: float) -> qa.Operator:
    """CCZS when a direct q1-q2 exchange of angle beta = g t acts while q0 is idle."""
    return controlled_on_q0(u_czs(p), u_iswap_beta(beta))


def params_from_drive(d: PhysicalCzDrive) -> tuple:
    """(CczsParams, t_gate) for constant couplings; lambda2/lambda1 = -e^{-i phi} tan(theta/2)."""
    omega = d.omega
    if abs(d.lambda1) == 0:
        theta, phi = np.pi, 0.0
    elif abs(d.lambda2) == 0:
        theta, phi = 0.0, 0.0
    else:
        ratio = d.lambda2 / d.lambda1
        theta = 2 * np.arctan(abs(ratio))
        phi = _wrap(np.pi - np.angle(ratio))
    gamma = np.pi * d.delta / np.sqrt(4 * omega ** 2 + d.delta ** 2)
    t_gate = np.pi / np.sqrt(omega ** 2 + d.delta ** 2 / 4)
    return CczsParams(float(theta), float(phi), float(gamma)), float(t_gate)


def drive_from_params(p: CczsParams, omega: float = 1.0) -> PhysicalCzDrive:
    """A drive with total coupling `omega` that realizes p."""
    lambda1 = omega * np.cos(p.theta / 2)
    lambda2 = -omega * np.exp(-1j * p.phi) * np.sin(p.theta / 2)
    delta = 2 * omega * p.gamma / np.sqrt(np.pi ** 2 - p.gamma ** 2)
    return PhysicalCzDrive(lambda1, lambda2, delta)


# ==================== DIV FAMILY ====================

def u_div_block(p: DivParams) -> qa.Operator:
    """One-excitation block in basis (|010>, |100>, |001>); the two-excitation block has the same form."""
    st, ct = np.sin(p.theta), np.cos(p.theta)
    cp, sp = np.cos(p.varphi), np.sin(p.varphi)
    matrix = np.array([
        [st ** 2 + ct ** 2 * cp, -1j * ct * sp, 0.5 * np.sin(2 * p.theta) * (cp - 1)],
        [-1j * ct * sp, cp, -1j * st * sp],
        [0.5 * np.sin(2 * p.theta) * (cp - 1), -1j * st * sp, ct ** 2 + st ** 2 * cp],
    ], dtype=complex)
    return qa.Operator(DIV_BLOCK, matrix, unitary=True)


def div(p: DivParams) -> qa.Operator:
    block = u_div_block(p).matrix
    matrix = np.eye(8, dtype=complex)
    for basis in (DIV_ONE_EXCITATION, DIV_TWO_EXCITATIONS):
        idx = [QUBITS3.index(b) for b in basis]
        matrix[np.ix_(idx, idx)] = block
    return qa.Operator(QUBITS3, matrix, unitary=True)


# ==================== NAMED GATES ====================

def xy(theta: float, phi: float) -> qa.Operator:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    matrix = np.array([
        [1, 0, 0, 0],
        [0, c, 1j * s * np.exp(1j * phi), 0],
        [0, 1j * s * np.exp(-1j * phi), c, 0],
        [0, 0, 0, 1],
    ], dtype=complex)
    return qa.Operator(PAIR, matrix, unitary=True)


def cz(gamma: float = 0.0) -> qa.Operator:
    return qa.Operator(PAIR, np.diag([1, 1, 1, -np.exp(1j * gamma)]), unitary=True)


def iswap() -> qa.Operator:
    return xy(np.pi, 0.0)


def u_iswap_beta(beta: float) -> qa.Operator:
    """Exchange propagator; beta = pi/2 swaps with a -i phase."""
    c, s = np.cos(beta), np.sin(beta)
    matrix = np.array([
        [1, 0, 0, 0],
        [0, c, -1j * s, 0],
        [0, -1j * s, c, 0],
        [0, 0, 0, 1],
    ], dtype=complex)
    return qa.Operator(PAIR, matrix, unitary=True)


def swap() -> qa.Operator:
    matrix = np.eye(4)[[0, 2, 1, 3]]
    return qa.Operator(PAIR, matrix, unitary=True)


def _controlled_block(entries: list) -> qa.Operator:
    return controlled_on_q0(qa.Operator(OUTER_PAIR, np.array(entries, dtype=complex), unitary=True))


def fredkin() -> qa.Operator:
    return _controlled_block([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]])


def ifredkin() -> qa.Operator:
    return _controlled_block([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]])


def toffoli() -> qa.Operator:
    return _controlled_block([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])


def ccz() -> qa.Operator:
    return _controlled_block([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, -1]])


def hadamard() -> qa.Operator:
    return qa.Operator(QUBIT, np.array([[1, 1], [1, -1]]) / np.sqrt(2), unitary=True)


def pauli_x() -> qa.Operator:
    return qa.Operator(QUBIT, np.array([[0, 1], [1, 0]]), unitary=True)


def s_gate() -> qa.Operator:
    return qa.Operator(QUBIT, np.diag([1, 1j]), unitary=True)


def sqrt_x() -> qa.Operator:
    return qa.Operator(QUBIT, 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]]), unitary=True)


def on_qubits(op: qa.Operator, *sites) -> qa.Operator:
    """Embed a one- or two-qubit gate into the three-qubit register."""
    return qa.embed(qa.Operator(QUBITS3.subshape(sites), op.matrix, unitary=op.unitary), QUBITS3, sites)


def cz_pair(i: int, j: int, gamma: float = 0.0) -> qa.Operator:
    return on_qubits(cz(gamma), i, j)


def iswap_pair(i: int, j: int) -> qa.Operator:
    """Physical exchange iSWAP (-i on the swapped states) between two chain qubits."""
    return on_qubits(u_iswap_beta(np.pi / 2), i, j)


# name -> (constructor, parameter names)
NAMED_GATES = {
    'u-czs': (lambda theta, phi, gamma: u_czs(CczsParams(theta, phi, gamma)), ('theta', 'phi', 'gamma')),
    'cczs': (lambda theta, phi, gamma: cczs(CczsParams(theta, phi, gamma)), ('theta', 'phi', 'gamma')),
    'div-block': (lambda theta, varphi: u_div_block(DivParams(theta, varphi)), ('theta', 'varphi')),
    'div': (lambda theta, varphi: div(DivParams(theta, varphi)), ('theta', 'varphi')),
    'xy': (xy, ('theta', 'phi')),
    'cz': (cz, ('gamma',)),
    'iswap': (iswap, ()),
    'iswap-beta': (u_iswap_beta, ('beta',)),
    'swap': (swap, ()),
    'fredkin': (fredkin, ()),
    'ifredkin': (ifredkin, ()),
    'toffoli': (toffoli, ()),
    'ccz': (ccz, ()),
    'h': (hadamard, ()),
    'x': (pauli_x, ()),
    's': (s_gate, ()),
    'sqrt-x': (sqrt_x, ()),
    'cz01': (lambda gamma: cz_pair(0, 1, gamma), ('gamma',)),
    'cz02': (lambda gamma: cz_pair(0, 2, gamma), ('gamma',)),
    'iswap01': (lambda: iswap_pair(0, 1), ()),
    'iswap02': (lambda: iswap_pair(0, 2), ()),
    'identity': (lambda: qa.Operator.identity(QUBITS3), ()),
}

DEFAULT_PARAMS = {'theta': np.pi / 2, 'phi': np.pi, 'gamma': 0.0, 'varphi': np.pi / 2, 'beta': np.pi / 2}


def named_gate(name: str, **params) -> qa.Operator:
    """Build a named gate; missing parameters fall back to DEFAULT_PARAMS."""
    try:
        constructor, names = NAMED_GATES[name]
    except KeyError:
        raise GateParameterError(f"unknown gate {name!r}; known: {', '.join(sorted(NAMED_GATES))}") from None
    unknown = set(params) - set(names)
    if unknown:
        raise GateParameterError(f"gate {name!r} takes no parameter(s) {sorted(unknown)}")
    args = [params.get(n, DEFAULT_PARAMS[n]) for n in names]
    return constructor(*args)


# ==================== IDENTITY VERIFICATION ====================

@dataclass
class VerificationReport:
    identity: str
    tolerance: float
    residuals: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    passed: bool = False

    @property
    def max_residual(self) -> float:
        return max((r['residual'] for r in self.residuals), default=0.0)

    def to_dict(self) -> dict:
        return {
            'identity': self.identity,
            'passed': self.passed,
            'tolerance': self.tolerance,
            'max_residual': self.max_residual,
            'details': self.details,
            'residuals': self.residuals,
        }


def decomposition_rhs(p: CczsParams) -> qa.Operator:
    """XY_12(theta, pi/2 - phi) CZ_01(gamma) XY_12(theta, pi/2 - phi)^dagger."""
    outer = on_qubits(xy(p.theta, np.pi / 2 - p.phi), 1, 2)
    return outer @ cz_pair(0, 1, p.gamma) @ outer.dag()


def verify_decomposition(grid: int = 5, n_random: int = 100, seed: int = 7,
                         tol: float = qa.ALGEBRA_TOL) -> VerificationReport:
    """Check CCZS against its XY-CZ-XY decomposition on a grid plus random triples."""
    report = VerificationReport('xy-cz', tol)
    thetas = np.linspace(0, np.pi, grid)
    phis = np.linspace(-np.pi, np.pi, grid, endpoint=False)
    gammas = np.linspace(-np.pi, np.pi, grid + 2)[1:-1]
    points = list(product(thetas, phis, gammas))
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        points.append((rng.uniform(0, np.pi), rng.uniform(-np.pi, np.pi), rng.uniform(-0.99 * np.pi, 0.99 * np.pi)))
    for theta, phi, gamma in points:
        p = CczsParams(float(theta), float(phi), float(gamma))
        residual = cczs(p).phase_deviation(decomposition_rhs(p))
        report.residuals.append({'theta': p.theta, 'phi': p.phi, 'gamma': p.gamma, 'residual': residual})
    report.passed = report.max_residual <= tol
    logger.info(f"{'✅' if report.passed else '❌'} xy-cz decomposition: {len(points)} points, "
                f"max residual {report.max_residual:.3e}")
    return report


def construct_fredkin(tol: float = qa.ALGEBRA_TOL) -> tuple:
    """CCZ combined with CCZS(pi/2, 0, 0); both application orders are checked."""
    gate = cczs(CczsParams(np.pi / 2, 0.0, 0.0))
    target = fredkin()
    report = VerificationReport('fredkin', tol)
    candidates = {'ccz-after-cczs': ccz() @ gate, 'ccz-before-cczs': gate @ ccz()}
    for order, composite in candidates.items():
        report.residuals.append({'order': order, 'residual': composite.phase_deviation(target)})
    matches = [r['order'] for r in report.residuals if r['residual'] <= tol]
    report.details['matching_orders'] = matches
    report.passed = bool(matches)
    composite = candidates[matches[0]] if matches else candidates['ccz-after-cczs']
    report.residuals.sort(key=lambda r: r['residual'])
    return composite, report


def construct_ifredkin(tol: float = qa.ALGEBRA_TOL) -> tuple:
    """Search the qubit pair and side of the CZ that turns CCZS(pi/2, pi/2, 0) into iFredkin."""
    gate = cczs(CczsParams(np.pi / 2, np.pi / 2, 0.0))
    target = ifredkin()
    report = VerificationReport('ifredkin', tol)
    composites = {}
    for pair in ((0, 1), (0, 2), (1, 2)):
        cz_gate = cz_pair(*pair)
        for order, composite in (('after', cz_gate @ gate), ('before', gate @ cz_gate)):
            composites[(pair, order)] = composite
            report.residuals.append({'pair': list(pair), 'order': order,
                                     'residual': composite.phase_deviation(target)})
    matches = [r for r in report.residuals if r['residual'] <= tol]
    report.passed = bool(matches)
    report.residuals.sort(key=lambda r: r['residual'])
    best = report.residuals[0]
    report.details['placement'] = {'pair': best['pair'], 'order': best['order']} if matches else None
    if not matches:
        logger.warning(f"⚠️ no CZ placement reproduces iFredkin; best residual {best['residual']:.3e}")
    return composites[(tuple(best['pair']), best['order'])], report


def toffoli_distance_scan(grid: int = 20, threshold: float = 0.5) -> VerificationReport:
    """Smallest phase-aligned distance from CCZS to Toffoli over a parameter grid."""
    target = toffoli()
    report = VerificationReport('toffoli', threshold)
    best = None
    thetas = np.linspace(0, np.pi, grid)
    phis = np.linspace(-np.pi, np.pi, grid, endpoint=False)
    gammas = np.linspace(-np.pi, np.pi, grid + 2)[1:-1]
    for theta, phi, gamma in product(thetas, phis, gammas):
        p = CczsParams(float(theta), float(phi), float(gamma))
        distance = cczs(p).phase_deviation(target)
        if best is None or distance < best['residual']:
            best = {'theta': p.theta, 'phi': p.phi, 'gamma': p.gamma, 'residual': distance}
    report.residuals.append(best)
    report.details['min_distance'] = best['residual']
    report.details['grid_points'] = grid ** 3
    # Passing means CCZS never reaches Toffoli
    report.passed = best['residual'] > threshold
    return report


IDENTITY_CHECKS: dict = {
    'xy-cz': lambda grid, seed, tol: verify_decomposition(grid=grid, seed=seed, tol=tol),
    'fredkin': lambda grid, seed, tol: construct_fredkin(tol)[1],
    'ifredkin': lambda grid, seed, tol: construct_ifredkin(tol)[1],
    'toffoli': lambda grid, seed, tol: toffoli_distance_scan(grid=max(grid, 2)),
}

# Names accepted on the command line for the decomposition check
IDENTITY_ALIASES = {'decomposition': 'xy-cz', 'eq33': 'xy-cz'}


def verify_identity(name: str, grid: int = 5, seed: int = 7, tol: float = qa.ALGEBRA_TOL) -> VerificationReport:
    check: Optional[Callable] = IDENTITY_CHECKS.get(IDENTITY_ALIASES.get(name, name))
    if check is None:
        raise GateParameterError(f"unknown identity {name!r}")
    return check(grid, seed, tol)
