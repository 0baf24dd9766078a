# State preparation
# GHZ, W and Dicke protocols built from CCZS/DIV gates and collective evolutions

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

import effective_dynamics as ed
import gate_library as gl
import qudit_algebra as qa

logger = logging.getLogger(__name__)

NORM_TOL = 1e-12


class AdjacencyError(ValueError):
    """Raised when a grid cannot host the requested protocol."""


# ==================== SINGLE-SITE OPERATIONS ====================

def level_swap(dim: int, a: int, b: int) -> np.ndarray:
    """Ideal permutation exchanging levels a and b."""
    perm = list(range(dim))
    perm[a], perm[b] = perm[b], perm[a]
    return np.eye(dim)[perm]


def level_cycle(dim: int = 3) -> np.ndarray:
    """|0> -> |1> -> |2> -> |0>"""
    return np.roll(np.eye(dim), 1, axis=0)


def two_level_rotation(dim: int, a: int, b: int, angle: float) -> np.ndarray:
    """exp(-i angle/2 sigma_y) on levels (a, b)."""
    op = np.eye(dim, dtype=complex)
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    op[a, a], op[a, b], op[b, a], op[b, b] = c, -s, s, c
    return op


def two_level_pi_pulse(dim: int, a: int, b: int) -> np.ndarray:
    """exp(-i pi/2 sigma_x) on levels (a, b)."""
    op = np.eye(dim, dtype=complex)
    op[a, a], op[b, b] = 0, 0
    op[a, b], op[b, a] = -1j, -1j
    return op


def relabel_matrix(perm: Sequence[int]) -> np.ndarray:
    """Permutation |l> -> |perm[l]>."""
    dim = len(perm)
    op = np.zeros((dim, dim))
    for level, image in enumerate(perm):
        op[image, level] = 1.0
    return op


def symmetric_flip(n: int) -> np.ndarray:
    """X on all N neighbours in the Dicke basis: |D^k> -> |D^{N-k}>."""
    return np.eye(n + 1)[::-1]


# ==================== TARGETS ====================

@dataclass(frozen=True)
class TargetState:
    """kind is one of ghz, w, dicke, d53."""
    kind: str
    n: int = 3
    k: int = 1

    def __post_init__(self):
        if self.kind not in ('ghz', 'w', 'dicke', 'd53'):
            raise ValueError(f"unknown target {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == 'ghz':
            return f'GHZ_{self.n}'
        if self.kind == 'w':
            return f'W_{self.n}'
        if self.kind == 'dicke':
            return f'Dicke_{self.n}_{self.k}'
        return 'D53_superposition'

    def vector(self, shape: qa.RegisterShape = None) -> qa.StateVector:
        if self.kind == 'd53':
            shape = shape or qa.RegisterShape((3, 5), ('q0', 'D4'))
            return qa.StateVector.superposition(shape, {(1, 2): np.sqrt(3 / 5), (0, 3): np.sqrt(2 / 5)})
        shape = shape or qa.RegisterShape.uniform(self.n, 2)
        if self.kind == 'ghz':
            return qa.StateVector.superposition(shape, {(0,) * self.n: 1.0, (1,) * self.n: 1.0})
        k = 1 if self.kind == 'w' else self.k
        amps = np.zeros(shape.total, dtype=complex)
        qubits = qa.RegisterShape.uniform(self.n, 2)
        dicke = ed.dicke_amplitudes(self.n, k)
        for i in np.flatnonzero(dicke):
            amps[shape.index(qubits.digits(int(i)))] = dicke[i]
        return qa.StateVector(shape, amps)


# ==================== PROTOCOLS ====================

@dataclass(frozen=True)
class ProtocolStep:
    label: str
    operator: qa.Operator
    duration: float = 0.0
    multi_site: bool = False


@dataclass(frozen=True)
class Protocol:
    name: str
    shape: qa.RegisterShape
    steps: tuple = ()
    target: Optional[qa.StateVector] = None
    initial: Optional[qa.StateVector] = None
    # restricted-basis protocols carry the site configuration of each basis vector
    basis: tuple = ()
    site_labels: tuple = ()

    def __post_init__(self):
        for step in self.steps:
            if step.operator.shape.dims != self.shape.dims:
                raise qa.ShapeMismatchError(f"step {step.label!r} acts on {step.operator.shape.dims}, "
                                            f"protocol register is {self.shape.dims}")

    def initial_state(self) -> qa.StateVector:
        if self.initial is not None:
            return self.initial
        return qa.StateVector.basis(self.shape, (0,) * self.shape.n_sites)

    def multi_site_steps(self) -> list:
        return [s for s in self.steps if s.multi_site]


def intermediate_states(p: Protocol, initial: qa.StateVector = None) -> Iterator[qa.StateVector]:
    """Yield the state after every step."""
    state = p.initial_state() if initial is None else initial
    if state.shape.dims != p.shape.dims:
        raise qa.ShapeMismatchError(f"initial state dims {state.shape.dims} vs protocol {p.shape.dims}")
    for step in p.steps:
        state = step.operator.apply(state)
        yield state


def run_protocol(p: Protocol, initial: qa.StateVector = None) -> qa.StateVector:
    state = p.initial_state() if initial is None else initial
    if state.shape.dims != p.shape.dims:
        raise qa.ShapeMismatchError(f"initial state dims {state.shape.dims} vs protocol {p.shape.dims}")
    for state in intermediate_states(p, state):
        pass
    if abs(state.norm - 1.0) > 1e-10:
        logger.warning(f"⚠️ protocol {p.name} lost norm: {state.norm:.3e}")
    return state


def protocol_fidelity(p: Protocol, output: qa.StateVector) -> float:
    """|<target|out>|^2"""
    if p.target is None:
        raise ValueError(f"protocol {p.name} has no target")
    return p.target.fidelity(output)


def total_evolution_time(p: Protocol) -> float:
    """Summed durations; single-site gates cost zero."""
    return float(sum(step.duration for step in p.steps))


def _gate(shape: qa.RegisterShape, label: str, local: np.ndarray, sites: Sequence[int],
          duration: float = 0.0, multi_site: bool = False) -> ProtocolStep:
    matrix = qa.embed_matrix(np.asarray(local, dtype=complex), shape.dims, sites)
    return ProtocolStep(label, qa.Operator(shape, matrix), duration, multi_site)


# ==================== GHZ ====================

def ghz3_protocol(lam: float = 1.0) -> Protocol:
    """H(q0), X(q1), CCZS(pi/2, 0, 0), X(q1)."""
    shape = gl.QUBITS3
    params = gl.CczsParams(np.pi / 2, 0.0, 0.0)
    _, t_gate = gl.params_from_drive(gl.drive_from_params(params, np.sqrt(2) * lam))
    steps = (
        _gate(shape, 'H(q0)', gl.hadamard().matrix, [0]),
        _gate(shape, 'X(q1)', gl.pauli_x().matrix, [1]),
        ProtocolStep('CCZS(pi/2,0,0)', gl.cczs(params), t_gate, True),
        _gate(shape, 'X(q1)', gl.pauli_x().matrix, [1]),
    )
    return Protocol('ghz3', shape, steps, TargetState('ghz', 3).vector(shape))


def ghz3_two_cz_protocol(lam: float = 1.0) -> Protocol:
    """Reference circuit: two sequential CZ gates from q0, each lasting pi/lam."""
    shape = gl.QUBITS3
    h = gl.hadamard().matrix
    t_cz = np.pi / lam
    steps = (
        _gate(shape, 'H(q0)', h, [0]),
        _gate(shape, 'H(q1)', h, [1]),
        _gate(shape, 'H(q2)', h, [2]),
        ProtocolStep('CZ(q0,q1)', gl.cz_pair(0, 1), t_cz, True),
        ProtocolStep('CZ(q0,q2)', gl.cz_pair(0, 2), t_cz, True),
        _gate(shape, 'H(q1)', h, [1]),
        _gate(shape, 'H(q2)', h, [2]),
    )
    return Protocol('ghz3-two-cz', shape, steps, TargetState('ghz', 3).vector(shape))


# ==================== DICKE ====================

D53_ROTATION = 2 * np.arcsin(np.sqrt(2 / 5))


def _dicke53_steps(model: ed.DickeModel, shape: qa.RegisterShape, relabel: np.ndarray) -> list:
    """Steps written in CZ-variant centre labels, conjugated by `relabel` on the centre."""
    n = model.n
    lam = abs(model.couplings[0])
    h = ed.dicke_hamiltonian(model, symmetric=True)

    def centre(label, local):
        return _gate(shape, label, relabel @ local @ relabel.T, [0])

    t1 = model.step_time(0)
    t2 = model.step_time(1)
    return [
        centre('raise q0 0->1', level_swap(3, 0, 1)),
        centre('raise q0 1->2', level_swap(3, 1, 2)),
        ProtocolStep('evolve t=pi/(4 lam)', qa.expm(h, t1), t1, True),
        centre('rotate q0 in {0,1}', two_level_rotation(3, 0, 1, D53_ROTATION)),
        centre('flip q0 1->2', two_level_pi_pulse(3, 1, 2)),
        ProtocolStep('evolve t=pi/(2 sqrt6 lam)', qa.expm(h, t2), t2, True),
        _gate(shape, f'X on {n} neighbours', symmetric_flip(n), [1]),
    ]


def dicke53_protocol(lam: float = 1.0) -> Protocol:
    """sqrt(3/5)|1>|D_4^2> + sqrt(2/5)|0>|D_4^3> through the |2> level of the centre."""
    model = ed.DickeModel.uniform(4, lam, ed.CZ_TRANSITION)
    shape = model.shape(True)
    steps = _dicke53_steps(model, shape, np.eye(3))
    return Protocol('dicke53', shape, tuple(steps), TargetState('d53').vector(shape))


# CZ-variant centre level l is stored as ISWAP_RELABEL[l] in the iSWAP variant
ISWAP_RELABEL = (2, 0, 1)


def dicke53_iswap_protocol(g: float = 1.0) -> Protocol:
    """Same target through exchange couplings; centre levels relabelled (0,1,2) -> (2,0,1)."""
    model = ed.DickeModel.uniform(4, g, ed.ISWAP_TRANSITION)
    shape = model.shape(True)
    relabel = relabel_matrix(ISWAP_RELABEL)
    steps = _dicke53_steps(model, shape, relabel)
    # the raise 0->1->2 in CZ labels is a single raise 0->1 in iSWAP labels
    steps = [_gate(shape, 'raise q0 0->1', level_swap(3, 0, 1), [0])] + steps[2:]
    steps.append(_gate(shape, 'relabel q0 levels', relabel.T, [0]))
    return Protocol('dicke53-iswap', shape, tuple(steps), TargetState('d53').vector(shape))


def weighted_excitation_protocol(couplings: Sequence[complex]) -> Protocol:
    """Centre |2> releases one excitation into the neighbours with amplitudes ~ conj(lambda_j)."""
    model = ed.DickeModel(tuple(couplings), ed.CZ_TRANSITION)
    shape = model.shape(False)
    h = ed.dicke_hamiltonian(model, symmetric=False)
    t = np.pi / (2 * model.collective_coupling)
    steps = (
        _gate(shape, 'raise q0 0->1', level_swap(3, 0, 1), [0]),
        _gate(shape, 'raise q0 1->2', level_swap(3, 1, 2), [0]),
        ProtocolStep('evolve t=pi/(2 Omega)', qa.expm(h, t), t, True),
    )
    target_terms = {}
    for j, lam in enumerate(model.couplings):
        digits = [1] + [0] * model.n
        digits[j + 1] = 1
        target_terms[tuple(digits)] = np.conj(lam)
    target = qa.StateVector.superposition(shape, target_terms)
    return Protocol('weighted-excitation', shape, steps, target)


# ==================== W VIA DIV ====================

W_DIV_THETA = np.pi / 4
W_DIV_VARPHI = float(np.arctan(np.sqrt(2)))


def w_div_protocol(theta: float = W_DIV_THETA, varphi: float = W_DIV_VARPHI, g: float = 1.0) -> Protocol:
    """X(q0), DIV(theta, varphi), S(q1), S(q2)."""
    shape = gl.QUBITS3
    omega = np.sqrt(2) * g
    steps = (
        _gate(shape, 'X(q0)', gl.pauli_x().matrix, [0]),
        ProtocolStep(f'DIV({theta:.4f},{varphi:.4f})', gl.div(gl.DivParams(theta, varphi)), varphi / omega, True),
        _gate(shape, 'S(q1)', gl.s_gate().matrix, [1]),
        _gate(shape, 'S(q2)', gl.s_gate().matrix, [2]),
    )
    return Protocol('w-div', shape, steps, TargetState('w', 3).vector(shape))


# ==================== SQUARE GRID ====================

DIRECTIONS = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(frozen=True)
class SquareGrid:
    sites: frozenset

    @classmethod
    def from_sites(cls, sites) -> 'SquareGrid':
        return cls(frozenset(tuple(int(c) for c in s) for s in sites))

    @classmethod
    def star(cls, arms: int) -> 'SquareGrid':
        """Centre plus `arms` nearest neighbours."""
        return cls.from_sites([(0, 0)] + list(DIRECTIONS[:arms]))

    @classmethod
    def plus_cells(cls, arms: int = 4) -> 'SquareGrid':
        """Centre, its neighbours, one outward site per arm and that site's remaining neighbours."""
        sites = {(0, 0)}
        for dx, dy in DIRECTIONS[:arms]:
            outward = (2 * dx, 2 * dy)
            sites.update({(dx, dy), outward})
            sites.update((outward[0] + ex, outward[1] + ey) for ex, ey in DIRECTIONS)
        return cls.from_sites(sites)

    @classmethod
    def rectangle(cls, rows: int, cols: int, origin=(0, 0)) -> 'SquareGrid':
        return cls.from_sites((origin[0] + x, origin[1] + y) for x in range(cols) for y in range(rows))

    def ordered(self) -> list:
        return sorted(self.sites)

    def neighbours(self, site) -> list:
        return sorted((site[0] + dx, site[1] + dy) for dx, dy in DIRECTIONS
                      if (site[0] + dx, site[1] + dy) in self.sites)


# ==================== RESTRICTED REGISTER ====================

@dataclass(frozen=True)
class LocalTerm:
    sites: tuple
    matrix: np.ndarray


@dataclass
class Stage:
    """Either a layer of local unitaries or a Hamiltonian evolved for `duration`."""
    label: str
    terms: list
    duration: Optional[float] = None
    multi_site: bool = False

    @property
    def is_evolution(self) -> bool:
        return self.duration is not None


@dataclass
class RestrictedRegister:
    """Basis of site configurations reachable from an initial configuration."""
    dims: tuple
    labels: tuple
    configs: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    max_dim: int = 20000

    def add(self, config: tuple) -> bool:
        if config in self.index:
            return False
        if len(self.configs) >= self.max_dim:
            raise AdjacencyError(f"restricted basis exceeded {self.max_dim} configurations")
        self.index[config] = len(self.configs)
        self.configs.append(config)
        return True

    def action(self, config: tuple, term: LocalTerm) -> list:
        """Images of one configuration under a local matrix as (config, amplitude) pairs."""
        local_dims = [self.dims[s] for s in term.sites]
        col = int(np.ravel_multi_index([config[s] for s in term.sites], local_dims))
        images = []
        for row in np.flatnonzero(np.abs(term.matrix[:, col]) > 0):
            new = list(config)
            for site, level in zip(term.sites, np.unravel_index(int(row), local_dims)):
                new[site] = int(level)
            images.append((tuple(new), term.matrix[row, col]))
        return images

    def close_under(self, stage: Stage):
        """Extend the basis until the stage maps the current span into itself."""
        if stage.is_evolution:
            queue = deque(self.configs)
            while queue:
                config = queue.popleft()
                for term in stage.terms:
                    for image, _ in self.action(config, term):
                        if self.add(image):
                            queue.append(image)
        else:
            frontier = list(self.configs)
            for term in stage.terms:
                nxt = []
                for config in frontier:
                    for image, _ in self.action(config, term):
                        self.add(image)
                        nxt.append(image)
                frontier = list(dict.fromkeys(frontier + nxt))

    def term_matrix(self, term: LocalTerm) -> np.ndarray:
        dim = len(self.configs)
        m = np.zeros((dim, dim), dtype=complex)
        for col, config in enumerate(self.configs):
            for image, amp in self.action(config, term):
                row = self.index.get(image)
                if row is not None:
                    m[row, col] += amp
        return m

    def stage_matrix(self, stage: Stage) -> np.ndarray:
        dim = len(self.configs)
        if stage.is_evolution:
            h = sum((self.term_matrix(t) for t in stage.terms), np.zeros((dim, dim), dtype=complex))
            return qa.propagator(h, stage.duration)
        m = np.eye(dim, dtype=complex)
        for term in stage.terms:
            m = self.term_matrix(term) @ m
        return m

    def to_full(self, amplitudes: np.ndarray) -> qa.StateVector:
        """Dense state on the full register (small registers only)."""
        shape = qa.RegisterShape(self.dims, self.labels)
        full = np.zeros(shape.total, dtype=complex)
        for amp, config in zip(amplitudes, self.configs):
            full[shape.index(config)] = amp
        return qa.StateVector(shape, full)


def restricted_protocol(name: str, dims: Sequence[int], labels: Sequence[str], stages: Sequence[Stage],
                        target_terms: dict) -> Protocol:
    """Build a Protocol over the configurations reachable from the all-zero state."""
    register = RestrictedRegister(tuple(dims), tuple(labels))
    register.add((0,) * len(dims))
    for stage in stages:
        register.close_under(stage)
    missing = [c for c in target_terms if c not in register.index]
    if missing:
        raise AdjacencyError(f"target configurations {missing[:3]} unreachable")
    shape = qa.RegisterShape((len(register.configs),), ('sector',))
    steps = tuple(ProtocolStep(stage.label, qa.Operator(shape, register.stage_matrix(stage)),
                               stage.duration or 0.0, stage.multi_site) for stage in stages)
    target = np.zeros(shape.total, dtype=complex)
    for config, amp in target_terms.items():
        target[register.index[config]] = amp
    target_state = qa.StateVector(shape, target).normalized()
    logger.debug(f"📦 {name}: restricted basis of {shape.total} configurations over {len(dims)} sites")
    return Protocol(name, shape, steps, target_state, basis=tuple(register.configs), site_labels=tuple(labels))


def restricted_register_of(p: Protocol, dims: Sequence[int]) -> RestrictedRegister:
    register = RestrictedRegister(tuple(dims), p.site_labels)
    for config in p.basis:
        register.add(config)
    return register


# ==================== W SCALE-UP ====================

def _collective_terms(centre: int, neighbours: Sequence[int], dims: Sequence[int],
                      transition: tuple, lam: float) -> list:
    lower, upper = transition
    terms = []
    for n in neighbours:
        local = np.zeros((dims[centre] * dims[n],) * 2, dtype=complex)
        col = lower * dims[n] + 1
        row = upper * dims[n] + 0
        local[row, col] = lam
        local[col, row] = np.conj(lam)
        terms.append(LocalTerm((centre, n), local))
    return terms


def _swap_term(a: int, b: int, dims: Sequence[int]) -> LocalTerm:
    """Exchange the qubit levels of two sites; other levels untouched."""
    da, db = dims[a], dims[b]
    m = np.eye(da * db, dtype=complex)
    for x in (0, 1):
        for y in (0, 1):
            if x != y:
                m[x * db + y, x * db + y] = 0
                m[y * db + x, x * db + y] = 1
    return LocalTerm((a, b), m)


def w_scaleup_protocol(grid: SquareGrid, centre=(0, 0), variant: str = 'cz', lam: float = 1.0) -> Protocol:
    """Spread one excitation from `centre` over its neighbours, then outward through one swap layer."""
    if variant not in ('cz', 'iswap'):
        raise ValueError(f"unknown variant {variant!r}")
    centre = tuple(centre)
    if centre not in grid.sites:
        raise AdjacencyError(f"centre {centre} is not on the grid")
    first = grid.neighbours(centre)
    if not first:
        raise AdjacencyError(f"centre {centre} has no neighbours")

    cells = {}
    for n in first:
        outward = (2 * n[0] - centre[0], 2 * n[1] - centre[1])
        if outward in grid.sites:
            cells[n] = (outward, grid.neighbours(outward))
    used = {centre} | set(first)
    for n, (outward, members) in cells.items():
        extra = set(members) - {n}
        if outward in used or extra & used:
            raise AdjacencyError(f"cell around {outward} overlaps another part of the protocol")
        used |= {outward} | extra

    order = sorted(used)
    pos = {site: i for i, site in enumerate(order)}
    cz = variant == 'cz'
    centres = {centre} | {outward for outward, _ in cells.values()}
    dims = tuple(3 if (cz and site in centres) else 2 for site in order)
    labels = tuple(f'({x},{y})' for x, y in order)
    transition = ed.CZ_TRANSITION if cz else ed.ISWAP_TRANSITION
    c = pos[centre]

    def single(label, local_for, sites):
        return Stage(label, [LocalTerm((s,), local_for(dims[s])) for s in sites])

    stages = []
    if cz:
        stages.append(single('prepare centre |2>', lambda d: level_swap(d, 0, 2), [c]))
    else:
        stages.append(single('prepare centre |1>', lambda d: level_swap(d, 0, 1), [c]))
    t1 = np.pi / (2 * lam * np.sqrt(len(first)))
    stages.append(Stage('spread from centre', _collective_terms(c, [pos[n] for n in first], dims, transition, lam),
                        t1, True))
    if cz:
        stages.append(single('reset centre 1->0', lambda d: level_swap(d, 0, 1), [c]))

    if cells:
        stages.append(Stage('swap outward', [_swap_term(pos[n], pos[o], dims) for n, (o, _) in cells.items()],
                            multi_site=True))
        new_centres = [pos[o] for o, _ in cells.values()]
        if cz:
            stages.append(single('raise new centres by one', lambda d: level_cycle(d), new_centres))
        by_size = {}
        for n, (o, members) in cells.items():
            by_size.setdefault(len(members), []).append((o, members))
        for size, group in sorted(by_size.items()):
            terms = []
            for o, members in group:
                terms += _collective_terms(pos[o], [pos[m] for m in members], dims, transition, lam)
            stages.append(Stage(f'spread cells of {size}', terms, np.pi / (2 * lam * np.sqrt(size)), True))
        if cz:
            stages.append(single('lower new centres 1->0', lambda d: level_swap(d, 0, 1), new_centres))

    final_sites = []
    for n in first:
        final_sites += cells[n][1] if n in cells else [n]
    target_terms = {}
    for site in final_sites:
        config = [0] * len(order)
        config[pos[site]] = 1
        target_terms[tuple(config)] = 1.0
    return restricted_protocol(f'w-scaleup-{variant}', dims, labels, stages, target_terms)


def site_populations(p: Protocol, state: qa.StateVector) -> dict:
    """Excited-level population of every site for a restricted-basis protocol."""
    populations = {label: 0.0 for label in p.site_labels}
    probs = state.probabilities()
    for prob, config in zip(probs, p.basis):
        for label, level in zip(p.site_labels, config):
            if level > 0:
                populations[label] += float(prob)
    return populations


PROTOCOLS = {
    'ghz3': ghz3_protocol,
    'ghz3-two-cz': ghz3_two_cz_protocol,
    'dicke53': dicke53_protocol,
    'dicke53-iswap': dicke53_iswap_protocol,
    'w-div': w_div_protocol,
}
