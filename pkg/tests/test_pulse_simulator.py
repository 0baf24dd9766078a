import numpy as np
import pytest

import gate_library as gl
import pulse_simulator as ps
import qudit_algebra as qa


@pytest.fixture(scope='module')
def qubit_device():
    return ps.builtin_device('tunable-qubits')


@pytest.fixture(scope='module')
def coupler_device():
    return ps.builtin_device('tunable-coupler')


# ==================== PULSES ====================

def test_rect_gauss_envelope():
    pulse = ps.PulseShape('rect-gauss', 50.0, sigma=1.0)
    assert pulse.window == (-4.0, 54.0)
    assert pulse(25.0) == pytest.approx(1.0)
    assert pulse(0.0) == pytest.approx(0.5)
    assert pulse(50.0) == pytest.approx(0.5)
    assert pulse(-4.0) < 1e-4


def test_sin2_envelope():
    pulse = ps.PulseShape('sin2', 405.0, rise=25.0)
    assert pulse.window == (0.0, 405.0)
    assert pulse.plateau == pytest.approx(355.0)
    values = pulse(np.array([-1.0, 0.0, 12.5, 25.0, 200.0, 392.5, 405.0, 406.0]))
    np.testing.assert_allclose(values, [0, 0, 0.5, 1, 1, 0.5, 0, 0], atol=1e-12)


@pytest.mark.parametrize('kwargs', [
    {'kind': 'square', 'length': 10.0},
    {'kind': 'rect-gauss', 'length': 0.0},
    {'kind': 'sin2', 'length': 40.0, 'rise': 25.0},
])
def test_bad_pulses_are_rejected(kwargs):
    with pytest.raises(ValueError):
        ps.PulseShape(**kwargs)


def test_bad_step_control():
    with pytest.raises(ValueError):
        ps.StepControl(method='rk4')
    with pytest.raises(ValueError):
        ps.StepControl(step=0.0)


# ==================== DEVICES ====================

def test_exchange_reading_of_the_coupling(qubit_device):
    h = qubit_device.static_hamiltonian()
    shape = qubit_device.shape
    g = qubit_device.couplings[0]
    assert h[shape.index('100'), shape.index('010')] == pytest.approx(g)
    assert h[shape.index('200'), shape.index('110')] == pytest.approx(np.sqrt(2) * g)
    assert qubit_device.lambdas[0] == pytest.approx(np.sqrt(2) * g)


@pytest.mark.parametrize('name', ['tunable-qubits', 'tunable-coupler'])
def test_static_hamiltonian_is_hermitian(name):
    device = ps.builtin_device(name)
    h = device.static_hamiltonian()
    assert h.shape == (device.shape.total,) * 2
    np.testing.assert_allclose(h, h.conj().T, atol=1e-14)


def test_coupler_device_layout(coupler_device):
    assert coupler_device.shape.dims == (3, 3, 3, 3, 3)
    assert coupler_device.coupler_site(1) == 4
    assert {pair for pair, _ in coupler_device.couplings} == {(0, 0), (0, 1), (1, 0), (2, 1)}
    idle = coupler_device.idle_coupler_frequencies()
    assert ps.ghz(idle[0]) == pytest.approx(7.8 * np.sqrt(np.cos(np.pi * 0.275)))


def test_tuning_is_clipped_at_maximum(qubit_device):
    point = ps.OperatingPoint(20.0, detunings=(0.0, ps.rad_per_ns(0.05)))
    _, schedule = ps.build_schedule(qubit_device, 'cz02', point)
    (site, offset), = schedule.offsets
    q2 = qubit_device.sites[2]
    assert site == 2
    assert offset.amplitude == pytest.approx(q2.freq_max - q2.freq)


def test_qubit_schedule_window_surrounds_gate(qubit_device):
    _, schedule = ps.build_schedule(qubit_device, 'cczs', ps.OperatingPoint(60.0))
    assert (schedule.start, schedule.end) == (-4.0, 64.0)
    assert schedule.gate_time == 60.0
    assert [site for site, _ in schedule.offsets] == [1, 2]


# ==================== PROPAGATION ====================

def test_idle_evolution_is_identity_in_gate_frame(qubit_device):
    schedule = ps.idle_schedule(12.0)
    block = ps.gate_frame_block(qubit_device, schedule, ps.StepControl(step=0.5, check_convergence=False))
    np.testing.assert_allclose(block, np.eye(8), atol=1e-10)
    report = ps.average_gate_fidelity(block, gl.named_gate('identity'))
    assert report.fidelity == pytest.approx(1.0)
    assert report.leakage == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize('method', ps.INTEGRATORS)
def test_driven_propagator_is_unitary(qubit_device, method):
    _, schedule = ps.build_schedule(qubit_device, 'cz02', ps.OperatingPoint(6.0))
    u = ps.propagate_device(qubit_device, schedule, ps.StepControl(step=0.05, method=method, check_convergence=False))
    assert isinstance(u, qa.Operator)
    assert u.is_unitary(1e-8)


def test_integrators_agree_at_small_step(qubit_device):
    _, schedule = ps.build_schedule(qubit_device, 'cz01', ps.OperatingPoint(4.0))
    exact = ps.propagate_device(qubit_device, schedule, ps.StepControl(step=0.005, method='expm', check_convergence=False)).matrix
    split = ps.propagate_device(qubit_device, schedule, ps.StepControl(step=0.005, method='split', check_convergence=False)).matrix
    assert np.max(np.abs(exact - split)) < 1e-3


def test_step_halving_converges(qubit_device):
    _, schedule = ps.build_schedule(qubit_device, 'cz02', ps.OperatingPoint(2.0))
    control = ps.StepControl(step=0.05, check_convergence=True, error_target=1e-3, max_halvings=6)
    ps.propagate_device(qubit_device, schedule, control)


@pytest.mark.parametrize('error_target, max_halvings', [(1e-14, 1), (1e-3, 0)])
def test_step_halving_gives_up(qubit_device, error_target, max_halvings):
    _, schedule = ps.build_schedule(qubit_device, 'cz02', ps.OperatingPoint(2.0))
    control = ps.StepControl(step=0.05, check_convergence=True, error_target=error_target,
                             max_halvings=max_halvings)
    with pytest.raises(ps.ConvergenceError):
        ps.propagate_device(qubit_device, schedule, control)


def test_convergence_check_on_by_default(qubit_device, coupler_device):
    assert ps.StepControl().check_convergence
    assert ps.default_control(qubit_device).check_convergence
    assert ps.default_control(coupler_device).method == 'split'
    assert not ps.default_control(coupler_device, check_convergence=False).check_convergence


def test_converged_halves_until_values_settle():
    control = ps.StepControl(step=0.1, error_target=1e-3, max_halvings=6)
    payload, used, change = ps.converged(lambda c: ([c.step ** 2], c.step), control)
    assert used.step == pytest.approx(0.0125)
    assert payload == used.step
    assert change == pytest.approx(0.0125 ** 2 * 3, rel=1e-9)
    assert not used.check_convergence


def test_converged_without_check_runs_once():
    calls = []

    def evaluate(c):
        calls.append(c.step)
        return [1.0], 'done'

    payload, used, change = ps.converged(evaluate, ps.StepControl(step=0.1, check_convergence=False))
    assert (payload, used.step, change) == ('done', 0.1, None)
    assert calls == [0.1]


def test_converged_gives_up():
    control = ps.StepControl(step=0.1, error_target=1e-6, max_halvings=3)
    with pytest.raises(ps.ConvergenceError):
        ps.converged(lambda c: ([1.0 / c.step], None), control)


def test_simulate_gate_records_halving(qubit_device):
    point = ps.OperatingPoint(3.0)
    report = ps.simulate_gate(qubit_device, 'cz02', point)
    assert report.settings['check_convergence']
    assert report.settings['halving_delta'] <= 1e-6
    assert report.settings['step_ns'] < qubit_device.step
    unchecked = ps.simulate_gate(qubit_device, 'cz02', point, ps.default_control(qubit_device, check_convergence=False))
    assert unchecked.settings['halving_delta'] is None
    assert unchecked.settings['step_ns'] == qubit_device.step
    assert unchecked.fidelity == pytest.approx(report.fidelity, abs=1e-5)


def test_propagate_needs_schedule_or_time(qubit_device):
    with pytest.raises(ValueError):
        ps.propagate_device(qubit_device)


def test_population_traces_start_in_initial_state(qubit_device):
    _, schedule = ps.build_schedule(qubit_device, 'cz02', ps.OperatingPoint(3.0))
    times, traces = ps.population_traces(qubit_device, schedule, '101', ('101', '200'),
                                         ps.StepControl(step=0.05), samples=20)
    assert times[0] == schedule.start
    assert times[-1] == pytest.approx(schedule.end)
    assert traces['101'][0] == 1.0
    assert traces['200'][0] == 0.0
    assert len(times) == len(traces['200'])


def test_dressed_basis_labels_follow_bare_states(qubit_device):
    energies, vectors = ps.dressed_basis(qubit_device.static_hamiltonian())
    assert np.all(np.abs(np.diag(vectors)) ** 2 > 0.5)
    assert np.all(np.abs(np.angle(np.diag(vectors))) < 1e-12)
    assert ps.dressed_energy(qubit_device, '000') == pytest.approx(0.0, abs=1e-12)


# ==================== FIDELITY ====================

@pytest.mark.parametrize('n', [4, 8])
def test_fidelity_formula_matches_state_average(n):
    rng = np.random.default_rng(1000 + n)
    shape = qa.RegisterShape.uniform(int(np.log2(n)), 2)
    n_states = 100_000
    deviations = []
    for pair in range(20):
        u = qa.random_unitary(n, rng)
        m = qa.random_unitary(n, rng)
        if pair % 2:
            # leaky block: singular values below one
            m = m @ np.diag(rng.uniform(0.6, 1.0, size=n))
        report = ps.average_gate_fidelity(m, qa.Operator(shape, u), optimize_phases=False)
        states = qa.random_states(n, n_states, rng)
        samples = np.abs(np.einsum('ki,ij,kj->k', states.conj(), u.conj().T @ m, states)) ** 2
        sigma = np.std(samples, ddof=1) / np.sqrt(n_states)
        deviations.append(abs(report.fidelity - np.mean(samples)) / sigma)
    deviations = np.array(deviations)
    assert np.all(deviations <= 4.0)
    assert np.count_nonzero(deviations > 3.0) <= 1


def test_fidelity_of_uniformly_damped_gate():
    target = gl.named_gate('cczs')
    report = ps.average_gate_fidelity(0.9 * target.matrix, target, optimize_phases=False)
    assert report.fidelity == pytest.approx(0.81)
    assert report.leakage == pytest.approx(0.19)


def test_virtual_z_recovers_single_qubit_phases():
    target = gl.named_gate('cczs')
    z0 = np.array([0.3, -0.5, 1.1])
    bits = np.array(list(np.ndindex(2, 2, 2)), dtype=float)
    block = np.diag(np.exp(-1j * bits @ z0)) @ target.matrix
    report = ps.average_gate_fidelity(block, target)
    assert report.fidelity_uncorrected < 0.9
    assert report.fidelity == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(report.phases, z0, atol=1e-5)


def test_virtual_z_never_lowers_fidelity(rng):
    target = gl.named_gate('div')
    for _ in range(5):
        report = ps.average_gate_fidelity(qa.random_unitary(8, rng), target)
        assert report.fidelity >= report.fidelity_uncorrected


def test_fidelity_projects_full_operator(qubit_device):
    ident = qa.Operator.identity(qubit_device.shape)
    projector = qa.ComputationalProjector(qubit_device.shape)
    report = ps.average_gate_fidelity(ident, gl.named_gate('identity'), projector)
    assert report.fidelity == pytest.approx(1.0)


def test_fidelity_shape_mismatch():
    with pytest.raises(qa.ShapeMismatchError):
        ps.average_gate_fidelity(np.eye(4), gl.named_gate('cczs'))


def test_report_dict_keys():
    report = ps.average_gate_fidelity(np.eye(8), gl.named_gate('identity'), gate_time=5.0, name='identity')
    data = report.to_dict()
    assert data['gate_time_ns'] == 5.0
    assert set(data) == {'target', 'fidelity', 'fidelity_uncorrected', 'leakage', 'gate_time_ns',
                         'virtual_z_rad', 'populations', 'settings', 'flags'}


# ==================== GATES AND OPERATING POINTS ====================

@pytest.mark.parametrize('gate, expected', [
    ('cz02', 93.04),
    ('cczs', 65.79),
    ('iswap01', 65.79),
    ('div', 46.52),
])
def test_default_gate_times(qubit_device, gate, expected):
    assert ps.default_point(qubit_device, gate).gate_time == pytest.approx(expected, abs=0.01)


def test_coupler_default_times(coupler_device):
    assert ps.default_point(coupler_device, 'cz01').gate_time == pytest.approx(405.0)
    assert ps.default_point(coupler_device, 'cczs').gate_time == pytest.approx(355.0 / np.sqrt(2) + 50.0)


def test_gate_not_on_device(coupler_device):
    with pytest.raises(ValueError, match='not available'):
        ps.gate_plan(coupler_device, 'div')


def test_targets_follow_coupling_ratio(qubit_device):
    assert ps.target_operator(qubit_device, 'cczs').equals(gl.named_gate('cczs'))
    assert ps.target_operator(qubit_device, 'div').equals(gl.div(gl.DivParams(np.pi / 4, np.pi / 2)))
    with pytest.raises(ValueError):
        ps.target_operator(qubit_device, 'cz')


def test_default_phi_tracks_phase_difference(qubit_device, coupler_device):
    assert ps.default_phi(qubit_device, ps.OperatingPoint(60.0)) == pytest.approx(np.pi)
    point = ps.OperatingPoint(300.0, phases=(0.5, 0.0))
    assert ps.default_phi(coupler_device, point) == pytest.approx(0.5 - np.pi)


@pytest.mark.parametrize('coupler, expected', [(0, 0.405), (1, 0.28)])
def test_modulation_frequency_near_bare_transition(coupler_device, coupler, expected):
    estimate = ps.ghz(ps.estimate_modulation_frequency(coupler_device, coupler))
    assert estimate == pytest.approx(expected, abs=0.03)


def test_coupler_schedule_updates_drives(coupler_device):
    point = ps.OperatingPoint(300.0, detunings=(0.001, 0.0), phases=(0.2, 0.0), amplitudes=(0.07, 0.09))
    device, schedule = ps.build_schedule(coupler_device, 'cz01', point)
    assert device.drives[0].amplitude == 0.07
    assert device.drives[0].phase == 0.2
    assert device.drives[1].amplitude == 0.09
    (site, modulation), = schedule.offsets
    assert site == 3
    assert modulation(0.0) == pytest.approx(0.0)
    assert (schedule.start, schedule.end) == (0.0, 300.0)


def test_coordinate_descent_finds_peak():
    x, best = ps.coordinate_descent(lambda v: -(v[0] - 1.0) ** 2 - (v[1] + 2.0) ** 2,
                                    [0.0, 0.0], [(-3, 3), (-3, 3)], sweeps=2, coarse=7, xatol=1e-6)
    np.testing.assert_allclose(x, [1.0, -2.0], atol=1e-4)
    assert best == pytest.approx(0.0, abs=1e-8)


def test_truncation_check_passes_when_idle(qubit_device):
    report = ps.truncation_check(qubit_device, ps.idle_schedule(5.0), gl.named_gate('identity'),
                                 ps.StepControl(step=0.5))
    assert not report.flagged
    assert report.change < 1e-9


@pytest.mark.parametrize('threshold, flagged', [(0.0, True), (1.0, False)])
def test_truncation_check_flags_report(qubit_device, threshold, flagged):
    point = ps.OperatingPoint(3.0)
    control = ps.StepControl(step=0.05, check_convergence=False)
    report = ps.simulate_gate(qubit_device, 'cz02', point, control)
    result = ps.check_report_truncation(qubit_device, 'cz02', point, report, control, threshold=threshold)
    assert result.flagged == flagged
    assert ('truncation' in report.flags) == flagged
    assert report.settings['truncation_levels'] == 4
    assert report.settings['truncation_change'] == pytest.approx(result.change)


def test_run_helpers_check_gate_family():
    with pytest.raises(ValueError):
        ps.run_cczs_tunable_qubits(gate='div')
    with pytest.raises(ValueError):
        ps.run_div_tunable_qubits(gate='cz02')


# ==================== DEVICE REPRODUCTIONS ====================

@pytest.mark.slow
def test_cz02_on_tunable_qubits(qubit_device):
    report = ps.run_cczs_tunable_qubits(qubit_device, gate='cz02', point=ps.OperatingPoint(93.0))
    assert report.fidelity >= 0.999


@pytest.mark.slow
def test_cz02_default_point_step_converged(qubit_device):
    report = ps.simulate_gate(qubit_device, 'cz02')
    assert report.settings['check_convergence']
    assert report.settings['halving_delta'] < 1e-6


@pytest.mark.slow
def test_cczs_on_tunable_qubits(qubit_device):
    report = ps.run_cczs_tunable_qubits(qubit_device, calibrate_first=True)
    assert report.fidelity >= 0.99
    assert report.gate_time == pytest.approx(66.8, abs=3.0)
    assert report.gate_time / ps.default_point(qubit_device, 'cz02').gate_time == pytest.approx(
        1 / np.sqrt(2), rel=0.05)


@pytest.mark.slow
def test_iswap_and_div_on_tunable_qubits():
    device = ps.builtin_device('div-tunable-qubits')
    iswap = ps.run_div_tunable_qubits(device, gate='iswap01', calibrate_first=True)
    assert iswap.fidelity >= 0.995
    div = ps.run_div_tunable_qubits(device, calibrate_first=True)
    assert div.fidelity >= 0.985
    assert div.gate_time == pytest.approx(47.5, abs=3.0)
    populations = [div.populations[f'{s}<-010'] for s in ('010', '100', '001')]
    assert populations == pytest.approx([0.25, 0.5, 0.25], abs=0.02)


@pytest.fixture(scope='module')
def calibrated_cz01(coupler_device):
    return ps.run_cczs_tunable_coupler(coupler_device, gate='cz01', calibrate_first=True)


@pytest.mark.slow
def test_cz01_on_tunable_coupler(calibrated_cz01):
    report = calibrated_cz01
    assert report.fidelity >= 0.995
    assert report.gate_time == pytest.approx(405.0, rel=0.05)
    assert report.settings['truncation_levels'] == 4
    assert ('truncation' in report.flags) == (report.settings['truncation_change'] >= ps.TRUNCATION_THRESHOLD)


@pytest.mark.slow
def test_cz02_on_tunable_coupler(coupler_device):
    report = ps.run_cczs_tunable_coupler(coupler_device, gate='cz02', calibrate_first=True, check_truncation=False)
    assert report.fidelity >= 0.995
    assert report.gate_time == pytest.approx(396.0, rel=0.05)


@pytest.mark.slow
def test_cczs_on_tunable_coupler(coupler_device, calibrated_cz01):
    report = ps.run_cczs_tunable_coupler(coupler_device, calibrate_first=True, check_truncation=False)
    assert report.fidelity >= 0.99
    ramps = 2 * coupler_device.rise
    ratio = (report.gate_time - ramps) / (calibrated_cz01.gate_time - ramps)
    assert ratio == pytest.approx(1 / np.sqrt(2), rel=0.1)
