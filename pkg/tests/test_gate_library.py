import numpy as np
import pytest

import gate_library as gl
import qudit_algebra as qa


def test_u_czs_swap_point():
    block = gl.u_czs(gl.CczsParams(np.pi / 2, np.pi, 0.0))
    expected = np.array([[1, 0, 0, 0], [0, 0, -1, 0], [0, -1, 0, 0], [0, 0, 0, -1]])
    np.testing.assert_allclose(block.matrix, expected, atol=1e-12)


@pytest.mark.parametrize('phi', [0.0, 0.3, np.pi / 2, -2.0])
def test_u_czs_quarter_turn_is_phased_swap(phi):
    block = gl.u_czs(gl.CczsParams(np.pi / 2, phi, 0.0)).matrix
    assert block[1, 2] == pytest.approx(np.exp(-1j * phi))
    assert block[2, 1] == pytest.approx(np.exp(1j * phi))
    assert block[1, 1] == pytest.approx(0.0, abs=1e-12)


def test_cczs_theta_zero_is_cz01():
    gate = gl.cczs(gl.CczsParams(0.0, 0.7, 0.4))
    assert gate.equals(gl.cz_pair(0, 1, 0.4))


def test_cczs_leaves_q0_ground_block_alone(rng):
    p = gl.CczsParams(*rng.uniform(-1, 1, 3))
    gate = gl.cczs(p).matrix
    np.testing.assert_allclose(gate[:4, :4], np.eye(4), atol=1e-12)
    np.testing.assert_allclose(gate[4:, :4], 0, atol=1e-12)


@pytest.mark.parametrize('gamma', [np.pi, -np.pi, 4.0, np.nan])
def test_gamma_outside_open_interval_is_rejected(gamma):
    with pytest.raises(gl.GateParameterError):
        gl.CczsParams(1.0, 0.0, gamma)


@pytest.mark.parametrize('theta, phi, gamma', [(np.pi / 2, np.pi, 0.0), (0.4, -1.1, 0.8), (2.9, 2.0, -2.5)])
def test_drive_round_trip(theta, phi, gamma):
    p = gl.CczsParams(theta, phi, gamma)
    back, t_gate = gl.params_from_drive(gl.drive_from_params(p, omega=2.0))
    assert back.theta == pytest.approx(theta)
    assert back.phi == pytest.approx(phi)
    assert back.gamma == pytest.approx(gamma)
    assert t_gate > 0


def test_equal_drives_give_swap_point_in_pi_over_root_two():
    p, t_gate = gl.params_from_drive(gl.PhysicalCzDrive(1.0, 1.0))
    assert p.theta == pytest.approx(np.pi / 2)
    assert p.phi == pytest.approx(np.pi)
    assert p.gamma == 0.0
    assert t_gate == pytest.approx(np.pi / np.sqrt(2))


def test_zero_drive_is_rejected():
    with pytest.raises(gl.GateParameterError):
        gl.PhysicalCzDrive(0.0, 0.0)


def test_div_block_structure():
    p = gl.DivParams.from_couplings(1.0, 1.0, np.pi / 2 / np.sqrt(2))
    gate = gl.div(p)
    assert gate.is_unitary()
    one = [gl.QUBITS3.index(b) for b in gl.DIV_ONE_EXCITATION]
    two = [gl.QUBITS3.index(b) for b in gl.DIV_TWO_EXCITATIONS]
    np.testing.assert_allclose(gate.matrix[np.ix_(one, one)], gate.matrix[np.ix_(two, two)])
    for fixed in ('000', '111'):
        i = gl.QUBITS3.index(fixed)
        assert gate.matrix[i, i] == pytest.approx(1.0)


def test_div_splits_middle_excitation():
    gate = gl.div(gl.DivParams(np.pi / 4, np.pi / 2))
    state = qa.StateVector.basis(gl.QUBITS3, '010')
    out = gate.apply(state)
    assert out.population('010') == pytest.approx(0.25)
    assert out.population('100') == pytest.approx(0.5)
    assert out.population('001') == pytest.approx(0.25)


def test_negative_div_coupling_is_rejected():
    with pytest.raises(gl.GateParameterError):
        gl.DivParams.from_couplings(-1.0, 1.0, 1.0)


def test_iswap_is_xy_pi():
    assert gl.iswap().equals(gl.xy(np.pi, 0.0))
    assert gl.iswap().matrix[1, 2] == pytest.approx(1j)


def test_physical_iswap_carries_minus_i():
    u = gl.u_iswap_beta(np.pi / 2).matrix
    assert u[1, 2] == pytest.approx(-1j)
    assert u[2, 1] == pytest.approx(-1j)
    assert u[1, 1] == pytest.approx(0.0, abs=1e-12)


def test_stray_coupling_only_touches_ground_block():
    p = gl.CczsParams(np.pi / 2, np.pi, 0.0)
    gate = gl.cczs_with_stray_coupling(p, np.pi / 2).matrix
    np.testing.assert_allclose(gate[4:, 4:], gl.u_czs(p).matrix, atol=1e-12)
    np.testing.assert_allclose(gate[:4, :4], gl.u_iswap_beta(np.pi / 2).matrix, atol=1e-12)


def test_named_gate_defaults_and_parameters():
    assert gl.named_gate('cczs').equals(gl.cczs(gl.CczsParams(np.pi / 2, np.pi, 0.0)))
    assert gl.named_gate('cz', gamma=0.5).equals(gl.cz(0.5))
    assert gl.named_gate('identity').equals(qa.Operator.identity(gl.QUBITS3))


def test_named_gate_errors():
    with pytest.raises(gl.GateParameterError, match='unknown gate'):
        gl.named_gate('cnot-ish')
    with pytest.raises(gl.GateParameterError, match='no parameter'):
        gl.named_gate('swap', theta=1.0)


@pytest.mark.parametrize('name', sorted(gl.NAMED_GATES))
def test_every_named_gate_is_unitary(name):
    assert gl.named_gate(name).is_unitary()


def test_decomposition_holds_on_grid_and_random_points():
    report = gl.verify_decomposition(grid=3, n_random=20)
    assert report.passed
    assert len(report.residuals) == 3 * 3 * 3 + 20
    assert report.max_residual < 1e-10


def test_fredkin_construction():
    composite, report = gl.construct_fredkin()
    assert report.passed
    assert composite.equals_up_to_phase(gl.fredkin())


def test_ifredkin_construction_finds_a_placement():
    composite, report = gl.construct_ifredkin()
    assert report.passed
    assert report.details['placement'] is not None
    assert composite.equals_up_to_phase(gl.ifredkin())


def test_cczs_never_reaches_toffoli():
    report = gl.toffoli_distance_scan(grid=6)
    assert report.passed
    assert report.details['min_distance'] > 0.5


def test_identity_alias_and_unknown_name():
    assert gl.verify_identity('decomposition', grid=2).identity == 'xy-cz'
    with pytest.raises(gl.GateParameterError):
        gl.verify_identity('nope')
