import numpy as np
import pytest

import effective_dynamics as ed
import gate_library as gl
import qudit_algebra as qa

QUTRIT_PROJECTOR = qa.ComputationalProjector(ed.QUTRITS3)


@pytest.mark.parametrize('lambda1, lambda2, delta', [
    (1.0, 1.0, 0.0),
    (0.6, 0.8j, 0.0),
    (1.0, -0.4 + 0.3j, 0.5),
    (0.2, 1.3, -0.9),
])
def test_cz_pair_propagator_is_cczs(lambda1, lambda2, delta):
    model = ed.CzPairModel(lambda1, lambda2, delta)
    params, t_gate = model.gate_params()
    u = ed.propagate(model, t_gate)
    block = qa.project_computational(u, QUTRIT_PROJECTOR)
    assert block.max_deviation(gl.cczs(params)) < 1e-8
    assert qa.leakage_norm(u, QUTRIT_PROJECTOR) < 1e-8


def test_cz_pair_dark_state_is_stationary():
    model = ed.CzPairModel(0.7, 0.3 - 0.2j)
    dark = model.dark_state()
    assert abs(dark.overlap(model.bright_state())) < 1e-12
    for t in (0.3, 1.7, model.t_gate()):
        out = ed.propagate(model, t).apply(dark)
        assert out.fidelity(dark) == pytest.approx(1.0)


def test_cz_pair_bright_state_visits_excited_level():
    model = ed.CzPairModel(1.0, 1.0)
    half = model.t_gate() / 2
    out = ed.propagate(model, half).apply(model.bright_state())
    assert out.population('200') == pytest.approx(1.0)


def test_v_system_dark_state_is_orthogonal():
    model = ed.CzPairModel(0.5, 0.9j)
    assert abs(model.v_dark_state().overlap(model.v_bright_state())) < 1e-12


def test_zero_couplings_are_rejected():
    with pytest.raises(ed.ModelError):
        ed.CzPairModel(0.0, 0.0)
    with pytest.raises(ed.ModelError):
        ed.IswapPairModel(0.0, 0.0)


@pytest.mark.parametrize('g1, g2, t', [(1.0, 1.0, 0.9), (0.3, 0.8, 2.0), (1.0, 0.0, np.pi / 2)])
def test_iswap_pair_propagator_is_div(g1, g2, t):
    model = ed.IswapPairModel(g1, g2)
    u = ed.propagate(model, t)
    assert u.max_deviation(gl.div(model.div_params(t))) < 1e-8


def test_iswap_pair_dark_states_do_not_move():
    model = ed.IswapPairModel(0.4, 0.9)
    u = ed.propagate(model, 1.3)
    for dark in model.dark_states():
        assert u.apply(dark).fidelity(dark) == pytest.approx(1.0)


def test_collective_factor_and_range():
    assert ed.collective_factor(4, 0) == pytest.approx(2.0)
    assert ed.collective_factor(4, 1) == pytest.approx(np.sqrt(6))
    with pytest.raises(ed.ModelError):
        ed.collective_factor(4, 4)


def test_symmetric_hamiltonian_matches_full_register():
    model = ed.DickeModel.uniform(3, 0.8)
    full = ed.dicke_hamiltonian(model, symmetric=False).matrix
    sym = ed.dicke_hamiltonian(model, symmetric=True).matrix
    embedding = np.kron(np.eye(3), ed.symmetric_embedding(3))
    np.testing.assert_allclose(embedding.conj().T @ full @ embedding, sym, atol=1e-12)


def test_unequal_couplings_have_no_symmetric_form():
    model = ed.DickeModel((1.0, 0.5))
    assert not model.symmetric
    with pytest.raises(ed.ModelError):
        ed.dicke_hamiltonian(model, symmetric=True)


@pytest.mark.parametrize('n, k', [(4, 0), (4, 1), (3, 2)])
def test_dicke_step_completes_transfer(n, k):
    lam = 0.7
    model = ed.DickeModel.uniform(n, lam)
    t = model.step_time(k)
    shape = model.shape(True)
    u = ed.propagate(model, t)
    start = qa.StateVector.basis(shape, (2, k))
    assert u.apply(start).population((1, k + 1)) == pytest.approx(1.0)
    step = ed.dicke_step(n, k, lam, t).matrix
    pair = [shape.index((1, k + 1)), shape.index((2, k))]
    np.testing.assert_allclose(u.matrix[np.ix_(pair, pair)], step, atol=1e-10)


def test_dicke_model_conserves_excitations():
    model = ed.DickeModel.uniform(2, 1.0)
    h = ed.dicke_hamiltonian(model, symmetric=False).matrix
    number = np.diag(ed.dicke_excitation_number(model, symmetric=False))
    np.testing.assert_allclose(h @ number - number @ h, 0, atol=1e-12)


def test_dicke_amplitudes_are_normalised():
    amps = ed.dicke_amplitudes(5, 2)
    assert np.linalg.norm(amps) == pytest.approx(1.0)
    assert np.count_nonzero(amps) == 10


def test_delta_system_full_transfer():
    alpha13 = 1.0
    alpha = ed.full_transfer_coupling(alpha13)
    model = ed.DeltaSystemModel(alpha, alpha, alpha13)
    assert model.omega == pytest.approx(0.75)
    t = 4 * np.pi / 3
    assert ed.delta_transfer_probability(model, t) == pytest.approx(1.0)
    u = ed.delta_system_propagator(model, t)
    assert abs(u.matrix[1, 0]) < 1e-12


@pytest.mark.parametrize('t', [4 * np.pi / 3, 4 * np.pi])
def test_delta_closed_form_matches_expm(t):
    alpha = ed.full_transfer_coupling(1.0)
    model = ed.DeltaSystemModel(alpha, alpha, 1.0)
    dense = qa.expm(ed.build_hamiltonian(model), t)
    assert ed.delta_system_propagator(model, t).max_deviation(dense) < 1e-8


def test_negative_time_is_rejected():
    with pytest.raises(ed.ModelError):
        ed.propagate(ed.IswapPairModel(1.0, 1.0), -1.0)


def test_envelope_uses_pulse_area():
    model = ed.IswapPairModel(1.0, 1.0)
    t_end = 2.0
    shaped = ed.propagate_with_envelope(model, lambda t: np.sin(np.pi * t / t_end) ** 2, t_end)
    # sin^2 over one period averages to one half
    assert shaped.max_deviation(ed.propagate(model, t_end / 2)) < 1e-8


def test_envelope_needs_resonant_cz_drive():
    with pytest.raises(ed.ModelError):
        ed.propagate_with_envelope(ed.CzPairModel(1.0, 1.0, 0.3), lambda t: 1.0, 1.0)


def test_unknown_model_has_no_hamiltonian():
    with pytest.raises(ed.ModelError):
        ed.build_hamiltonian(object())
