import json

import numpy as np
import pytest
from scipy import linalg

import qudit_algebra as qa


def test_register_indexing_last_site_fastest():
    shape = qa.RegisterShape((3, 2, 3), ('q0', 'q1', 'q2'))
    assert shape.total == 18
    assert shape.strides == (6, 3, 1)
    assert shape.index('|201>') == 2 * 6 + 0 * 3 + 1
    assert shape.digits(13) == (2, 0, 1)
    assert shape.label(13) == '|201>'
    assert shape.site('q2') == 2


@pytest.mark.parametrize('dims, labels', [((1, 2), ()), ((2, 2), ('a', 'a')), ((2, 2), ('a',))])
def test_register_rejects_bad_shapes(dims, labels):
    with pytest.raises(qa.ShapeMismatchError):
        qa.RegisterShape(dims, labels)


def test_index_rejects_levels_outside_site():
    shape = qa.RegisterShape((2, 2))
    with pytest.raises(qa.ShapeMismatchError):
        shape.index('20')


def test_superposition_is_normalised():
    shape = qa.RegisterShape.uniform(2, 2)
    state = qa.StateVector.superposition(shape, {'00': 1.0, '11': 1.0})
    assert state.norm == pytest.approx(1.0)
    assert state.population('11') == pytest.approx(0.5)
    assert set(state.support()) == {'|00>', '|11>'}


def test_embed_matches_kron_on_adjacent_sites(rng):
    local = qa.random_unitary(6, rng)
    full = qa.embed_matrix(local, (2, 3, 2), (0, 1))
    np.testing.assert_allclose(full, np.kron(local, np.eye(2)), atol=1e-12)


def test_embed_reversed_sites_is_swap_conjugate(rng):
    a = qa.random_unitary(2, rng)
    b = qa.random_unitary(3, rng)
    full = qa.embed_matrix(np.kron(b, a), (2, 3), (1, 0))
    np.testing.assert_allclose(full, np.kron(a, b), atol=1e-12)


def test_embed_non_adjacent_site(rng):
    a = qa.random_unitary(2, rng)
    full = qa.embed_matrix(a, (2, 2, 2), (2,))
    np.testing.assert_allclose(full, np.kron(np.eye(4), a), atol=1e-12)


def test_expm_agrees_with_scipy_and_is_unitary(rng):
    shape = qa.RegisterShape((3, 3))
    h = qa.random_hermitian(9, rng, scale=2.0)
    u = qa.expm(qa.Operator(shape, h), 0.7)
    np.testing.assert_allclose(u.matrix, linalg.expm(-1j * 0.7 * h), atol=1e-10)
    assert u.is_unitary()


def test_expm_rejects_non_hermitian():
    shape = qa.RegisterShape((2,))
    with pytest.raises(qa.NotHermitianError):
        qa.expm(qa.Operator(shape, [[0, 1], [0, 0]]), 1.0)


def test_unitary_flag_is_checked():
    with pytest.raises(ValueError):
        qa.Operator(qa.RegisterShape((2,)), [[1, 1], [0, 1]], unitary=True)


def test_global_phase_equivalence(rng):
    shape = qa.RegisterShape.uniform(2, 2)
    u = qa.Operator(shape, qa.random_unitary(4, rng))
    assert u.scaled(np.exp(0.4j)).equals_up_to_phase(u)
    assert not u.scaled(np.exp(0.4j)).equals(u)


def test_projector_orders_qubit_sites_binary():
    shape = qa.RegisterShape((3, 3, 3, 3))
    proj = qa.ComputationalProjector(shape, (0, 1, 2))
    assert proj.n == 8
    assert proj.indices[1] == shape.index('0010')
    assert proj.indices[4] == shape.index('1000')
    assert proj.qubit_shape.dims == (2, 2, 2)


def test_projection_and_leakage_of_identity():
    shape = qa.RegisterShape((3, 3))
    proj = qa.ComputationalProjector(shape)
    ident = qa.Operator.identity(shape)
    block = qa.project_computational(ident, proj)
    np.testing.assert_allclose(block.matrix, np.eye(4))
    assert qa.leakage_norm(ident, proj) == 0.0


def test_truncate_then_pad_restores_qubit_block(rng):
    shape = qa.RegisterShape((2, 2))
    u = qa.Operator(shape, qa.random_unitary(4, rng))
    padded = qa.pad_levels(u, 3)
    assert padded.shape.dims == (3, 3)
    assert padded.is_unitary()
    assert qa.truncate_levels(padded, 2).equals(u)


def test_random_states_are_unit_rows(rng):
    states = qa.random_states(8, 5, rng)
    np.testing.assert_allclose(np.linalg.norm(states, axis=1), 1.0)


def test_operator_json_keeps_twelve_digits():
    shape = qa.RegisterShape((2,))
    op = qa.Operator(shape, [[1 / 3, 0], [0, np.exp(1j * np.pi / 7)]])
    data = json.loads(json.dumps(qa.operator_to_json(op)))
    back = qa.operator_from_json(data)
    assert back.max_deviation(op) < 1e-11
    assert data['dims'] == [2]


def test_state_json_rejects_wrong_kind():
    with pytest.raises(qa.ShapeMismatchError):
        qa.state_from_json({'kind': 'operator', 'dims': [2], 'amplitudes': [[1, 0], [0, 0]]})
