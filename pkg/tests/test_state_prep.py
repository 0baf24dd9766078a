import numpy as np
import pytest

import state_prep as sp

PREPARE_TOL = 1e-10


@pytest.mark.parametrize('name', sorted(sp.PROTOCOLS))
def test_protocol_reaches_target(name):
    protocol = sp.PROTOCOLS[name]()
    out = sp.run_protocol(protocol)
    assert sp.protocol_fidelity(protocol, out) == pytest.approx(1.0, abs=PREPARE_TOL)


def test_ghz3_uses_one_simultaneous_gate():
    protocol = sp.ghz3_protocol(lam=1.0)
    assert len(protocol.multi_site_steps()) == 1
    out = sp.run_protocol(protocol)
    assert out.population('000') == pytest.approx(0.5)
    assert out.population('111') == pytest.approx(0.5)


@pytest.mark.parametrize('lam', [1.0, 0.25])
def test_ghz3_is_faster_than_two_sequential_cz(lam):
    simultaneous = sp.total_evolution_time(sp.ghz3_protocol(lam))
    sequential = sp.total_evolution_time(sp.ghz3_two_cz_protocol(lam))
    assert simultaneous == pytest.approx(np.pi / (np.sqrt(2) * lam))
    assert sequential / simultaneous == pytest.approx(2 * np.sqrt(2))


def test_dicke53_evolution_times():
    lam = 0.5
    protocol = sp.dicke53_protocol(lam)
    expected = np.pi / (4 * lam) + np.pi / (2 * np.sqrt(6) * lam)
    assert sp.total_evolution_time(protocol) == pytest.approx(expected)
    assert len(protocol.multi_site_steps()) == 2


def test_dicke53_iswap_variant_agrees_with_cz_variant():
    cz = sp.run_protocol(sp.dicke53_protocol())
    iswap = sp.run_protocol(sp.dicke53_iswap_protocol())
    assert cz.fidelity(iswap) == pytest.approx(1.0, abs=PREPARE_TOL)


def test_w_div_single_gate_time():
    protocol = sp.w_div_protocol(g=2.0)
    assert sp.total_evolution_time(protocol) == pytest.approx(sp.W_DIV_VARPHI / (2 * np.sqrt(2)))
    out = sp.run_protocol(protocol)
    for basis in ('100', '010', '001'):
        assert out.population(basis) == pytest.approx(1 / 3)


def test_w_div_with_wrong_angle_misses_target():
    protocol = sp.w_div_protocol(varphi=np.pi / 2)
    assert sp.protocol_fidelity(protocol, sp.run_protocol(protocol)) < 0.99


def test_weighted_excitation_follows_couplings():
    couplings = (1.0, 0.5j, 0.5)
    protocol = sp.weighted_excitation_protocol(couplings)
    out = sp.run_protocol(protocol)
    assert sp.protocol_fidelity(protocol, out) == pytest.approx(1.0, abs=PREPARE_TOL)
    assert out.population('1100') == pytest.approx(1 / 1.5)


def test_plus_cells_grid_shape():
    grid = sp.SquareGrid.plus_cells()
    assert len(grid.sites) == 21
    assert grid.neighbours((0, 0)) == [(-1, 0), (0, -1), (0, 1), (1, 0)]


@pytest.mark.parametrize('variant', ['cz', 'iswap'])
def test_w_scaleup_spreads_over_sixteen_sites(variant):
    protocol = sp.w_scaleup_protocol(sp.SquareGrid.plus_cells(), variant=variant)
    out = sp.run_protocol(protocol)
    assert sp.protocol_fidelity(protocol, out) == pytest.approx(1.0, abs=PREPARE_TOL)
    populations = sp.site_populations(protocol, out)
    occupied = [p for p in populations.values() if p > 1e-9]
    assert len(occupied) == 16
    assert occupied == pytest.approx([1 / 16] * 16)


def test_w_scaleup_on_star_is_a_single_spread():
    protocol = sp.w_scaleup_protocol(sp.SquareGrid.star(3), variant='iswap', lam=2.0)
    assert sp.total_evolution_time(protocol) == pytest.approx(np.pi / (4 * np.sqrt(3)))
    out = sp.run_protocol(protocol)
    assert sp.protocol_fidelity(protocol, out) == pytest.approx(1.0, abs=PREPARE_TOL)


def test_w_scaleup_rejects_bad_geometry():
    with pytest.raises(sp.AdjacencyError):
        sp.w_scaleup_protocol(sp.SquareGrid.star(4), centre=(5, 5))
    with pytest.raises(sp.AdjacencyError):
        sp.w_scaleup_protocol(sp.SquareGrid.from_sites([(0, 0)]))
    with pytest.raises(ValueError):
        sp.w_scaleup_protocol(sp.SquareGrid.star(4), variant='cnot')


def test_protocol_without_target_has_no_fidelity():
    protocol = sp.Protocol('empty', sp.gl.QUBITS3)
    with pytest.raises(ValueError):
        sp.protocol_fidelity(protocol, protocol.initial_state())
