import math

import numpy as np
import pytest

from qratchet.hilbert import build_qubit_basis, product_state_with_qubit, single_particle_state
from qratchet.transport import active_bonds, ideal_swap, run_transport, square_transport_pulse

T = 4 * math.pi


def test_active_bonds_alternate():
    assert active_bonds(6, "open", 0) == [(0, 1), (2, 3), (4, 5)]
    assert active_bonds(6, "open", 1) == [(1, 2), (3, 4)]
    assert (5, 0) in active_bonds(6, "periodic", 1)


def test_ideal_swap_moves_qubit():
    basis = build_qubit_basis(4)
    psi = product_state_with_qubit(basis, 2, 0.6, 0.8)
    moved = ideal_swap(psi, "open", 0)
    assert abs(product_state_with_qubit(basis, 1, 0.6, 0.8).overlap(moved)) == pytest.approx(1.0)
    single = ideal_swap(single_particle_state(4, 3), "open", 1)
    assert abs(single.amplitudes[1]) == 1


def test_square_pulse_choice():
    assert square_transport_pulse(0.0, 2.0)(0.3) == pytest.approx(math.pi / 4)
    J = square_transport_pulse(1.0, T)(0.0)
    assert J == pytest.approx(math.sqrt(5) / 8)
    with pytest.raises(ValueError):
        square_transport_pulse(1.0, 3.0)


def test_noninteracting_staircase_is_exact():
    res = run_transport(square_transport_pulse(0.0, 1.0), 1.0, 0.0, L=8, write_port=3, n_half_periods=4, model="single")
    np.testing.assert_allclose(res.steps, [3, 4, 5, 6, 7], atol=1e-9)
    assert res.final_fidelity > 1 - 1e-9


@pytest.mark.parametrize("port, first_step", [(1, +1), (3, +1), (2, -1), (4, -1)])
def test_first_step_direction(port, first_step):
    # odd write ports move right in the first half-period, even ports left
    res = run_transport(square_transport_pulse(1.0, T), T, 1.0, L=6, write_port=port, n_half_periods=1)
    assert res.steps[1] - res.steps[0] == pytest.approx(first_step, abs=1e-6)


def test_interacting_square_transport_on_ring():
    res = run_transport(
        square_transport_pulse(1.0, T), T, 1.0, L=6, write_port=1, n_half_periods=3, bc="periodic",
        alpha=1 / math.sqrt(2), beta=1 / math.sqrt(2),
    )
    np.testing.assert_allclose(res.steps, [1, 2, 3, 4], atol=1e-6)
    assert res.half_period_fidelity.min() > 1 - 1e-6
    # every site stays singly occupied
    np.testing.assert_allclose(res.density_up + res.density_down, 1, atol=1e-9)


def test_unknown_model():
    with pytest.raises(ValueError):
        run_transport(lambda t: 0.1, 1.0, 1.0, model="mean-field")
