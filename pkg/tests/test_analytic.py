import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qratchet.analytic import (
    THREE_LEVEL_BASIS,
    SuperlatticeSchedule,
    fastest_square_solution,
    fock_three_level_block,
    hole_phase_check,
    noninteracting_rotation,
    noninteracting_swap_time,
    pulse_area,
    role_swapped_schedule,
    square_eigenvalues,
    square_solution_family,
    swap_amplitude,
    three_level_matrix,
    three_level_propagate,
    two_well_pauli_hamiltonian,
    zero_force_average,
)
from qratchet.propagate import IntegratorConfig


def test_rotation_is_single_particle_propagator():
    J, t = 0.8, 1.1
    H = -J * np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(noninteracting_rotation(J * t), expm(-1j * H * t), atol=1e-14)


def test_swap_time_constant_and_ramp():
    assert noninteracting_swap_time(lambda t: 0.5) == pytest.approx(math.pi, rel=1e-12)
    # area t^2/2 reaches pi/2 at t = sqrt(pi)
    assert noninteracting_swap_time(lambda t: t) == pytest.approx(math.sqrt(math.pi), rel=1e-10)
    with pytest.raises(ValueError):
        noninteracting_swap_time(lambda t: 0.0, t_max=10.0)


def test_three_level_is_projection_of_two_well_model():
    # oracle: the 4x4 Pauli form restricted to (psi-, psi+, phi+)
    for J, U in [(0.3, 1.0), (1.2, -0.4)]:
        H4 = two_well_pauli_hamiltonian(J, U)
        H3 = THREE_LEVEL_BASIS.T @ H4 @ THREE_LEVEL_BASIS
        np.testing.assert_allclose(H3, three_level_matrix(J, U), atol=1e-14)
        # the complement phi- is decoupled
        phi_minus = np.array([1.0, 0.0, 0.0, -1.0]) / math.sqrt(2)
        np.testing.assert_allclose(THREE_LEVEL_BASIS.T @ H4 @ phi_minus, 0, atol=1e-14)


def test_square_eigenvalues():
    lp, lm = square_eigenvalues(0.7, 1.3)
    np.testing.assert_allclose(sorted([lp, lm]), np.linalg.eigvalsh(three_level_matrix(0.7, 1.3)[1:, 1:]))


def test_swap_amplitude_formula():
    rng = np.random.default_rng(0)
    U3 = expm(-1j * three_level_matrix(0.4, 1.0) * rng.uniform(0, 5))
    assert swap_amplitude(U3) == pytest.approx(0.5 * (U3[1, 1] - U3[0, 0]))


def test_square_family_shape():
    fam = square_solution_family(3)
    assert len(fam) == 6
    assert all(s.x > 1 for s in fam)
    assert [s.U_T for s in fam] == sorted(s.U_T for s in fam)
    best = fastest_square_solution(fam)
    assert (best.n_plus, best.n_minus) == (1, 0)
    assert best.U_T == pytest.approx(2 * math.pi)
    assert best.J_T == pytest.approx(math.pi * math.sqrt(3) / 2)
    assert square_solution_family(0) == []
    with pytest.raises(ValueError):
        square_solution_family(-1)


@pytest.mark.parametrize("n_plus, n_minus", [(1, 0), (2, 1), (3, 0)])
def test_square_solutions_swap(n_plus, n_minus):
    fam = {(s.n_plus, s.n_minus): s for s in square_solution_family(3)}
    s = fam[(n_plus, n_minus)]
    U = 1.7
    res = three_level_propagate(lambda t: s.J(U), U, s.T(U))
    assert res.fidelity > 1 - 1e-8
    np.testing.assert_allclose(np.abs(np.diag(res.unitary)), 1, atol=1e-6)
    assert res.unitary[1, 1] == pytest.approx(-1, abs=1e-5)


@given(seed=st.integers(0, 2**31))
@settings(max_examples=10, deadline=None)
def test_dark_state_untouched(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0, 1, 3)
    T = 4.0
    J = lambda t: sum(ci * math.sin((i + 1) * math.pi * t / T) ** 2 for i, ci in enumerate(c))
    res = three_level_propagate(J, 1.0, T, IntegratorConfig(dt=T / 500))
    assert abs(res.dark_element) > 1 - 1e-10


def test_fock_block_matches_three_level():
    J = lambda t: 0.3 + 0.2 * math.sin(t)
    cfg = IntegratorConfig(dt=1e-3)
    block = fock_three_level_block(J, 0.9, 2.5, cfg)
    res = three_level_propagate(J, 0.9, 2.5, cfg)
    np.testing.assert_allclose(block, res.unitary, atol=1e-10)


def test_hole_return_probability_follows_area():
    # two-site single particle: return probability is cos^2 of the pulse area
    for area in (2 * math.pi, math.pi, math.pi / 2, 0.3):
        T = 3.0
        rep = hole_phase_check(lambda t, a=area: a / T, T)
        assert rep.phase == pytest.approx(area)
        assert rep.return_probability == pytest.approx(math.cos(area) ** 2, abs=1e-10)
    assert hole_phase_check(lambda t: 2 * math.pi / 3.0, 3.0).is_hole_safe
    assert not hole_phase_check(lambda t: math.pi / 3.0, 3.0).is_hole_safe


def test_pulse_area():
    assert pulse_area(lambda t: math.sin(t) ** 2, math.pi) == pytest.approx(math.pi / 2)


def test_zero_force_average():
    T = 2.0
    sched = role_swapped_schedule(lambda t: 40 + 10 * math.sin(math.pi * t / T), lambda t: 30 - 5 * t, T)
    assert abs(zero_force_average(sched)) < 1e-8
    # a static tilt is not force-free
    tilted = SuperlatticeSchedule(lambda t: 40.0, lambda t: 30.0, 2 * T, phi=lambda t: 0.3)
    assert abs(zero_force_average(tilted)) > 1e-3
