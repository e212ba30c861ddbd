import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qratchet.propagate import (
    IntegratorConfig,
    NormDriftError,
    chain_apply,
    convergence_check,
    propagate_state,
    propagate_unitary,
    rk4_step_matrices,
    segment_grid,
    unitarity_defect,
)


def random_hermitian(rng, d):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (A + A.conj().T)


@given(seed=st.integers(0, 2**31), d=st.integers(2, 6), t1=st.floats(0.1, 3.0))
@settings(max_examples=20, deadline=None)
def test_constant_hamiltonian_matches_expm(seed, d, t1):
    rng = np.random.default_rng(seed)
    H = random_hermitian(rng, d)
    H /= np.linalg.norm(H, 2)
    U = propagate_unitary(lambda t: H, d, 0.0, t1, IntegratorConfig(dt=1e-3))
    np.testing.assert_allclose(U, expm(-1j * H * t1), atol=1e-9)


def test_backward_propagation_inverts_forward():
    rng = np.random.default_rng(3)
    H0, H1 = random_hermitian(rng, 4), random_hermitian(rng, 4)

    def H(t):
        return H0 + math.sin(t) * H1

    cfg = IntegratorConfig(dt=1e-3)
    psi0 = np.eye(4)[:, 0]
    fwd = propagate_state(H, psi0, 0.0, 1.5, cfg).final
    back = propagate_state(H, fwd, 1.5, 0.0, cfg).final
    np.testing.assert_allclose(back, psi0, atol=1e-10)


def test_rk4_order():
    rng = np.random.default_rng(1)
    H0, H1 = random_hermitian(rng, 3), random_hermitian(rng, 3)
    rep = convergence_check(lambda t: H0 + math.cos(2 * t) * H1, np.eye(3)[:, 1], 0.0, 2.0, IntegratorConfig(dt=0.02))
    assert 14.0 < rep.ratio < 18.0
    assert rep.order == pytest.approx(4.0, abs=0.2)


def test_square_pulse_breakpoint_is_exact():
    # oracle: piecewise-constant propagator from two matrix exponentials
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    B = np.diag([1.0, -1.0])

    def H(t):
        return A if t < 0.7 else B

    cfg = IntegratorConfig(dt=1e-3)
    U = propagate_unitary(H, 2, 0.0, 1.3, cfg, breakpoints=[0.7])
    exact = expm(-1j * B * 0.6) @ expm(-1j * A * 0.7)
    np.testing.assert_allclose(U, exact, atol=1e-12)


def test_norm_drift_detection():
    H = np.diag([0.0, 50.0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(NormDriftError):
            propagate_state(lambda t: H, np.ones(2) / math.sqrt(2), 0.0, 1.0, IntegratorConfig(dt=0.05))
        rec = propagate_state(
            lambda t: H, np.ones(2) / math.sqrt(2), 0.0, 1.0, IntegratorConfig(dt=0.05, renormalize=True)
        )
    assert np.linalg.norm(rec.final) == pytest.approx(1.0)
    assert rec.norm_drift > 1e-7


def test_large_step_warns():
    H = np.diag([0.0, 10.0])
    with pytest.warns(RuntimeWarning):
        propagate_state(lambda t: H, np.eye(2)[:, 0], 0.0, 0.1, IntegratorConfig(dt=0.05))


def test_sample_times_recorded():
    rec = propagate_state(lambda t: np.eye(2), np.eye(2)[:, 0], 0.0, 1.0, IntegratorConfig(dt=0.01), sample_times=[0.25, 0.5])
    np.testing.assert_allclose(rec.times, [0.0, 0.25, 0.5, 1.0])
    assert rec.final[0] == pytest.approx(np.exp(-1j))


def test_segment_grid():
    segs = segment_grid(0.0, 1.0, 0.3, [0.5])
    assert [s[2] for s in segs] == [2, 2]
    assert segment_grid(1.0, 0.0, 0.5)[0][:2] == (1.0, 0.0)


def test_step_matrices_match_loop_rk4():
    rng = np.random.default_rng(5)
    H0, H1 = random_hermitian(rng, 3), random_hermitian(rng, 3)
    n, T = 200, 1.0
    h = T / n
    t = np.arange(n) * h
    Hs = lambda s: H0[None] + np.sin(s)[:, None, None] * H1[None]
    steps = rk4_step_matrices(h, Hs(t), Hs(t + h / 2), Hs(t + h))
    psi0 = np.eye(3, dtype=complex)
    U_batched = chain_apply(steps.step, psi0)
    U_loop = propagate_unitary(lambda s: H0 + math.sin(s) * H1, 3, 0.0, T, IntegratorConfig(dt=h))
    np.testing.assert_allclose(U_batched, U_loop, atol=1e-10)
    path = chain_apply(steps.step, psi0[:, :1], keep=True)
    manual = [psi0[:, :1]]
    for S in steps.step:
        manual.append(S @ manual[-1])
    np.testing.assert_allclose(path, np.array(manual), atol=1e-12)
    assert unitarity_defect(U_batched) < 1e-8


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.1, method="euler")
    assert IntegratorConfig.for_half_period(2.0, 100).dt == pytest.approx(0.02)
