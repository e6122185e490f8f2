import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oqb.errors import StateValidationError
from oqb.liouville import (
    DephasingGenerator,
    Liouvillian,
    dissipator,
    effective_temperature,
    energy_current_D,
    entropy_production_rate_D,
    entropy_rate_S_D,
    propagate,
    steady_state,
    unvec,
    vec,
)
from oqb.qstate import (
    GROUND_KET_STATE,
    SIGMA_Z,
    Hamiltonian,
    QubitState,
    energy_diagonal_state,
    gibbs_state,
    relative_entropy,
    spectral_floor_active,
)

from conftest import random_state
from oracles import euler_trace, rk4_trace

GAMMA = 2 / 3


@pytest.fixture(scope="module")
def L():
    return Liouvillian(Hamiltonian.qubit(), DephasingGenerator(GAMMA))


@pytest.fixture(scope="module")
def L0():
    return Liouvillian(Hamiltonian.qubit(), DephasingGenerator(0.0))


def test_vec_roundtrip():
    m = np.arange(4).reshape(2, 2) + 1j
    np.testing.assert_array_equal(unvec(vec(m)), m)
    np.testing.assert_array_equal(vec(m), [m[0, 0], m[1, 0], m[0, 1], m[1, 1]])
    stack = np.stack([m, 2 * m])
    np.testing.assert_array_equal(unvec(vec(stack)), stack)


def test_superoperator_matches_direct_action(L, rng):
    for _ in range(50):
        r = random_state(rng).matrix
        np.testing.assert_allclose(unvec(L.matrix @ vec(r)), L.apply(r), atol=1e-12)


def test_trace_row_vanishes(L):
    # vec(I)^T L = 0
    np.testing.assert_allclose(vec(np.eye(2)) @ L.matrix, 0, atol=1e-12)


def test_invalid_generator():
    with pytest.raises(ValueError):
        DephasingGenerator(-1.0)
    with pytest.raises(ValueError):
        DephasingGenerator(1.0, np.eye(2))


def test_dissipator_examples():
    g = DephasingGenerator(GAMMA)
    np.testing.assert_allclose(dissipator(np.diag([0.3, 0.7]), g), 0, atol=1e-15)
    np.testing.assert_allclose(dissipator([[0.5, 0.5], [0.5, 0.5]], g),
                               [[0, -1 / 3], [-1 / 3, 0]], atol=1e-15)
    np.testing.assert_allclose(dissipator(np.eye(2) / 2, g), 0, atol=1e-15)


@given(st.floats(0, 1), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_dissipator_hermitian_traceless(p, x, y):
    c = complex(x, y) * math.sqrt(p * (1 - p))
    d = dissipator(np.array([[p, c], [np.conj(c), 1 - p]]), DephasingGenerator(GAMMA))
    np.testing.assert_allclose(d, d.conj().T, atol=1e-14)
    assert abs(np.trace(d)) < 1e-14


def test_propagate_identity_and_stationary(L, L0):
    s = GROUND_KET_STATE
    np.testing.assert_allclose(propagate(s, L, 0.0).matrix, s.matrix, atol=1e-15)
    rho_e = L0.hamiltonian.rho_e
    for t in (0.1, 1.0, 7.3):
        np.testing.assert_allclose(propagate(rho_e, L0, t).matrix, rho_e.matrix, atol=1e-12)


def test_propagate_negative_time(L):
    with pytest.raises(ValueError):
        propagate(GROUND_KET_STATE, L, -0.1)


def test_propagator_semigroup(L):
    a = L.propagator(0.3) @ L.propagator(0.45)
    np.testing.assert_allclose(a, L.propagator(0.75), atol=1e-13)


def test_sample_matches_propagate(L):
    s = L.sample(GROUND_KET_STATE, 0.002, 0.01, 30)
    for k in (0, 7, 29):
        np.testing.assert_allclose(s[k], propagate(GROUND_KET_STATE, L, 0.002 + 0.01 * k).matrix,
                                   atol=1e-12)


@pytest.fixture(scope="module")
def expm_trace(L):
    return L.sample(GROUND_KET_STATE, 0.0, 1e-3, 10001)


def _max_err(a, b):
    return max(np.max(np.abs(a[:, 0, 0] - b[:, 0, 0])), np.max(np.abs(a[:, 0, 1] - b[:, 0, 1])))


def test_euler_first_order_convergence(expm_trace):
    # the propagator is the h -> 0 limit of Euler: error halves with the step
    e1 = _max_err(euler_trace(GROUND_KET_STATE.matrix, GAMMA, 2e-5, 1e-3, 10.0), expm_trace)
    e2 = _max_err(euler_trace(GROUND_KET_STATE.matrix, GAMMA, 1e-5, 1e-3, 10.0), expm_trace)
    assert e2 / e1 == pytest.approx(0.5, abs=0.01)


def test_richardson_euler_oracle(expm_trace):
    a = euler_trace(GROUND_KET_STATE.matrix, GAMMA, 2e-5, 1e-3, 10.0)
    b = euler_trace(GROUND_KET_STATE.matrix, GAMMA, 1e-5, 1e-3, 10.0)
    assert _max_err(2 * b - a, expm_trace) < 1e-6


def test_rk4_oracle(expm_trace):
    r = rk4_trace(GROUND_KET_STATE.matrix, GAMMA, 1e-4, 1e-3, 10.0)
    assert _max_err(r, expm_trace) < 1e-8


def test_steady_state_default_model(L):
    ss = steady_state(L)
    assert ss.unique
    np.testing.assert_allclose(ss.state.matrix, np.eye(2) / 2, atol=1e-10)
    np.testing.assert_allclose(L.apply(np.eye(2) / 2), 0, atol=1e-15)


def test_steady_state_non_unique(L0):
    ss = steady_state(L0)
    assert not ss.unique and ss.null_dimension >= 2
    ss = steady_state(Liouvillian(Hamiltonian(SIGMA_Z), DephasingGenerator(0.5)))
    assert not ss.unique
    for p in (0.1, 0.8):
        np.testing.assert_allclose(
            Liouvillian(Hamiltonian(SIGMA_Z), DephasingGenerator(0.5)).apply(np.diag([p, 1 - p])),
            0, atol=1e-15)


def test_effective_temperature(L):
    H = L.hamiltonian
    assert effective_temperature(steady_state(L), H) == math.inf
    assert effective_temperature(gibbs_state(H, 1.0), H) == pytest.approx(1.0, abs=1e-9)
    T = effective_temperature(energy_diagonal_state(H, 0.25), H)
    assert T == pytest.approx(2 * math.sqrt(10) / math.log(3), abs=1e-12)
    assert T == pytest.approx(5.757, abs=1e-3)
    with pytest.raises(StateValidationError):
        effective_temperature(GROUND_KET_STATE, H)


def test_entropy_production_examples(L, L0, rng):
    ss = steady_state(L)
    assert entropy_production_rate_D(ss.state, L, ss) == pytest.approx(0, abs=1e-12)
    for _ in range(20):
        s = random_state(rng)
        assert abs(entropy_production_rate_D(s, L0, ss)) < 1e-9
    vals = [entropy_production_rate_D(random_state(rng), L, ss) for _ in range(1000)]
    assert min(vals) >= -1e-8


def test_energy_current_examples(L):
    H, g = L.hamiltonian, L.generator
    assert energy_current_D(np.diag([0.2, 0.8]), H, g) == 0.0
    expected = -2 * GAMMA * 3 * H.rho_e.matrix[0, 1].real
    assert energy_current_D(H.rho_e, H, g) == pytest.approx(expected, abs=1e-12)
    # -4 * 0.474 with the coherence rounded to three decimals
    assert expected == pytest.approx(-4 * 0.474, abs=2e-3)
    assert energy_current_D(H.rho_e, H, DephasingGenerator(0.0)) == 0.0


def test_entropy_rate_examples(L):
    assert entropy_rate_S_D(np.eye(2) / 2, L) == pytest.approx(0, abs=1e-15)
    states = L.sample(GROUND_KET_STATE, 1e-3, 1e-2, 1000)
    assert min(entropy_rate_S_D(s, L) for s in states) >= -1e-8
    rho_e = L.hamiltonian.rho_e
    assert spectral_floor_active(rho_e)
    v = entropy_rate_S_D(rho_e, L)
    assert math.isfinite(v) and v > 1.0


def test_relative_entropy_contracts(L):
    states = L.sample(GROUND_KET_STATE, 0.0, 1e-2, 1001)
    mixed = QubitState.maximally_mixed()
    rel = np.array([relative_entropy(s, mixed) for s in states])
    assert np.all(np.diff(rel) <= 1e-8)
