import numpy as np
import pytest

from qrevdiff.errors import OutOfRangeError, ReferenceDegeneracyError
from qrevdiff.lindblad import LindbladModel, integrate_forward, lindblad_generator, lindblad_rhs
from qrevdiff.operators import HilbertSpace, pure_state, thermal_state, trace_distance
from qrevdiff.petz import (build_reference, integrate_reversed, recovery_error, reverse_model,
                           reversed_hamiltonian, reversed_lindblad_ops)
from qrevdiff.scenarios import get_scenario, lindblad_model, reference_state

from conftest import random_density, random_hermitian


def _oscillator(d):
    hs = HilbertSpace(d, "fock")
    a = hs.a()
    return hs, a, a.conj().T @ a


def _damped(d=20, n_th=0.5):
    hs, a, n = _oscillator(d)
    return hs, LindbladModel(n, [np.sqrt(1 + n_th) * a, np.sqrt(n_th) * a.conj().T])


def test_static_thermal_reference_has_zero_gdot():
    hs, a, n = _oscillator(12)
    g = thermal_state(n, 1.0)
    ref = build_reference(LindbladModel(n), g, 0.0, 0.2, 1e-3)
    assert np.max(np.abs(ref.G_dot)) <= 1e-8


def test_maximally_mixed_reference_of_unital_model(rng):
    d = 6
    H = random_hermitian(rng, d)
    L = random_hermitian(rng, d)          # Hermitian L is unital
    m = LindbladModel(H, [L])
    ref = build_reference(m, np.eye(d) / d, 0.0, 0.1, 1e-3)
    assert np.max(np.abs(ref.G_dot)) <= 1e-8
    Ht = reversed_hamiltonian(m, ref, 0.05)
    assert np.max(np.abs(Ht + H)) <= 1e-10
    (Lt,) = reversed_lindblad_ops(m, ref, 0.05)
    assert np.max(np.abs(Lt - L.conj().T)) <= 1e-10


def test_square_root_relation_along_reference():
    hs, m = _damped(16)
    g0 = reference_state(hs, {"beta": np.log(3.0)}, 0.8)
    ref = build_reference(m, g0, 0.0, 0.2, 1e-3)
    for k in range(0, len(ref.times), 50):
        assert np.linalg.norm(ref.G[k] @ ref.G[k] - ref.gamma[k]) <= 1e-8
    # interior finite-difference relation
    k = 7
    fd = (ref.G[k + 1] - ref.G[k - 1]) / (2 * ref.dt)
    assert np.max(np.abs(ref.G_dot[k] - fd)) <= 1e-12


def test_reference_degeneracy():
    hs, m = _damped(8)
    vac = np.zeros((8, 8), complex)
    vac[0, 0] = 1
    with pytest.raises(ReferenceDegeneracyError):
        build_reference(m, vac, 0.0, 0.1, 1e-3)


def test_thermal_reference_without_dissipation_reverses_hamiltonian():
    hs, a, n = _oscillator(12)
    m = LindbladModel(n + 0.1 * (a + a.conj().T) @ (a + a.conj().T) * 0)
    ref = build_reference(m, thermal_state(n, 1.0), 0.0, 0.2, 1e-3)
    assert np.max(np.abs(reversed_hamiltonian(m, ref, 0.1) + n)) <= 1e-8


def test_reversed_hamiltonian_is_hermitian_on_damped_reference():
    hs, m = _damped(16)
    g0 = reference_state(hs, {"beta": np.log(3.0)}, 0.8)
    ref = build_reference(m, g0, 0.0, 1.0, 1e-3)
    Ht = reversed_hamiltonian(m, ref, 0.5)
    assert np.max(np.abs(Ht - Ht.conj().T)) <= 1e-10 * np.linalg.norm(Ht)
    k = 500
    Ls = reversed_lindblad_ops(m, ref, ref.times[k])
    for L, Lt in zip(m.L(0.0), Ls):
        oracle = ref.G[k] @ L.conj().T @ ref.G_inv[k]
        assert np.max(np.abs(Lt - oracle)) <= 1e-10 * max(1.0, np.max(np.abs(oracle)))
    with pytest.raises(OutOfRangeError):
        reversed_hamiltonian(m, ref, 1.5)


def test_commuting_hermitian_jump_is_unchanged():
    hs, a, n = _oscillator(10)
    m = LindbladModel(n, [0.3 * n])
    ref = build_reference(m, thermal_state(n, 0.7), 0.0, 0.1, 1e-3)
    (Lt,) = reversed_lindblad_ops(m, ref, 0.05)
    assert np.max(np.abs(Lt - 0.3 * n)) <= 1e-9


def test_reversed_generator_is_trace_preserving(rng):
    hs, m = _damped(10)
    g0 = reference_state(hs, {"beta": 1.0}, 0.5)
    ref = build_reference(m, g0, 0.0, 0.1, 1e-3)
    rev = reverse_model(m, ref)
    H, Ls = rev.at(0.05)
    rho = random_density(rng, 10)
    r = lindblad_generator(H, Ls, rho, rev.hbar)
    assert abs(np.trace(r)) <= 1e-12 * max(1.0, np.linalg.norm(r))


def test_unitary_round_trip_recovers_pure_state():
    hs, a, n = _oscillator(24)
    m = LindbladModel(n)
    rho0 = pure_state(hs.gaussian_ket(1.0, 0.5))
    err = recovery_error(m, thermal_state(n, 1.0), rho0, 1.0, 1e-3)
    assert err <= 1e-6


def test_zero_duration_returns_input_exactly():
    hs, m = _damped(8)
    g0 = reference_state(hs, {"beta": 1.0}, 0.3)
    ref = build_reference(m, g0, 0.0, 0.1, 1e-3)
    rev = reverse_model(m, ref)
    out = integrate_reversed(rev, g0, 0.0, 0.0, 1e-3)
    assert np.array_equal(out.final, g0)
    assert recovery_error(m, g0, g0, 0.0, 1e-3) == 0.0


def test_reversed_trajectory_times_decrease():
    hs, m = _damped(10)
    g0 = reference_state(hs, {"beta": 1.0}, 0.3)
    ref = build_reference(m, g0, 0.0, 0.2, 1e-3)
    out = integrate_reversed(reverse_model(m, ref), ref.gamma[-1], 0.2, 0.0, 1e-3, stride=50)
    assert out.times[0] == pytest.approx(0.2) and out.times[-1] == pytest.approx(0.0)
    assert np.all(np.diff(out.times) < 0)


def test_reference_state_recovery_converges():
    hs, m = _damped(20)
    g0 = reference_state(hs, {"beta": np.log(3.0)}, 0.8)
    errs = [recovery_error(m, g0, g0, 0.5, dt) for dt in (2e-3, 1e-3)]
    assert errs[1] < errs[0]
    assert np.log2(errs[0] / errs[1]) >= 1.0


def test_generic_state_recovery_is_a_bounded_metric():
    hs, m = _damped(14)
    g0 = reference_state(hs, {"beta": 1.0}, 0.5)
    rho0 = pure_state(hs.gaussian_ket(0.5, 0.0))
    err = recovery_error(m, g0, rho0, 0.3, 1e-3)
    assert 0.0 <= err <= 1.0


def test_double_reversal_reproduces_forward_drift():
    # reversing the reversed model about γ̃_s = γ_{T-s} gives back the forward generator on γ
    hs, m = _damped(12)
    g0 = reference_state(hs, {"beta": 1.0}, 0.5)
    T, dt = 0.2, 1e-4
    ref = build_reference(m, g0, 0.0, T, dt)
    rev = reverse_model(m, ref)
    fwd_in_s = rev.in_reverse_time(T)
    ref2 = build_reference(fwd_in_s, ref.gamma[-1], 0.0, T, dt)
    rev2 = reverse_model(fwd_in_s, ref2)
    s = 0.1
    H2, L2 = rev2.at(s)
    t = T - s
    k = int(round(t / dt))
    g = ref.gamma[k]
    drift_twice = lindblad_generator(H2, L2, g, m.hbar)
    # the doubly reversed generator runs in t' = T - s = t; it is the forward one
    assert np.max(np.abs(drift_twice - lindblad_rhs(m, g))) <= 1e-4


def test_scenario_operators_are_usable_for_petz():
    sc = get_scenario("damped-harmonic-oscillator")
    params = dict(mass=1.0, omega=1.0, kappa=1.0, n_thermal=0.5, beta=np.log(3.0))
    hs = HilbertSpace(16, "fock")
    m = lindblad_model(sc.build(params), hs)
    g0 = reference_state(hs, params, 0.8)
    assert recovery_error(m, g0, g0, 0.2, 1e-3) <= 1e-6
