import numpy as np
import pytest

from qrevdiff.errors import IntegratorInstabilityError, ShapeError
from qrevdiff.lindblad import LindbladModel, integrate_forward, lindblad_rhs, step_count
from qrevdiff.operators import HilbertSpace, pure_state, trace_distance
from qrevdiff.scenarios import reference_state

from conftest import random_density, random_hermitian


def _damped_fock(d=30, kappa=1.0):
    hs = HilbertSpace(d, "fock")
    a = hs.a()
    H = a.conj().T @ a
    return hs, LindbladModel(H, [np.sqrt(kappa) * a])


def test_zero_model_gives_zero_rhs():
    rho = np.diag([0.25, 0.75]).astype(complex)
    m = LindbladModel(np.zeros((2, 2)), [np.zeros((2, 2))])
    assert np.array_equal(lindblad_rhs(m, rho), np.zeros((2, 2)))


def test_qubit_decay_rhs():
    sm = np.array([[0, 1], [0, 0]], complex)   # |1> -> |0>
    m = LindbladModel(np.zeros((2, 2)), [sm])
    rho = np.diag([0.0, 1.0]).astype(complex)
    assert np.allclose(lindblad_rhs(m, rho), np.diag([1.0, -1.0]))


def test_rhs_is_traceless_and_hermitian(rng):
    d = 7
    H = random_hermitian(rng, d)
    Ls = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(2)]
    m = LindbladModel(H, Ls, hbar=0.7)
    rho = random_density(rng, d)
    r = lindblad_rhs(m, rho)
    assert abs(np.trace(r)) <= 1e-12 * max(1.0, np.linalg.norm(r))
    assert np.max(np.abs(r - r.conj().T)) <= 1e-12 * np.linalg.norm(r)


def test_rhs_shape_mismatch():
    m = LindbladModel(np.eye(3), [])
    with pytest.raises(ShapeError):
        lindblad_rhs(m, np.eye(2) / 2)
    with pytest.raises(ShapeError):
        LindbladModel(np.eye(3), [np.eye(2)])


def test_model_requires_hermitian_hamiltonian():
    with pytest.raises(Exception):
        LindbladModel(np.array([[0, 1], [0, 0]], complex))


def test_harmonic_oscillation_of_position():
    hs = HilbertSpace(40, "fock")
    a = hs.a()
    m = LindbladModel(a.conj().T @ a + 0.5 * np.eye(40))
    rho0 = pure_state(hs.gaussian_ket(1.0, 0.0))
    q = hs.q()
    T = 2 * np.pi
    traj = integrate_forward(m, rho0, 0.0, T, 1e-3, stride=500)
    q0 = np.trace(q @ rho0).real
    for t, rho in zip(traj.times, traj.states):
        expected = np.cos(t) * q0
        assert abs(np.trace(q @ rho).real - expected) <= 1e-6 * abs(q0)


def test_damped_amplitude_decay():
    hs, m = _damped_fock(30)
    a = hs.a()
    rho0 = pure_state(hs.gaussian_ket(1.0, 0.5))
    traj = integrate_forward(m, rho0, 0.0, 2.0, 1e-3, stride=250)
    A0 = abs(np.trace(a @ rho0))
    for t, rho in zip(traj.times, traj.states):
        assert abs(abs(np.trace(a @ rho)) - A0 * np.exp(-t / 2)) <= 1e-5


def test_vacuum_is_stationary():
    hs, m = _damped_fock(20)
    vac = np.zeros((20, 20), complex)
    vac[0, 0] = 1
    assert np.max(np.abs(lindblad_rhs(m, vac))) <= 1e-14
    out = integrate_forward(m, vac, 0.0, 1.0, 1e-3, stride=10**6).final
    assert trace_distance(out, vac) <= 1e-8


def test_trace_drift_and_positivity():
    hs, m = _damped_fock(25)
    rho0 = pure_state(hs.gaussian_ket(1.2, -0.4))
    traj = integrate_forward(m, rho0, 0.0, 1.0, 1e-3, stride=100)
    for rho in traj.states:
        assert abs(np.trace(rho).real - 1) <= 1e-10
        assert np.linalg.eigvalsh(rho)[0] >= -1e-8
    assert np.all(np.diff(traj.times) > 0)
    assert traj.dt == pytest.approx(1e-3)


def test_rk4_convergence_order():
    hs, m = _damped_fock(20)
    # full rank, so coarse steps do not trip the positivity monitor
    rho0 = reference_state(hs, {"beta": 1.0}, 0.7)
    ref = integrate_forward(m, rho0, 0.0, 1.0, 0.00125, stride=10**6).final
    errs = []
    for dt in (0.04, 0.02, 0.01):
        out = integrate_forward(m, rho0, 0.0, 1.0, dt, stride=10**6).final
        errs.append(np.linalg.norm(out - ref))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.5)


def test_time_dependent_hamiltonian():
    # H(t) = cos(t) σx: the exact propagator is exp(-i sin(t) σx)
    sx = np.array([[0, 1], [1, 0]], complex)
    m = LindbladModel(lambda t: np.cos(t) * sx)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    out = integrate_forward(m, rho0, 0.0, 1.0, 1e-3, stride=10**6).final
    assert out[1, 1].real == pytest.approx(np.sin(np.sin(1.0)) ** 2, abs=1e-9)


def test_instability_error_suggests_smaller_step():
    hs, m = _damped_fock(30, kappa=40.0)
    rho0 = pure_state(hs.gaussian_ket(2.0, 0.0))
    with pytest.raises(IntegratorInstabilityError) as info:
        integrate_forward(m, rho0, 0.0, 0.5, 0.1)
    assert info.value.suggested_dt == pytest.approx(0.05)


def test_step_count_validation():
    assert step_count(0.0, 1.0, 0.1) == 10
    with pytest.raises(ValueError):
        step_count(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        step_count(1.0, 0.0, 0.1)
