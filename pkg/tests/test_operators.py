import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qrevdiff import events
from qrevdiff.errors import DomainError, NegativityError, ShapeError
from qrevdiff.operators import (HilbertSpace, anticommutator, check_density, commutator, hermitian_inv,
                                hermitian_sqrt, periodic_sinc, pure_state, sqrt_and_inverse_sqrt,
                                thermal_state, trace_distance)

from conftest import random_density, random_hermitian, random_unitary


def test_hilbert_space_validation():
    with pytest.raises(ValueError):
        HilbertSpace(1)
    with pytest.raises(ValueError):
        HilbertSpace(8, "position", extent=0.0)
    with pytest.raises(ValueError):
        HilbertSpace(8, "momentum")
    with pytest.raises(DomainError):
        HilbertSpace(8, "fock").x


def test_commutator_with_identity_and_self(rng):
    A = random_hermitian(rng, 6)
    I = np.eye(6)
    assert np.allclose(commutator(I, A), 0)
    assert np.allclose(commutator(A, A), 0)


def test_commutator_shape_error():
    with pytest.raises(ShapeError):
        commutator(np.eye(2), np.eye(3))
    with pytest.raises(ShapeError):
        anticommutator(np.eye(2), np.ones((2, 3)))


def test_canonical_commutator_on_interior_states():
    # the truncated [q, p] equals iħ on smooth states supported away from the edges
    hs = HilbertSpace(40, "position", 8.0)
    q, p = hs.q(), hs.p()
    C = commutator(q, p)
    for q0 in (-1.0, 0.0, 1.5):
        psi = hs.gaussian_ket(q0, 0.3)
        assert np.max(np.abs(C @ psi - 1j * hs.hbar * psi)) <= 1e-6


def test_anticommutator_examples(rng):
    A = random_hermitian(rng, 4)
    assert np.allclose(anticommutator(np.eye(4), A), 2 * A)
    assert np.allclose(anticommutator(A, np.zeros((4, 4))), 0)
    assert np.allclose(anticommutator(np.diag([1, 2]), np.diag([3, 4])), np.diag([6, 16]))


def test_hermitian_sqrt_examples(rng):
    assert np.allclose(hermitian_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    assert np.allclose(hermitian_sqrt(np.eye(3)), np.eye(3))
    B = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    A = B @ B.conj().T
    S = hermitian_sqrt(A)
    assert np.linalg.norm(S @ S - A) <= 1e-10 * np.linalg.norm(A)
    assert np.allclose(S, S.conj().T)


def test_hermitian_sqrt_errors():
    with pytest.raises(DomainError):
        hermitian_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NegativityError):
        hermitian_sqrt(np.diag([1.0, -0.5]))


def test_hermitian_inv_examples():
    assert np.allclose(hermitian_inv(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    assert np.allclose(hermitian_inv(np.eye(3)), np.eye(3))
    hs = HilbertSpace(20, "fock")
    a = hs.a()
    th = thermal_state(a.conj().T @ a, 1.0)
    assert np.max(np.abs(th @ hermitian_inv(th) - np.eye(20))) <= 1e-8


def test_clamping_is_recorded():
    with events.collect() as counts:
        w = hermitian_sqrt(np.diag([1.0, 1e-20, 0.0]))
    assert counts["eigenvalue_clamp"] == 2
    assert np.all(np.isfinite(w))
    s, si, n = sqrt_and_inverse_sqrt(np.diag([4.0, 1.0]))
    assert n == 0 and np.allclose(s @ si, np.eye(2))


def test_trace_distance_examples():
    rho = np.diag([0.3, 0.7]).astype(complex)
    assert trace_distance(rho, rho) == 0.0
    e0, e1 = np.array([1, 0]), np.array([0, 1])
    assert trace_distance(pure_state(e0), pure_state(e1)) == pytest.approx(1.0)
    assert trace_distance(pure_state(e0), np.eye(2) / 2) == pytest.approx(0.5)


def test_check_density():
    with pytest.raises(DomainError):
        check_density(np.eye(2))
    with pytest.raises(NegativityError):
        check_density(np.diag([1.5, -0.5]))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=16), st.integers(min_value=0, max_value=2**31))
def test_functions_commute_with_unitary_conjugation(d, seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    A = B @ B.conj().T + 0.1 * np.eye(d)
    U = random_unitary(rng, d)
    for f in (hermitian_sqrt, hermitian_inv):
        lhs = f(U @ A @ U.conj().T)
        rhs = U @ f(A) @ U.conj().T
        assert np.max(np.abs(lhs - rhs)) <= 1e-8 * max(1.0, np.max(np.abs(rhs)))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=8), st.integers(min_value=0, max_value=2**31))
def test_trace_distance_triangle_inequality(d, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_density(rng, d) for _ in range(3))
    assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-12
    assert 0.0 <= trace_distance(a, b) <= 1.0 + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=10), st.integers(min_value=0, max_value=2**31))
def test_commutator_of_hermitians_is_antihermitian(d, seed):
    rng = np.random.default_rng(seed)
    C = commutator(random_hermitian(rng, d), random_hermitian(rng, d))
    assert np.max(np.abs(C + C.conj().T)) <= 1e-12 * np.linalg.norm(C)


def test_fock_quadratures_and_coherent_state():
    hs = HilbertSpace(40, "fock")
    psi = hs.gaussian_ket(1.0, -0.5)
    q, p = hs.q(), hs.p()
    assert np.vdot(psi, q @ psi).real == pytest.approx(1.0, abs=1e-8)
    assert np.vdot(psi, p @ psi).real == pytest.approx(-0.5, abs=1e-8)


def test_periodic_sinc_is_cardinal():
    n = 16
    u = np.arange(-n, n + 1, dtype=float)
    k = periodic_sinc(u, n)
    # Nyquist-free kernel: value (n-1)/n at multiples of n, small elsewhere at integers
    assert k[n] == pytest.approx((n - 1) / n)
    off = np.delete(k, [0, n, 2 * n])
    assert np.max(np.abs(off)) <= 1.0 / n + 1e-12
