"""Petz-reversed Lindblad dynamics relative to an evolving reference state.

Given a forward model and a full-rank reference trajectory γ_t with
G_t = γ_t^{1/2}, the reversed generator has

    H̃ = −(X + X†)/2,   X = G H G⁻¹ + iℏ Ġ G⁻¹ + (iℏ/2) Σ G L†L G⁻¹,
    L̃ = G L† G⁻¹,

and is integrated in the increasing reverse time s = T − t.
"""

from dataclasses import dataclass
import logging
from typing import Optional

import numpy as np

from .errors import OutOfRangeError, ReferenceDegeneracyError, ShapeError
from .lindblad import (LindbladModel, StateTrajectory, hermitize, integrate_forward,
                       lindblad_generator, positivity_monitor, rk4_integrate)
from .operators import check_density, sqrt_and_inverse_sqrt, trace_distance

logger = logging.getLogger("qrevdiff")


@dataclass
class ReferenceTrajectory:
    times: np.ndarray
    gamma: np.ndarray
    G: np.ndarray
    G_inv: np.ndarray
    G_dot: np.ndarray
    dt: float
    clamp_events: int = 0

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])


def _time_derivative(series: np.ndarray, dt: float) -> np.ndarray:
    """Central differences inside, second-order one-sided differences at the ends."""
    n = len(series)
    out = np.empty_like(series)
    if n == 1:
        out[0] = 0.0
        return out
    if n == 2:
        out[:] = (series[1] - series[0]) / dt
        return out
    out[1:-1] = (series[2:] - series[:-2]) / (2 * dt)
    out[0] = (-3 * series[0] + 4 * series[1] - series[2]) / (2 * dt)
    out[-1] = (3 * series[-1] - 4 * series[-2] + series[-3]) / (2 * dt)
    return out


def build_reference(model: LindbladModel, gamma0, t0: float, t1: float, dt: float,
                    floor: Optional[float] = None) -> ReferenceTrajectory:
    """Forward-integrate γ densely and cache G = γ^{1/2}, G⁻¹ and Ġ.

    ``floor`` is the absolute eigenvalue floor; the default is ``1e-12``
    times the largest eigenvalue of each γ_t.  The initial state must
    exceed the floor; later states are clamped and the clamps counted.
    """
    gamma0 = check_density(gamma0)
    w0 = np.linalg.eigvalsh(gamma0)
    eps0 = floor if floor is not None else 1e-12 * w0[-1]
    if w0[0] <= eps0:
        raise ReferenceDegeneracyError(
            f"reference state is rank deficient: smallest eigenvalue {w0[0]:.3e} <= floor {eps0:.3e}")
    traj = integrate_forward(model, gamma0, t0, t1, dt, stride=1)
    G = np.empty_like(traj.states)
    G_inv = np.empty_like(traj.states)
    clamps = 0
    for k, g in enumerate(traj.states):
        G[k], G_inv[k], n = sqrt_and_inverse_sqrt(g, floor)
        clamps += n
    if clamps:
        logger.warning("reference trajectory: %d eigenvalues clamped to the floor", clamps)
    G_dot = _time_derivative(G, traj.dt)
    return ReferenceTrajectory(traj.times, traj.states, G, G_inv, G_dot, traj.dt, clamps)


def _locate(ref: ReferenceTrajectory, t: float):
    """Index ``k`` and weight ``w`` with t = (1−w)·t_k + w·t_{k+1}."""
    tol = 1e-9 * max(1.0, abs(ref.t1))
    if t < ref.t0 - tol or t > ref.t1 + tol:
        raise OutOfRangeError(f"t={t} outside reference range [{ref.t0}, {ref.t1}]")
    n = len(ref.times)
    if n == 1:
        return 0, 0.0
    x = (t - ref.t0) / ref.dt
    k = int(np.clip(np.floor(x), 0, n - 2))
    w = float(np.clip(x - k, 0.0, 1.0))
    return k, w


def _reversed_at_index(model: LindbladModel, ref: ReferenceTrajectory, k: int):
    t = float(ref.times[k])
    G, Gi, Gd = ref.G[k], ref.G_inv[k], ref.G_dot[k]
    H = model.H(t)
    Ls = model.L(t)
    hbar = model.hbar
    LdL = sum((L.conj().T @ L for L in Ls), np.zeros_like(H))
    X = G @ H @ Gi + 1j * hbar * (Gd @ Gi) + 0.5j * hbar * (G @ LdL @ Gi)
    H_t = -0.5 * (X + X.conj().T)
    L_t = [G @ L.conj().T @ Gi for L in Ls]
    return H_t, L_t


def _interp(a, b, w):
    return a if w == 0.0 else (1 - w) * a + w * b


def reversed_hamiltonian(model: LindbladModel, ref: ReferenceTrajectory, t: float) -> np.ndarray:
    k, w = _locate(ref, t)
    Ha, _ = _reversed_at_index(model, ref, k)
    if w == 0.0:
        return Ha
    Hb, _ = _reversed_at_index(model, ref, k + 1)
    return _interp(Ha, Hb, w)


def reversed_lindblad_ops(model: LindbladModel, ref: ReferenceTrajectory, t: float) -> list:
    k, w = _locate(ref, t)
    _, La = _reversed_at_index(model, ref, k)
    if w == 0.0:
        return La
    _, Lb = _reversed_at_index(model, ref, k + 1)
    return [_interp(a, b, w) for a, b in zip(La, Lb)]


@dataclass
class ReversedModel:
    """Reversed operators materialized on the reference time grid."""

    times: np.ndarray
    H: np.ndarray          # (n, d, d)
    L: np.ndarray          # (n, m, d, d)
    hbar: float
    dt: float

    def at(self, t: float):
        tol = 1e-9 * max(1.0, abs(self.times[-1]))
        if t < self.times[0] - tol or t > self.times[-1] + tol:
            raise OutOfRangeError(f"t={t} outside reversed-model range")
        n = len(self.times)
        if n == 1:
            return self.H[0], list(self.L[0])
        x = (t - self.times[0]) / self.dt
        k = int(np.clip(np.floor(x), 0, n - 2))
        w = float(np.clip(x - k, 0.0, 1.0))
        return _interp(self.H[k], self.H[k + 1], w), list(_interp(self.L[k], self.L[k + 1], w))

    def in_reverse_time(self, T: float) -> LindbladModel:
        """Forward model in s = T − t, usable by :func:`integrate_forward`."""
        return LindbladModel(
            hamiltonian=lambda s: self.at(T - s)[0],
            jump_ops=[(lambda s, a=a: self.at(T - s)[1][a]) for a in range(self.L.shape[1])],
            hbar=self.hbar,
        )


def reverse_model(model: LindbladModel, ref: ReferenceTrajectory) -> ReversedModel:
    n = len(ref.times)
    d = model.dim
    m = len(model.jump_ops)
    H = np.empty((n, d, d), complex)
    L = np.empty((n, m, d, d), complex)
    for k in range(n):
        H[k], Ls = _reversed_at_index(model, ref, k)
        for a, Lk in enumerate(Ls):
            L[k, a] = Lk
    return ReversedModel(ref.times.copy(), H, L, model.hbar, ref.dt)


def integrate_reversed(reversed_model: ReversedModel, rho_T, T: float, t0: float, dt: float,
                       stride: int = 1, positivity_tol: float = 1e-8) -> StateTrajectory:
    """Integrate dρ/ds = L̃_{T−s}(ρ) for s ∈ [0, T − t0]; times are returned as t = T − s."""
    rho_T = np.asarray(rho_T, dtype=complex)
    if rho_T.shape != reversed_model.H.shape[1:]:
        raise ShapeError("state does not match reversed model dimension")

    def rhs(s, rho):
        H, Ls = reversed_model.at(T - s)
        return lindblad_generator(H, Ls, rho, reversed_model.hbar)

    if T == t0:
        return StateTrajectory(np.array([T]), rho_T[None].copy(), dt, meta={"direction": "reverse"})
    s_times, states, h = rk4_integrate(rhs, hermitize(rho_T), 0.0, T - t0, dt, stride,
                                       post=hermitize, monitor=positivity_monitor(dt, positivity_tol))
    return StateTrajectory(T - s_times, states, h, meta={"direction": "reverse"})


def recovery_error(model: LindbladModel, gamma0, rho0, T: float, dt: float, t0: float = 0.0,
                   floor: Optional[float] = None) -> float:
    """Trace distance between ρ0 and its forward-then-Petz-reversed image.

    The reversal uses the reference trajectory started from ``gamma0``.
    """
    rho0 = check_density(rho0)
    if T == 0:
        return 0.0
    ref = build_reference(model, gamma0, t0, t0 + T, dt, floor)
    rev = reverse_model(model, ref)
    rho_T = integrate_forward(model, rho0, t0, t0 + T, dt, stride=10**9).final
    back = integrate_reversed(rev, rho_T, t0 + T, t0, dt, stride=10**9).final
    return trace_distance(rho0, back)
