"""Forward Lindblad dynamics with a fixed-step RK4 integrator."""

from dataclasses import dataclass, field
import math
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import IntegratorInstabilityError, ShapeError
from .operators import check_hermitian

OperatorLike = Union[np.ndarray, Callable[[float], np.ndarray]]


def _sample(op: OperatorLike, t: float) -> np.ndarray:
    return np.asarray(op(t) if callable(op) else op)


@dataclass
class LindbladModel:
    """Hamiltonian and jump operators, each constant or a callable of time.

    ``hamiltonian_symbol`` and ``jump_symbols`` optionally carry the
    ℏ-free phase-space symbols used by the semiclassical module.
    """

    hamiltonian: OperatorLike
    jump_ops: Sequence[OperatorLike] = ()
    hbar: float = 1.0
    hamiltonian_symbol: Optional[object] = None
    jump_symbols: Optional[Sequence[object]] = None

    def __post_init__(self):
        self.jump_ops = list(self.jump_ops)
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        if self.jump_symbols is not None and len(self.jump_symbols) != len(self.jump_ops):
            raise ValueError("jump_symbols must match jump_ops in length")
        H0 = self.H(0.0)
        if H0.ndim != 2 or H0.shape[0] != H0.shape[1]:
            raise ShapeError("Hamiltonian must be square")
        for L in self.L(0.0):
            if L.shape != H0.shape:
                raise ShapeError("jump operator shape differs from Hamiltonian")
        check_hermitian(H0, 1e-10, "Hamiltonian")

    @property
    def dim(self) -> int:
        return self.H(0.0).shape[0]

    def H(self, t: float) -> np.ndarray:
        return _sample(self.hamiltonian, t)

    def L(self, t: float) -> list:
        return [_sample(L, t) for L in self.jump_ops]


@dataclass
class StateTrajectory:
    times: np.ndarray
    states: np.ndarray
    dt: float
    scheme: str = "rk4"
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]


def lindblad_generator(H, Ls, rho, hbar):
    """−(i/ℏ)[H, ρ] + Σ (LρL† − ½{L†L, ρ})."""
    out = (-1j / hbar) * (H @ rho - rho @ H)
    for L in Ls:
        Ld = L.conj().T
        LdL = Ld @ L
        out = out + L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def lindblad_rhs(model: LindbladModel, rho, t: float = 0.0) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.shape != (model.dim, model.dim):
        raise ShapeError(f"state shape {rho.shape} does not match model dimension {model.dim}")
    return lindblad_generator(model.H(t), model.L(t), rho, model.hbar)


def step_count(t0: float, t1: float, dt: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not t1 >= t0:
        raise ValueError("t1 must not precede t0")
    return max(int(math.ceil((t1 - t0) / dt - 1e-9)), 0)


def rk4_integrate(rhs, y0, t0, t1, dt, stride=1, post=None, monitor=None):
    """Classical RK4 from ``t0`` to ``t1``.

    The step is shrunk slightly if needed so the last step lands on ``t1``.
    ``post`` is applied to the state after each step (e.g. Hermitization);
    ``monitor(k, t, y)`` is called on every stored state.
    Returns ``(times, states, dt_used)``.
    """
    n = step_count(t0, t1, dt)
    h = (t1 - t0) / n if n else dt
    y = np.array(y0, copy=True)
    times = [t0]
    states = [y.copy()]
    if monitor is not None:
        monitor(0, t0, y)
    for k in range(1, n + 1):
        t = t0 + (k - 1) * h
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if post is not None:
            y = post(y)
        if k % stride == 0 or k == n:
            tk = t0 + k * h
            if monitor is not None:
                monitor(k, tk, y)
            times.append(tk)
            states.append(y.copy())
    return np.array(times), np.array(states), h


def hermitize(rho):
    return 0.5 * (rho + rho.conj().T)


def positivity_monitor(dt, tol=1e-8):
    def check(k, t, rho):
        lo = np.linalg.eigvalsh(rho)[0]
        if not np.isfinite(lo) or lo < -tol:
            raise IntegratorInstabilityError(
                f"state lost positivity at t={t:.6g} (min eigenvalue {lo:.3e}); try dt={dt / 2:.3g}",
                suggested_dt=dt / 2,
            )

    return check


def integrate_forward(model: LindbladModel, rho0, t0: float, t1: float, dt: float,
                      stride: int = 1, positivity_tol: float = 1e-8) -> StateTrajectory:
    """Integrate the Lindblad equation with RK4 and per-step Hermitization."""
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (model.dim, model.dim):
        raise ShapeError("initial state does not match model dimension")
    times, states, h = rk4_integrate(
        lambda t, r: lindblad_rhs(model, r, t),
        hermitize(rho0), t0, t1, dt, stride,
        post=hermitize, monitor=positivity_monitor(dt, positivity_tol),
    )
    return StateTrajectory(times, states, h)
