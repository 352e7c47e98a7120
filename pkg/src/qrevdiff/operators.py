"""Dense operator algebra on a truncated Hilbert space.

Operators are plain complex ``numpy`` arrays of shape ``(d, d)``.  Position
basis kets are sampled wavefunctions scaled by ``sqrt(dq)`` so that the
Euclidean norm is the L2 norm.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from . import events
from .errors import DomainError, NegativityError, ShapeError

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class HilbertSpace:
    """Truncated single-mode Hilbert space.

    Parameters
    ----------
    dim : int
        Number of basis states, at least 2.
    basis : {"position", "fock"}
        Uniform position grid (with spectral momentum) or truncated Fock basis.
    extent : float
        Half-width ``L`` of the position box ``[-L, L)``; ignored for Fock.
    mass, omega, hbar : float
        Oscillator parameters used by :meth:`a` and the Fock quadratures.
    """

    dim: int
    basis: str = "position"
    extent: float = 8.0
    mass: float = 1.0
    omega: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.dim}")
        if self.basis not in ("position", "fock"):
            raise ValueError(f"unknown basis kind {self.basis!r}")
        if self.basis == "position" and not self.extent > 0:
            raise ValueError("position basis needs a positive extent")
        for name in ("mass", "omega", "hbar"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def spacing(self) -> float:
        self._need_position()
        return 2.0 * self.extent / self.dim

    @property
    def x(self) -> np.ndarray:
        """Position grid points ``-L + j*dq``."""
        self._need_position()
        return -self.extent + self.spacing * np.arange(self.dim)

    def _need_position(self):
        if self.basis != "position":
            raise DomainError("operation requires the position basis")

    def q(self) -> np.ndarray:
        if self.basis == "position":
            return np.diag(self.x).astype(complex)
        a = self.a()
        return np.sqrt(self.hbar / (2 * self.mass * self.omega)) * (a + a.conj().T)

    def p(self) -> np.ndarray:
        if self.basis == "position":
            return -1j * self.hbar * spectral_derivative_matrix(self.dim, self.spacing)
        a = self.a()
        return 1j * np.sqrt(self.hbar * self.mass * self.omega / 2) * (a.conj().T - a)

    def a(self) -> np.ndarray:
        """Annihilation operator of the oscillator with the stored m, omega."""
        if self.basis == "fock":
            return np.diag(np.sqrt(np.arange(1, self.dim)), 1).astype(complex)
        mw = self.mass * self.omega
        return np.sqrt(mw / (2 * self.hbar)) * (self.q() + 1j * self.p() / mw)

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    def gaussian_ket(self, q0=0.0, p0=0.0, width=None) -> np.ndarray:
        """Normalized Gaussian wavepacket with centre (q0, p0).

        ``width`` is the position standard deviation times sqrt(2); the
        default ``sqrt(hbar/(m omega))`` gives a coherent state.
        """
        if width is None:
            width = np.sqrt(self.hbar / (self.mass * self.omega))
        if self.basis == "position":
            x = self.x
            psi = np.exp(-((x - q0) ** 2) / (2 * width**2) + 1j * p0 * x / self.hbar)
        else:
            # squeeze + displace the Fock vacuum
            a = self.a()
            ad = a.conj().T
            l0 = np.sqrt(self.hbar / (self.mass * self.omega))
            r = np.log(l0 / width)
            squeeze = expm(0.5 * r * (a @ a - ad @ ad))
            alpha = (q0 / l0 + 1j * p0 * l0 / self.hbar) / np.sqrt(2)
            disp = expm(alpha * ad - np.conj(alpha) * a)
            vac = np.zeros(self.dim, complex)
            vac[0] = 1.0
            psi = disp @ squeeze @ vac
        return psi / np.linalg.norm(psi)

    def interpolation_matrix(self, points) -> np.ndarray:
        """Rows of band-limited interpolation weights at arbitrary positions.

        ``interpolation_matrix(y) @ v`` evaluates the trigonometric interpolant
        of samples ``v`` (given on :attr:`x`) at ``y`` after removing their
        Nyquist component, consistent with the spectral momentum operator.
        """
        y = np.asarray(points, dtype=float).ravel()
        return periodic_sinc((y[:, None] - self.x[None, :]) / self.spacing, self.dim)


def periodic_sinc(u, n: int) -> np.ndarray:
    """Dirichlet kernel of the n-point periodic grid without the Nyquist mode.

    ``u`` is the offset in grid steps.  Summing the kernel against samples
    gives the trigonometric interpolant of the samples' Nyquist-free part,
    which is the same subspace the spectral momentum operator acts on.
    """
    u = np.asarray(u, dtype=float)
    den = n * np.sin(np.pi * u / n)
    num = np.sin(np.pi * u * (n - 1) / n)
    out = np.empty_like(u)
    small = np.abs(den) < 1e-12
    out[~small] = num[~small] / den[~small]
    # removable singularities at multiples of n
    k = np.round(u[small] / n)
    out[small] = (n - 1) / n * np.cos(np.pi * k * (n - 1)) * np.cos(np.pi * k)
    return out


def spectral_derivative_matrix(n: int, h: float) -> np.ndarray:
    """Dense periodic spectral first-derivative matrix (Nyquist mode dropped)."""
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    if n % 2 == 0:
        k[n // 2] = 0.0
    eye = np.eye(n)
    return np.fft.ifft(1j * k[:, None] * np.fft.fft(eye, axis=0), axis=0)


def _check_square_pair(A, B):
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise ShapeError(f"incompatible operator shapes {A.shape} and {B.shape}")
    return A, B


def commutator(A, B) -> np.ndarray:
    A, B = _check_square_pair(A, B)
    return A @ B - B @ A


def anticommutator(A, B) -> np.ndarray:
    A, B = _check_square_pair(A, B)
    return A @ B + B @ A


def dagger(A) -> np.ndarray:
    return np.asarray(A).conj().T


def is_hermitian(A, rtol: float = HERMITIAN_RTOL) -> bool:
    A = np.asarray(A)
    scale = np.linalg.norm(A)
    return bool(np.max(np.abs(A - A.conj().T), initial=0.0) <= rtol * max(scale, 1e-300))


def check_hermitian(A, rtol: float = HERMITIAN_RTOL, what: str = "operator") -> np.ndarray:
    """Return the Hermitian part of ``A`` after verifying it is Hermitian to ``rtol``."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"{what} must be a square matrix, got shape {A.shape}")
    if not is_hermitian(A, rtol):
        dev = np.max(np.abs(A - A.conj().T))
        raise DomainError(f"{what} is not Hermitian (max |A - A^dag| = {dev:.3e})")
    return 0.5 * (A + A.conj().T)


def check_density(rho, trace_tol: float = 1e-10, eig_tol: float = 1e-8, herm_rtol: float = 1e-10):
    """Validate a density operator and return its Hermitian part."""
    rho = check_hermitian(rho, herm_rtol, "density operator")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise DomainError(f"density operator has trace {tr!r}")
    lo = np.linalg.eigvalsh(rho)[0]
    if lo < -eig_tol:
        raise NegativityError(f"density operator has eigenvalue {lo:.3e}")
    return rho


def _clamped_eigh(A, floor: Optional[float]):
    A = check_hermitian(A)
    w, V = np.linalg.eigh(A)
    eps = floor if floor is not None else 1e-12 * max(np.max(np.abs(w)), 1e-300)
    if w[0] < -eps:
        raise NegativityError(f"eigenvalue {w[0]:.3e} below -floor {eps:.3e}")
    n_clamped = int(np.count_nonzero(w < eps))
    events.record("eigenvalue_clamp", n_clamped)
    return np.maximum(w, eps), V, n_clamped


def hermitian_sqrt(A, floor: Optional[float] = None) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues are clamped to ``[floor, inf)`` before the root; the default
    floor is ``1e-12`` times the largest eigenvalue magnitude.
    """
    w, V, _ = _clamped_eigh(A, floor)
    return (V * np.sqrt(w)) @ V.conj().T


def hermitian_inv(A, floor: Optional[float] = None) -> np.ndarray:
    """Inverse of a Hermitian PSD matrix with the same eigenvalue floor as :func:`hermitian_sqrt`."""
    w, V, _ = _clamped_eigh(A, floor)
    return (V / w) @ V.conj().T


def sqrt_and_inverse_sqrt(A, floor: Optional[float] = None):
    """Return ``(A^{1/2}, A^{-1/2}, n_clamped)`` from a single eigendecomposition."""
    w, V, n = _clamped_eigh(A, floor)
    r = np.sqrt(w)
    Vh = V.conj().T
    return (V * r) @ Vh, (V / r) @ Vh, n


def trace_distance(rho, sigma) -> float:
    rho, sigma = _check_square_pair(rho, sigma)
    diff = rho - sigma
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def expectation(rho, A) -> complex:
    rho, A = _check_square_pair(rho, A)
    return complex(np.einsum("ij,ji->", rho, A))


def pure_state(ket) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    ket = ket / np.linalg.norm(ket)
    return np.outer(ket, ket.conj())


def thermal_state(H, beta: float) -> np.ndarray:
    """Gibbs state ``exp(-beta H)/Z`` computed in the eigenbasis of ``H``."""
    w, V = np.linalg.eigh(check_hermitian(H))
    p = np.exp(-beta * (w - w[0]))
    p /= p.sum()
    return (V * p) @ V.conj().T
