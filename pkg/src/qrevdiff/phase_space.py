"""Phase-space grids, fields, Wigner/Weyl transforms and the truncated Moyal product."""

from dataclasses import dataclass
import json
from numbers import Number
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import GridMismatchError, ResolutionError
from .operators import HilbertSpace
from .symbols import Jet, Symbol


def _is_pow2(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform (Q, P) grid; the upper end of each range is excluded."""

    q_range: tuple
    p_range: tuple
    n_q: int
    n_p: int
    hbar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "q_range", tuple(float(v) for v in self.q_range))
        object.__setattr__(self, "p_range", tuple(float(v) for v in self.p_range))
        if not (_is_pow2(self.n_q) and _is_pow2(self.n_p)):
            raise ValueError("grid point counts must be powers of two")
        if not (self.q_range[1] > self.q_range[0] and self.p_range[1] > self.p_range[0]):
            raise ValueError("grid ranges must be increasing")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")

    N = 1

    @classmethod
    def symmetric(cls, q_extent, p_extent, n_q, n_p=None, hbar=1.0) -> "PhaseGrid":
        return cls((-q_extent, q_extent), (-p_extent, p_extent), n_q, n_p or n_q, hbar)

    @classmethod
    def dual_to(cls, space: HilbertSpace) -> "PhaseGrid":
        """Grid on which Weyl quantization of ``space`` is an exact quadrature."""
        h = space.spacing
        pmax = np.pi * space.hbar / h
        return cls((-space.extent, space.extent), (-pmax, pmax), 2 * space.dim, 2 * space.dim, space.hbar)

    @property
    def dq(self) -> float:
        return (self.q_range[1] - self.q_range[0]) / self.n_q

    @property
    def dp(self) -> float:
        return (self.p_range[1] - self.p_range[0]) / self.n_p

    @property
    def q(self) -> np.ndarray:
        return self.q_range[0] + self.dq * np.arange(self.n_q)

    @property
    def p(self) -> np.ndarray:
        return self.p_range[0] + self.dp * np.arange(self.n_p)

    @property
    def shape(self):
        return (self.n_q, self.n_p)

    @property
    def cell_area(self) -> float:
        return self.dq * self.dp

    def mesh(self):
        return np.meshgrid(self.q, self.p, indexing="ij")

    def with_hbar(self, hbar: float) -> "PhaseGrid":
        return PhaseGrid(self.q_range, self.p_range, self.n_q, self.n_p, hbar)

    def to_dict(self) -> dict:
        return {"q_range": list(self.q_range), "p_range": list(self.p_range),
                "n_q": self.n_q, "n_p": self.n_p, "hbar": self.hbar}


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a real or complex function on a :class:`PhaseGrid`."""

    values: np.ndarray
    grid: PhaseGrid

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise GridMismatchError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    def real(self) -> "Field":
        return Field(self.values.real.copy(), self.grid)

    def imag_ratio(self) -> float:
        """max|Im| / max|Re|, the reality diagnostic."""
        re = np.max(np.abs(self.values.real))
        return float(np.max(np.abs(np.imag(self.values))) / max(re, 1e-300))

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        if isinstance(other, (Number, np.ndarray)):
            return other
        return NotImplemented

    def __add__(self, other):
        o = self._other(other)
        return NotImplemented if o is NotImplemented else Field(self.values + o, self.grid)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._other(other)
        return NotImplemented if o is NotImplemented else Field(self.values - o, self.grid)

    def __rsub__(self, other):
        o = self._other(other)
        return NotImplemented if o is NotImplemented else Field(o - self.values, self.grid)

    def __mul__(self, other):
        o = self._other(other)
        return NotImplemented if o is NotImplemented else Field(self.values * o, self.grid)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._other(other)
        return NotImplemented if o is NotImplemented else Field(self.values / o, self.grid)

    def __neg__(self):
        return Field(-self.values, self.grid)


FieldLike = Union[Field, Symbol, Number]


# ---------------------------------------------------------------------------
# Wigner transform and Weyl quantization (position basis, N = 1)

def _check_wigner_grid(space: HilbertSpace, grid: PhaseGrid):
    if space.basis != "position":
        raise GridMismatchError("Wigner transform needs a position-basis operator")
    L = space.extent
    tol = 1e-9 * space.spacing
    if grid.q[0] < -L - tol or grid.q[-1] > L + tol:
        raise GridMismatchError(
            f"grid Q range [{grid.q[0]}, {grid.q[-1]}] exceeds the Hilbert box [{-L}, {L})")
    if abs(grid.hbar - space.hbar) > 1e-12 * space.hbar:
        raise GridMismatchError("grid and Hilbert space use different hbar")


def wigner_transform(A, space: HilbertSpace, grid: PhaseGrid, chunk: int = 2_000_000) -> Field:
    """Weyl symbol ∫dσ ⟨Q+σ/2|A|Q−σ/2⟩ e^{−iPσ/ℏ} of a position-basis matrix.

    The kernel is evaluated with the band-limited interpolant on the lattice
    σ_m = m·Δq (|m| ≤ d), set to zero outside the Hilbert domain, and
    Fourier transformed onto the requested P points.  For a density matrix the
    result is the Wigner function normalized so that its phase-space trace is 1.
    Hermitian input gives a complex array whose imaginary part is roundoff;
    use ``.real()`` to drop it.
    """
    A = np.asarray(A, dtype=complex)
    d = space.dim
    if A.shape != (d, d):
        raise GridMismatchError(f"operator shape {A.shape} does not match Hilbert dimension {d}")
    _check_wigner_grid(space, grid)
    h = space.spacing
    x = space.x
    m = np.arange(-d, d + 1)
    sigma = m * h
    kernel_to_P = h * np.exp(-1j * np.outer(sigma, grid.p) / space.hbar)
    Ah = A / h
    out = np.empty((grid.n_q, grid.n_p), complex)
    rows = max(1, chunk // (len(m) * d))
    for start in range(0, grid.n_q, rows):
        Q = grid.q[start: start + rows]
        a = (Q[:, None] + 0.5 * sigma[None, :]).ravel()
        b = (Q[:, None] - 0.5 * sigma[None, :]).ravel()
        Sa = space.interpolation_matrix(a)
        Sb = space.interpolation_matrix(b)
        K = np.einsum("ij,ij->i", Sa @ Ah, Sb)
        inside = (a >= x[0] - 1e-12) & (a <= x[-1] + 1e-12) & (b >= x[0] - 1e-12) & (b <= x[-1] + 1e-12)
        K = np.where(inside, K, 0.0).reshape(len(Q), len(m))
        out[start: start + len(Q)] = K @ kernel_to_P
    return Field(out, grid)


def wigner_function(rho, space: HilbertSpace, grid: PhaseGrid) -> Field:
    """Real Wigner function of a density matrix (imaginary roundoff dropped)."""
    return wigner_transform(rho, space, grid).real()


def nyquist_fraction(values: np.ndarray, axis: int = 1) -> float:
    """Share of spectral energy in the Nyquist bin along ``axis``."""
    F = np.fft.fft(values, axis=axis)
    energy = np.abs(F) ** 2
    total = energy.sum()
    if total == 0:
        return 0.0
    n = values.shape[axis]
    nyq = np.take(energy, n // 2, axis=axis).sum()
    return float(nyq / total)


def weyl_quantize(f: Field, space: HilbertSpace, tol: float = 1e-6) -> np.ndarray:
    """Operator whose Weyl symbol is ``f`` (inverse Wigner transform).

    Ô_jk = (Δq/2πℏ) Σ_l ΔP f((x_j + x_k)/2, P_l) e^{iP_l(x_j − x_k)/ℏ}.
    Midpoints are taken from the grid directly when it contains them and by
    cubic-spline interpolation along Q otherwise.
    """
    grid = f.grid
    if space.basis != "position":
        raise GridMismatchError("Weyl quantization needs a position basis")
    if abs(grid.hbar - space.hbar) > 1e-12 * space.hbar:
        raise GridMismatchError("grid and Hilbert space use different hbar")
    frac = nyquist_fraction(f.values, axis=1)
    if frac > tol:
        raise ResolutionError(f"field is aliased along P (Nyquist energy fraction {frac:.2e})")
    d = space.dim
    h = space.spacing
    x = space.x
    mids = x[0] + 0.5 * h * np.arange(2 * d - 1)
    idx = (mids - grid.q_range[0]) / grid.dq
    on_grid = np.allclose(idx, np.round(idx), atol=1e-9) and idx.min() >= -1e-9 and np.round(idx).max() < grid.n_q
    if on_grid:
        F = f.values[np.round(idx).astype(int)]
    else:
        spline = CubicSpline(grid.q, f.values, axis=0, extrapolate=False)
        F = np.nan_to_num(spline(mids), nan=0.0)
    delta = np.arange(-(d - 1), d) * h
    phase = np.exp(1j * np.outer(grid.p, delta) / space.hbar)
    Gm = (h * grid.dp / (2 * np.pi * space.hbar)) * (F @ phase)   # (2d-1 midpoints, 2d-1 offsets)
    j, k = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    return Gm[j + k, (j - k) + (d - 1)]


# ---------------------------------------------------------------------------
# derivatives

_AXES = {0: 0, 1: 1, "Q": 0, "P": 1, "q": 0, "p": 1}


def _axis(axis) -> int:
    try:
        return _AXES[axis]
    except (KeyError, TypeError):
        raise ValueError(f"unknown axis {axis!r}; use 'Q' or 'P'") from None


def _wavenumbers(n, h, power):
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    mult = (1j * k) ** power
    if power % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0
    return mult


def _fd4_first(u, h, axis):
    u = np.moveaxis(u, axis, 0)
    out = np.empty_like(u)
    out[2:-2] = (u[:-4] - 8 * u[1:-3] + 8 * u[3:-1] - u[4:]) / (12 * h)
    out[0] = (-25 * u[0] + 48 * u[1] - 36 * u[2] + 16 * u[3] - 3 * u[4]) / (12 * h)
    out[1] = (-3 * u[0] - 10 * u[1] + 18 * u[2] - 6 * u[3] + u[4]) / (12 * h)
    out[-1] = -(-25 * u[-1] + 48 * u[-2] - 36 * u[-3] + 16 * u[-4] - 3 * u[-5]) / (12 * h)
    out[-2] = -(-3 * u[-1] - 10 * u[-2] + 18 * u[-3] - 6 * u[-4] + u[-5]) / (12 * h)
    return np.moveaxis(out, 0, axis)


def _fd4_second(u, h, axis):
    u = np.moveaxis(u, axis, 0)
    out = np.empty_like(u)
    out[2:-2] = (-u[:-4] + 16 * u[1:-3] - 30 * u[2:-2] + 16 * u[3:-1] - u[4:]) / (12 * h * h)
    out[0] = (45 * u[0] - 154 * u[1] + 214 * u[2] - 156 * u[3] + 61 * u[4] - 10 * u[5]) / (12 * h * h)
    out[1] = (10 * u[0] - 15 * u[1] - 4 * u[2] + 14 * u[3] - 6 * u[4] + u[5]) / (12 * h * h)
    out[-1] = (45 * u[-1] - 154 * u[-2] + 214 * u[-3] - 156 * u[-4] + 61 * u[-5] - 10 * u[-6]) / (12 * h * h)
    out[-2] = (10 * u[-1] - 15 * u[-2] - 4 * u[-3] + 14 * u[-4] - 6 * u[-5] + u[-6]) / (12 * h * h)
    return np.moveaxis(out, 0, axis)


def _fd4(u, h, axis, order):
    if order == 0:
        return u
    if order == 1:
        return _fd4_first(u, h, axis)
    if order == 2:
        return _fd4_second(u, h, axis)
    return _fd4_first(_fd4(u, h, axis, order - 1), h, axis)


def grid_derivative(values: np.ndarray, grid: PhaseGrid, dq: int = 0, dp: int = 0,
                    scheme: str = "spectral") -> np.ndarray:
    """Mixed partial derivative ∂_Q^dq ∂_P^dp of sampled values."""
    if dq == 0 and dp == 0:
        return values
    real = not np.iscomplexobj(values)
    if scheme == "spectral":
        F = np.fft.fft2(values)
        mult = _wavenumbers(grid.n_q, grid.dq, dq)[:, None] * _wavenumbers(grid.n_p, grid.dp, dp)[None, :]
        out = np.fft.ifft2(F * mult)
        return out.real if real else out
    if scheme == "fd4":
        return _fd4(_fd4(values, grid.dq, 0, dq), grid.dp, 1, dp)
    raise ValueError(f"unknown derivative scheme {scheme!r}")


def field_jet(values: np.ndarray, grid: PhaseGrid, order: int, scheme: str = "spectral") -> Jet:
    """All derivatives up to ``order``; spectral jets share one forward FFT."""
    vals = {}
    if scheme == "spectral":
        real = not np.iscomplexobj(values)
        F = np.fft.fft2(values)
        for i in range(order + 1):
            for j in range(order + 1 - i):
                if i == j == 0:
                    vals[(0, 0)] = values
                    continue
                mult = _wavenumbers(grid.n_q, grid.dq, i)[:, None] * _wavenumbers(grid.n_p, grid.dp, j)[None, :]
                out = np.fft.ifft2(F * mult)
                vals[(i, j)] = out.real if real else out
    else:
        for i in range(order + 1):
            for j in range(order + 1 - i):
                vals[(i, j)] = grid_derivative(values, grid, i, j, scheme)
    return Jet(vals, order)


def to_jet(x: FieldLike, grid: PhaseGrid, order: int, scheme: str = "spectral") -> Jet:
    if isinstance(x, Symbol):
        return x.jet(grid, order)
    if isinstance(x, Field):
        if x.grid != grid:
            raise GridMismatchError("field lives on a different grid")
        return field_jet(x.values, grid, order, scheme)
    if isinstance(x, Number):
        return Symbol.const(x).jet(grid, order)
    if isinstance(x, Jet):
        return x
    raise TypeError(f"cannot differentiate object of type {type(x).__name__}")


def _common_grid(*xs, grid=None) -> PhaseGrid:
    for x in xs:
        if isinstance(x, Field):
            if grid is not None and x.grid != grid:
                raise GridMismatchError("operands live on different grids")
            grid = x.grid
    if grid is None:
        raise ValueError("a grid is required when no operand is a Field")
    return grid


def partial_derivative(f: FieldLike, axis, order: int = 1, scheme: str = "spectral",
                       grid: Optional[PhaseGrid] = None) -> Field:
    """∂^order f along 'Q' or 'P'; symbols are differentiated exactly."""
    ax = _axis(axis)
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    grid = _common_grid(f, grid=grid)
    d = (order, 0) if ax == 0 else (0, order)
    if isinstance(f, Symbol):
        return Field(f.evaluate(grid, *d), grid)
    if isinstance(f, Number):
        return Field(np.zeros(grid.shape), grid)
    return Field(grid_derivative(f.values, grid, *d, scheme=scheme), grid)


def poisson_bracket(A: FieldLike, B: FieldLike, scheme: str = "spectral",
                    grid: Optional[PhaseGrid] = None) -> Field:
    grid = _common_grid(A, B, grid=grid)
    a = to_jet(A, grid, 1, scheme)
    b = to_jet(B, grid, 1, scheme)
    return Field(a[1, 0] * b[0, 1] - a[0, 1] * b[1, 0], grid)


def star_from_jets(a: Jet, b: Jet, hbar: float, order: int):
    out = a[0, 0] * b[0, 0]
    if order >= 1:
        out = out + 0.5j * hbar * (a[1, 0] * b[0, 1] - a[0, 1] * b[1, 0])
    if order >= 2:
        out = out - (hbar**2 / 8) * (a[2, 0] * b[0, 2] - 2 * a[1, 1] * b[1, 1] + a[0, 2] * b[2, 0])
    return out


def moyal_star(A: FieldLike, B: FieldLike, hbar: Optional[float] = None, order: int = 2,
               scheme: str = "spectral", grid: Optional[PhaseGrid] = None) -> Field:
    """Moyal product expanded to ``order`` in ℏ (0, 1 or 2).

    Operands may be :class:`Field` samples (grid derivatives) or polynomial
    :class:`Symbol` objects (exact derivatives).
    """
    if order not in (0, 1, 2):
        raise ValueError("Moyal expansion is supported up to order 2")
    grid = _common_grid(A, B, grid=grid)
    hbar = grid.hbar if hbar is None else hbar
    a = to_jet(A, grid, order, scheme)
    b = to_jet(B, grid, order, scheme)
    return Field(star_from_jets(a, b, hbar, order), grid)


def phase_space_trace(f: FieldLike, grid: Optional[PhaseGrid] = None):
    """∫ dQ dP f / (2πℏ) as a plain Riemann sum."""
    grid = _common_grid(f, grid=grid)
    if isinstance(f, Field):
        vals = f.values
    elif isinstance(f, Symbol):
        vals = f.evaluate(grid)
    else:
        vals = np.full(grid.shape, f)
    total = np.sum(vals) * grid.cell_area / (2 * np.pi * grid.hbar)
    return complex(total) if np.iscomplexobj(total) else float(total)


# ---------------------------------------------------------------------------
# serialization

def save_field(field: Field, stem) -> tuple:
    """Write ``<stem>.bin`` (little-endian, C order) and ``<stem>.json``; return both paths."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    complex_flag = np.iscomplexobj(field.values)
    dtype = np.dtype("<c16") if complex_flag else np.dtype("<f8")
    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    np.ascontiguousarray(field.values, dtype=dtype).tofile(bin_path)
    desc = dict(field.grid.to_dict(), dtype="complex128" if complex_flag else "float64",
                order="C", byteorder="little", data=bin_path.name)
    json_path.write_text(json.dumps(desc, indent=2, sort_keys=True) + "\n")
    return bin_path, json_path


def load_field(stem) -> Field:
    stem = Path(stem)
    desc = json.loads(stem.with_suffix(".json").read_text())
    grid = PhaseGrid(tuple(desc["q_range"]), tuple(desc["p_range"]), desc["n_q"], desc["n_p"], desc["hbar"])
    dtype = np.dtype("<c16") if desc["dtype"] == "complex128" else np.dtype("<f8")
    values = np.fromfile(stem.parent / desc["data"], dtype=dtype).reshape(grid.shape)
    return Field(values.astype(dtype.newbyteorder("=")), grid)


def export_csv(field: Field, path, max_points: int = 1 << 20) -> Path:
    """Write ``Q,P,value`` rows (plus ``imag`` for complex fields)."""
    n = field.grid.n_q * field.grid.n_p
    if n > max_points:
        raise ValueError(f"grid has {n} points; CSV export is limited to {max_points}")
    Qm, Pm = field.grid.mesh()
    cols = [Qm.ravel(), Pm.ravel(), field.values.real.ravel()]
    header = "Q,P,value"
    if np.iscomplexobj(field.values):
        cols.append(field.values.imag.ravel())
        header += ",imag"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g")
    return path
